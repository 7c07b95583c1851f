#include "hfgcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace hfgcn {

namespace {

double evaluate(const LossFn& loss) {
  Tape tape(Tape::Mode::inference);
  const double v = loss(tape).value()[0];
  if (!std::isfinite(v)) throw std::domain_error("finite_diff_check: non-finite loss");
  return v;
}

}  // namespace

GradCheckResult finite_diff_check(const LossFn& loss, const std::vector<Parameter*>& params,
                                  const GradCheckOptions& options) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var l = loss(tape);
    if (!std::isfinite(l.value()[0])) throw std::domain_error("finite_diff_check: non-finite loss");
    tape.backward(l);
  }

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (Parameter* p : params) {
    const Tensor analytic = p->has_grad() ? p->grad() : Tensor(p->value().shape());
    const std::size_t n = p->value().size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (n > options.samples_per_parameter) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.samples_per_parameter);
    }
    for (std::size_t i : coords) {
      double& slot = p->mutable_value()[i];
      const double saved = slot;
      slot = saved + options.step;
      const double plus = evaluate(loss);
      slot = saved - options.step;
      const double minus = evaluate(loss);
      slot = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      ++result.coordinates;
      if (err > result.max_rel_error || result.worst_parameter.empty()) {
        if (err >= result.max_rel_error) {
          result.max_rel_error = err;
          result.worst_parameter = p->name();
        }
      }
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return result;
}

}  // namespace hfgcn
