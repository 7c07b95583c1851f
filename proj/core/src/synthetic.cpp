#include "hfgcn/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

#include "hfgcn/topology.hpp"

namespace hfgcn {

namespace {

// Standing pose in metres, NTU joint order, facing the camera at 3 m.
constexpr std::array<std::array<double, 3>, 25> kPose{{
    {0.00, 0.00, 3.00},    {0.00, 0.30, 3.00},   {0.00, 0.65, 3.00},   {0.00, 0.80, 3.00},
    {-0.18, 0.55, 3.00},   {-0.25, 0.30, 3.00},  {-0.28, 0.08, 3.00},  {-0.29, 0.00, 3.00},
    {0.18, 0.55, 3.00},    {0.25, 0.30, 3.00},   {0.28, 0.08, 3.00},   {0.29, 0.00, 3.00},
    {-0.10, -0.05, 3.00},  {-0.10, -0.45, 3.00}, {-0.10, -0.85, 3.00}, {-0.10, -0.90, 2.90},
    {0.10, -0.05, 3.00},   {0.10, -0.45, 3.00},  {0.10, -0.85, 3.00},  {0.10, -0.90, 2.90},
    {0.00, 0.55, 3.00},    {-0.30, -0.07, 3.00}, {-0.26, 0.00, 2.97},  {0.30, -0.07, 3.00},
    {0.26, 0.00, 2.97},
}};

struct PartMotion {
  double amplitude, frequency, phase;
  std::array<double, 3> direction;
};

}  // namespace

std::vector<SkeletonSequence> synth_dataset(const SynthConfig& cfg) {
  if (cfg.classes < 2) throw std::invalid_argument("synth_dataset: need at least 2 classes");
  if (cfg.joints != 25) throw std::invalid_argument("synth_dataset: only the 25-joint NTU layout is supported");
  if (cfg.per_class == 0 || cfg.frames < 2 || cfg.person_slots == 0) {
    throw std::invalid_argument("synth_dataset: per_class, frames >= 2 and person_slots must be positive");
  }
  if (!(cfg.noise >= 0.0)) throw std::invalid_argument("synth_dataset: noise must be >= 0");

  const LayoutInfo& layout = layout_info(SkeletonLayout::ntu25);
  const Partition parts = ntu25_partition("h2");
  const auto from_center = hop_distances(layout.bones, 25, layout.center_joint);
  // lever arm: hops from the part joint closest to the body centre, plus one
  std::array<double, 25> lever{};
  std::array<std::size_t, 25> part_of{};
  for (std::size_t p = 0; p < parts.size(); ++p) {
    std::size_t anchor = parts[p].front();
    for (auto j : parts[p])
      if (from_center[j] < from_center[anchor]) anchor = j;
    const auto hops = hop_distances(layout.bones, 25, anchor);
    for (auto j : parts[p]) {
      lever[j] = 1.0 + double(hops[j]);
      part_of[j] = p;
    }
  }

  std::mt19937_64 family_rng(cfg.seed ^ 0x5eedfa11ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<PartMotion>> families(cfg.classes);
  for (auto& fam : families) {
    for (std::size_t p = 0; p < parts.size(); ++p) {
      PartMotion m{};
      m.amplitude = 0.03 + 0.05 * unit(family_rng);
      m.frequency = 1.0 + std::floor(3.0 * unit(family_rng));
      m.phase = 2.0 * std::numbers::pi * unit(family_rng);
      double norm = 0.0;
      for (auto& d : m.direction) {
        d = gauss(family_rng);
        norm += d * d;
      }
      for (auto& d : m.direction) d /= std::sqrt(norm);
      fam.push_back(m);
    }
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<SkeletonSequence> out;
  out.reserve(cfg.classes * cfg.per_class);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    for (std::size_t n = 0; n < cfg.per_class; ++n) {
      char id[64];
      std::snprintf(id, sizeof id, "synth_c%03zu_n%03zu", c, n);
      SkeletonSequence seq(id, static_cast<std::uint32_t>(c), cfg.person_slots, cfg.frames, 25);
      std::vector<double> phase_jitter(parts.size()), amp_jitter(parts.size());
      std::vector<std::array<double, 3>> shake(parts.size());
      for (std::size_t p = 0; p < parts.size(); ++p) {
        phase_jitter[p] = cfg.noise * gauss(rng);
        amp_jitter[p] = 1.0 + 0.3 * cfg.noise * gauss(rng);
      }
      // slow per-joint drift, one half cycle over the clip, so differencing
      // in time or along bones does not blow it up
      std::array<std::array<double, 6>, 25> drift{};
      for (auto& d : drift)
        for (std::size_t k = 0; k < 3; ++k) {
          d[k] = 0.026 * cfg.noise * gauss(rng);
          d[k + 3] = 2.0 * std::numbers::pi * unit(rng);
        }
      // whole-body walk across the clip: moves joints, cancels on bones
      std::array<double, 3> walk{};
      for (auto& w : walk) w = 0.1 * cfg.noise * gauss(rng);
      for (std::size_t t = 0; t < cfg.frames; ++t) {
        const double tau = 2.0 * std::numbers::pi * double(t) / double(cfg.frames);
        // rigid per-part shake: moves joints, cancels on bones inside a part
        if (cfg.noise > 0.0)
          for (auto& sh : shake)
            for (auto& x : sh) x = 0.034 * cfg.noise * gauss(rng);
        for (std::size_t v = 0; v < 25; ++v) {
          const std::size_t p = part_of[v];
          const PartMotion& m = families[c][p];
          const double s = m.amplitude * amp_jitter[p] * lever[v] * std::sin(m.frequency * tau + m.phase + phase_jitter[p]);
          for (std::size_t k = 0; k < 3; ++k) {
            double noise = 0.0;
            if (cfg.noise > 0.0) noise = drift[v][k] * std::sin(0.5 * tau + drift[v][k + 3]) + shake[p][k] + 0.01 * cfg.noise * gauss(rng) +
                                     walk[k] * double(t) / double(cfg.frames - 1);
            seq.at(0, t, v, k) = static_cast<float>(kPose[v][k] + s * m.direction[k] + noise);
          }
        }
      }
      seq.present[0] = true;
      out.push_back(std::move(seq));
    }
  }
  return out;
}

}  // namespace hfgcn
