#include "hfgcn/model_config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <stdexcept>

namespace hfgcn {

std::vector<BlockSpec> ModelConfig::standard_blocks() {
  return {{3, 64, 1},    {64, 64, 1},   {64, 64, 1},   {64, 64, 1},   {64, 128, 2},
          {128, 128, 1}, {128, 128, 1}, {128, 256, 2}, {256, 256, 1}, {256, 256, 1}};
}

std::vector<BlockSpec> ModelConfig::reduced_blocks(std::size_t count, std::size_t width) {
  std::vector<BlockSpec> blocks;
  std::size_t in = 3;
  for (std::size_t i = 0; i < count; ++i) {
    const bool second_half = count > 1 && i >= count / 2;
    const std::size_t out = second_half ? width * 2 : width;
    const std::size_t stride = count > 1 && i == count / 2 ? 2 : 1;
    blocks.push_back({in, out, stride});
    in = out;
  }
  return blocks;
}

ModelConfig ModelConfig::standard() {
  ModelConfig cfg;
  cfg.blocks = standard_blocks();
  return cfg;
}

std::size_t ModelConfig::embed_width(std::size_t in_channels) const {
  return in_channels == 3 ? 8 : in_channels / reduction;
}

void ModelConfig::validate() const {
  const LayoutInfo& info = layout_info(layout);
  if (joints != info.joints) {
    throw std::invalid_argument("model config: " + std::to_string(joints) + " joints but layout " + info.name +
                                " has " + std::to_string(info.joints));
  }
  if (frames == 0 || persons == 0) throw std::invalid_argument("model config: frames and persons must be positive");
  if (blocks.empty()) throw std::invalid_argument("model config: no blocks");
  if (blocks.front().in_channels != 3) throw std::invalid_argument("model config: first block must take 3 channels");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const BlockSpec& b = blocks[i];
    if (i > 0 && b.in_channels != blocks[i - 1].out_channels) {
      throw std::invalid_argument("model config: block " + std::to_string(i) + " input width does not chain");
    }
    if (b.stride != 1 && b.stride != 2) throw std::invalid_argument("model config: strides must be 1 or 2");
    if (b.out_channels < 3) throw std::invalid_argument("model config: blocks need at least 3 output channels");
    if (b.in_channels != 3 && (reduction == 0 || b.in_channels % reduction != 0)) {
      throw std::invalid_argument("model config: reduction " + std::to_string(reduction) + " does not divide " +
                                  std::to_string(b.in_channels));
    }
  }
  if (num_classes < 2) throw std::invalid_argument("model config: need at least 2 classes");
  if (variant == ModelVariant::hfgcn) {
    if (hypergraphs.empty() || hypergraphs.size() > 3) {
      throw std::invalid_argument("model config: enable between one and three hypergraphs");
    }
    for (std::size_t i = 0; i < hypergraphs.size(); ++i) {
      const auto& h = hypergraphs[i];
      if (h != "h1" && h != "h2" && h != "h3") throw std::invalid_argument("model config: unknown hypergraph " + h);
      if (std::find(hypergraphs.begin(), hypergraphs.begin() + static_cast<long>(i), h) !=
          hypergraphs.begin() + static_cast<long>(i)) {
        throw std::invalid_argument("model config: hypergraph " + h + " listed twice");
      }
    }
  }
}

std::string variant_name(ModelVariant v) { return v == ModelVariant::hfgcn ? "hfgcn" : "baseline"; }
ModelVariant parse_variant(const std::string& s) {
  if (s == "hfgcn") return ModelVariant::hfgcn;
  if (s == "baseline") return ModelVariant::baseline;
  throw std::invalid_argument("unknown model variant '" + s + "' (hfgcn|baseline)");
}
std::string ham_mode_name(HamMode m) { return m == HamMode::per_branch ? "per-branch" : "summed"; }
HamMode parse_ham_mode(const std::string& s) {
  if (s == "per-branch") return HamMode::per_branch;
  if (s == "summed") return HamMode::summed;
  throw std::invalid_argument("unknown ham mode '" + s + "' (per-branch|summed)");
}
std::string xi_input_name(XiInput x) { return x == XiInput::hx ? "hx" : "x"; }
XiInput parse_xi_input(const std::string& s) {
  if (s == "hx") return XiInput::hx;
  if (s == "x") return XiInput::x;
  throw std::invalid_argument("unknown xi input '" + s + "' (hx|x)");
}

namespace {

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw std::invalid_argument(key + ": expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  return parts;
}

}  // namespace

std::string format_blocks(const std::vector<BlockSpec>& blocks) {
  std::string out;
  for (const auto& b : blocks) {
    if (!out.empty()) out += ',';
    out += std::to_string(b.in_channels) + ':' + std::to_string(b.out_channels) + ':' + std::to_string(b.stride);
  }
  return out;
}

std::vector<BlockSpec> parse_blocks(const std::string& text) {
  std::vector<BlockSpec> blocks;
  for (const auto& item : split(text, ',')) {
    const auto f = split(item, ':');
    if (f.size() != 3) throw std::invalid_argument("blocks: expected in:out:stride, got '" + item + "'");
    blocks.push_back({parse_count("blocks", f[0]), parse_count("blocks", f[1]), parse_count("blocks", f[2])});
  }
  return blocks;
}

std::string format_model_config(const ModelConfig& cfg) {
  std::string hs;
  for (const auto& h : cfg.hypergraphs) hs += (hs.empty() ? "" : ",") + h;
  std::ostringstream os;
  os << "variant=" << variant_name(cfg.variant) << '\n'
     << "layout=" << layout_info(cfg.layout).name << '\n'
     << "joints=" << cfg.joints << '\n'
     << "frames=" << cfg.frames << '\n'
     << "persons=" << cfg.persons << '\n'
     << "blocks=" << format_blocks(cfg.blocks) << '\n'
     << "reduction=" << cfg.reduction << '\n'
     << "num_classes=" << cfg.num_classes << '\n'
     << "hypergraphs=" << hs << '\n'
     << "ham_mode=" << ham_mode_name(cfg.ham_mode) << '\n'
     << "xi_input=" << xi_input_name(cfg.xi_input) << '\n'
     << "hypergraph_dir=" << cfg.hypergraph_dir << '\n';
  return os.str();
}

bool set_model_key(ModelConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "variant") cfg.variant = parse_variant(value);
  else if (key == "layout") cfg.layout = parse_layout(value);
  else if (key == "joints") cfg.joints = parse_count(key, value);
  else if (key == "frames") cfg.frames = parse_count(key, value);
  else if (key == "persons") cfg.persons = parse_count(key, value);
  else if (key == "blocks") {
    if (value == "standard") cfg.blocks = ModelConfig::standard_blocks();
    else cfg.blocks = parse_blocks(value);
  } else if (key == "reduction") cfg.reduction = parse_count(key, value);
  else if (key == "num_classes") cfg.num_classes = parse_count(key, value);
  else if (key == "hypergraphs") cfg.hypergraphs = value.empty() ? std::vector<std::string>{} : split(value, ',');
  else if (key == "ham_mode") cfg.ham_mode = parse_ham_mode(value);
  else if (key == "xi_input") cfg.xi_input = parse_xi_input(value);
  else if (key == "hypergraph_dir") cfg.hypergraph_dir = value;
  else return false;
  return true;
}

}  // namespace hfgcn
