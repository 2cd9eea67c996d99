#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "leafvit/cnn.hpp"
#include "leafvit/errors.hpp"
#include "leafvit/trainer.hpp"
#include "leafvit/vit.hpp"

namespace leafvit {

// Every tunable of the pipeline in one flat record. Defaults here are the
// library-wide defaults; a config file and command-line flags override them
// in that order.
struct PipelineConfig {
  std::string dataset_root;
  std::string out_dir = "out";

  std::size_t synth_classes = 4;
  std::size_t synth_per_class = 64;
  std::size_t synth_size = 256;
  bool run_synth = false;

  std::size_t target_width = 64;
  double norm_min = 0.0;
  double norm_max = 1.0;
  bool per_channel_minmax = false;

  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t embed_dim = 64;
  std::size_t num_layers = 4;
  std::size_t num_heads = 4;
  std::size_t mlp_dim = 128;
  std::string variant = "none";  // none | tail | blockwise
  std::size_t tail_dim = 1024;
  double blockwise_factor = 0.75;

  std::string arch = "arch1";  // arch1 | arch2
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 25;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;

  std::uint64_t seed = 0;

  std::vector<std::string> pipeline_variants = {"none", "tail", "blockwise"};
  std::vector<std::string> pipeline_archs = {"arch1", "arch2"};

  Variant parse_variant(const std::string& name) const {
    if (name == "none") return Variant::none();
    if (name == "tail") return Variant::tail(tail_dim);
    if (name == "blockwise") return Variant::block_wise(blockwise_factor);
    throw UsageError("unknown variant \"" + name +
                     "\", expected none, tail or blockwise");
  }

  ViTConfig vit_config(const std::string& variant_name) const {
    ViTConfig cfg;
    cfg.image_size = image_size;
    cfg.patch_size = patch_size;
    cfg.embed_dim = embed_dim;
    cfg.num_layers = num_layers;
    cfg.num_heads = num_heads;
    cfg.mlp_dim = mlp_dim;
    cfg.variant = parse_variant(variant_name);
    cfg.seed = seed;
    cfg.validate();
    return cfg;
  }
  ViTConfig vit_config() const { return vit_config(variant); }

  ArchitectureSpec arch_spec(const std::string& arch_name,
                             std::size_t num_classes) const {
    if (arch_name == "arch1") return ArchitectureSpec::arch1(num_classes);
    if (arch_name == "arch2") return ArchitectureSpec::arch2(num_classes);
    throw UsageError("unknown architecture \"" + arch_name +
                     "\", expected arch1 or arch2");
  }
  ArchitectureSpec arch_spec(std::size_t num_classes) const {
    return arch_spec(arch, num_classes);
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.learning_rate = learning_rate;
    t.batch_size = batch_size;
    t.max_epochs = max_epochs;
    t.patience = patience;
    t.beta1 = beta1;
    t.beta2 = beta2;
    t.eps_adam = eps_adam;
    t.seed = seed;
    t.train_frac = train_frac;
    t.val_frac = val_frac;
    t.test_frac = test_frac;
    t.validate();
    return t;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& value, std::size_t line) {
  T out{};
  const char* begin = value.data();
  const char* end = begin + value.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end)
    throw ParseError("config: bad numeric value \"" + value + "\"", line);
  return out;
}

// libstdc++ from_chars for doubles is fine, but keep one path for all
// numerics anyway.
template <>
inline double parse_number<double>(const std::string& value, std::size_t line) {
  try {
    std::size_t used = 0;
    double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ParseError("config: bad numeric value \"" + value + "\"", line);
  }
}

inline bool parse_bool(const std::string& value, std::size_t line) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ParseError("config: bad boolean \"" + value + "\" (use 0/1/true/false)",
                   line);
}

inline std::vector<std::string> parse_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

// key=value lines; '#' starts a comment; unknown keys are rejected with the
// offending line number. Later assignments override earlier ones.
inline PipelineConfig parse_config(const std::string& text,
                                   PipelineConfig base = {}) {
  PipelineConfig cfg = std::move(base);
  std::stringstream ss(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(ss, raw)) {
    ++line_no;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config: expected key=value", line_no);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));

    if (key == "dataset_root") cfg.dataset_root = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "synth_classes") cfg.synth_classes = detail::parse_number<std::size_t>(value, line_no);
    else if (key == "synth_per_class") cfg.synth_per_class = detail::parse_number<std::size_t>(value, line_no);
    else if (key == "synth_size") cfg.synth_size = detail::parse_number<std::size_t>(value, line_no);
    else if (key == "run_synth") cfg.run_synth = detail::parse_bool(value, line_no);
    else if (key == "target_width") cfg.target_width = detail::parse_number<std::size_t>(value, line_no);
    else if (key == "norm_min") cfg.norm_min = detail::parse_number<double>(value, line_no);
    else if (key == "norm_max") cfg.norm_max = detail::parse_number<double>(value, line_no);
    else if (key == "per_channel_minmax") cfg.per_channel_minmax = detail::parse_bool(value, line_no);
    else if (key == "image_size") cfg.image_size = detail::parse_number<std::size_t>(value, line_no);
    else if (key == "patch_size") cfg.patch_size = detail::parse_number<std::size_t>(value, line_no);
    else if (key == "embed_dim") cfg.embed_dim = detail::parse_number<std::size_t>(value, line_no);
    else if (key == "num_layers") cfg.num_layers = detail::parse_number<std::size_t>(value, line_no);
    else if (key == "num_heads") cfg.num_heads = detail::parse_number<std::size_t>(value, line_no);
    else if (key == "mlp_dim") cfg.mlp_dim = detail::parse_number<std::size_t>(value, line_no);
    else if (key == "variant") cfg.variant = value;
    else if (key == "tail_dim") cfg.tail_dim = detail::parse_number<std::size_t>(value, line_no);
    else if (key == "blockwise_factor") cfg.blockwise_factor = detail::parse_number<double>(value, line_no);
    else if (key == "arch") cfg.arch = value;
    else if (key == "learning_rate") cfg.learning_rate = detail::parse_number<double>(value, line_no);
    else if (key == "batch_size") cfg.batch_size = detail::parse_number<std::size_t>(value, line_no);
    else if (key == "max_epochs") cfg.max_epochs = detail::parse_number<std::size_t>(value, line_no);
    else if (key == "patience") cfg.patience = detail::parse_number<std::size_t>(value, line_no);
    else if (key == "beta1") cfg.beta1 = detail::parse_number<double>(value, line_no);
    else if (key == "beta2") cfg.beta2 = detail::parse_number<double>(value, line_no);
    else if (key == "eps_adam") cfg.eps_adam = detail::parse_number<double>(value, line_no);
    else if (key == "train_frac") cfg.train_frac = detail::parse_number<double>(value, line_no);
    else if (key == "val_frac") cfg.val_frac = detail::parse_number<double>(value, line_no);
    else if (key == "test_frac") cfg.test_frac = detail::parse_number<double>(value, line_no);
    else if (key == "seed") cfg.seed = detail::parse_number<std::uint64_t>(value, line_no);
    else if (key == "pipeline_variants") cfg.pipeline_variants = detail::parse_list(value);
    else if (key == "pipeline_archs") cfg.pipeline_archs = detail::parse_list(value);
    else
      throw ParseError("config: unknown key \"" + key + "\"", line_no);
  }
  return cfg;
}

// Canonical key=value rendering of a config, used by the run manifest.
inline std::string config_to_text(const PipelineConfig& c) {
  std::ostringstream out;
  out.precision(12);
  auto list = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
      s += (i ? "," : "") + v[i];
    return s;
  };
  out << "dataset_root=" << c.dataset_root << '\n'
      << "out_dir=" << c.out_dir << '\n'
      << "synth_classes=" << c.synth_classes << '\n'
      << "synth_per_class=" << c.synth_per_class << '\n'
      << "synth_size=" << c.synth_size << '\n'
      << "run_synth=" << (c.run_synth ? 1 : 0) << '\n'
      << "target_width=" << c.target_width << '\n'
      << "norm_min=" << c.norm_min << '\n'
      << "norm_max=" << c.norm_max << '\n'
      << "per_channel_minmax=" << (c.per_channel_minmax ? 1 : 0) << '\n'
      << "image_size=" << c.image_size << '\n'
      << "patch_size=" << c.patch_size << '\n'
      << "embed_dim=" << c.embed_dim << '\n'
      << "num_layers=" << c.num_layers << '\n'
      << "num_heads=" << c.num_heads << '\n'
      << "mlp_dim=" << c.mlp_dim << '\n'
      << "variant=" << c.variant << '\n'
      << "tail_dim=" << c.tail_dim << '\n'
      << "blockwise_factor=" << c.blockwise_factor << '\n'
      << "arch=" << c.arch << '\n'
      << "learning_rate=" << c.learning_rate << '\n'
      << "batch_size=" << c.batch_size << '\n'
      << "max_epochs=" << c.max_epochs << '\n'
      << "patience=" << c.patience << '\n'
      << "beta1=" << c.beta1 << '\n'
      << "beta2=" << c.beta2 << '\n'
      << "eps_adam=" << c.eps_adam << '\n'
      << "train_frac=" << c.train_frac << '\n'
      << "val_frac=" << c.val_frac << '\n'
      << "test_frac=" << c.test_frac << '\n'
      << "seed=" << c.seed << '\n'
      << "pipeline_variants=" << list(c.pipeline_variants) << '\n'
      << "pipeline_archs=" << list(c.pipeline_archs) << '\n';
  return out.str();
}

}  // namespace leafvit
