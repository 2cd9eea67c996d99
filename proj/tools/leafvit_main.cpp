// leafvit: ViT feature extraction with linear-projection reduction variants,
// CNN classifier training, and confusion-matrix evaluation, end to end over
// PPM image datasets.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "leafvit/config.hpp"
#include "leafvit/pipeline.hpp"

namespace {

using leafvit::PipelineConfig;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::string> arch;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "key=value config file");
  cmd->add_option("--seed", flags.seed, "PRNG seed (overrides config)");
  cmd->add_option("--variant", flags.variant,
                  "feature variant: none, tail or blockwise")
      ->check(CLI::IsMember({"none", "tail", "blockwise"}));
  cmd->add_option("--arch", flags.arch, "classifier head: arch1 or arch2")
      ->check(CLI::IsMember({"arch1", "arch2"}));
  cmd->add_option("--out", flags.out, "output path or directory");
}

PipelineConfig load_config(const CommonFlags& flags) {
  PipelineConfig cfg;
  if (!flags.config_path.empty()) {
    std::ifstream in(flags.config_path);
    if (!in) throw leafvit::DataError("cannot open config " + flags.config_path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    cfg = leafvit::parse_config(text, cfg);
  }
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.variant) cfg.variant = *flags.variant;
  if (flags.arch) cfg.arch = *flags.arch;
  if (flags.out) cfg.out_dir = *flags.out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "ViT feature extraction and CNN classification over PPM image datasets"};
  app.require_subcommand(1);

  CommonFlags synth_flags, extract_flags, train_flags, eval_flags,
      pipeline_flags, report_flags;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic PPM dataset");
  std::size_t synth_classes = 4, synth_per_class = 64, synth_size = 256;
  synth->add_option("--classes", synth_classes, "number of classes");
  synth->add_option("--per-class", synth_per_class, "images per class");
  synth->add_option("--size", synth_size, "square image side in pixels");
  add_common(synth, synth_flags);

  // extract
  auto* extract = app.add_subcommand(
      "extract", "extract ViT features from a dataset into a VITF file");
  std::string extract_dataset;
  std::string extract_out = "features.vitf";
  std::string extract_weights, extract_save_weights;
  extract->add_option("--dataset", extract_dataset, "dataset root directory")
      ->required();
  extract->add_option("--features", extract_out, "output VITF path");
  extract->add_option("--vit-weights", extract_weights,
                      "load extractor weights from a VITL file");
  extract->add_option("--save-vit-weights", extract_save_weights,
                      "also write the extractor weights to a VITL file");
  add_common(extract, extract_flags);

  // train
  auto* train = app.add_subcommand("train", "train a classifier on a VITF file");
  std::string train_features;
  std::string train_weights = "weights.vitl";
  std::string train_history = "history.csv";
  train->add_option("--features", train_features, "input VITF path")->required();
  train->add_option("--weights", train_weights, "output VITL path");
  train->add_option("--history", train_history, "output history CSV path");
  add_common(train, train_flags);

  // evaluate
  auto* evaluate = app.add_subcommand(
      "evaluate", "evaluate saved weights on the held-out test split");
  std::string eval_features, eval_weights;
  std::string eval_report = "report.txt";
  std::string eval_csv = "report.csv";
  evaluate->add_option("--features", eval_features, "input VITF path")->required();
  evaluate->add_option("--weights", eval_weights, "input VITL path")->required();
  evaluate->add_option("--report", eval_report, "output text report path");
  evaluate->add_option("--csv", eval_csv, "output metrics CSV path");
  add_common(evaluate, eval_flags);

  // pipeline
  auto* pipeline = app.add_subcommand(
      "pipeline", "run synth/extract/train/evaluate over the configured grid");
  std::string pipeline_dataset;
  pipeline->add_option("--dataset", pipeline_dataset,
                       "existing dataset root (otherwise one is synthesized)");
  add_common(pipeline, pipeline_flags);

  // report
  auto* report =
      app.add_subcommand("report", "render the text table from a metrics CSV");
  std::string report_csv;
  report->add_option("--csv", report_csv, "metrics CSV from evaluate")->required();
  add_common(report, report_flags);

  try {
    app.parse(argc, argv);

    if (synth->parsed()) {
      PipelineConfig cfg = load_config(synth_flags);
      const std::string out = synth_flags.out.value_or("dataset");
      leafvit::synth_dataset(out, synth_classes, synth_per_class, synth_size,
                             cfg.seed);
      std::cout << "wrote " << synth_classes * synth_per_class << " images ("
                << synth_classes << " classes) under " << out << "\n";
    } else if (extract->parsed()) {
      PipelineConfig cfg = load_config(extract_flags);
      std::optional<std::filesystem::path> weights_in, weights_out;
      if (!extract_weights.empty()) weights_in = extract_weights;
      if (!extract_save_weights.empty()) weights_out = extract_save_weights;
      const auto s = leafvit::run_extract(cfg, extract_dataset, weights_in,
                                          extract_out, weights_out);
      std::cout << "extracted " << s.images << " feature vectors of dim "
                << s.feature_dim << " -> " << s.out_path.string() << "\n";
    } else if (train->parsed()) {
      PipelineConfig cfg = load_config(train_flags);
      const auto s = leafvit::run_train(cfg, train_features, train_weights,
                                        train_history);
      std::printf("trained %s: best epoch %zu/%zu, val loss %.6f, val acc %.4f\n",
                  cfg.arch.c_str(), s.best_epoch, s.epochs_run, s.best_val_loss,
                  s.best_val_acc);
      std::cout << "weights -> " << s.weights_path.string() << ", history -> "
                << s.history_path.string() << "\n";
    } else if (evaluate->parsed()) {
      PipelineConfig cfg = load_config(eval_flags);
      const auto s = leafvit::run_evaluate(cfg, eval_features, eval_weights,
                                           eval_report, eval_csv);
      std::printf("evaluated %zu test samples: micro-F1 %.3f, hamming %.3f\n",
                  s.test_count, s.summary.micro_f1, s.summary.hamming_loss);
      std::cout << "report -> " << s.report_path.string() << "\n";
    } else if (pipeline->parsed()) {
      PipelineConfig cfg = load_config(pipeline_flags);
      if (!pipeline_dataset.empty()) cfg.dataset_root = pipeline_dataset;
      const auto s = leafvit::run_pipeline(cfg, &std::cout);
      std::cout << "manifest -> " << s.manifest_path.string() << "\n";
    } else if (report->parsed()) {
      std::cout << leafvit::run_report(report_csv);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help text or the parse error
    return code == 0 ? 0 : 1;
  } catch (const leafvit::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const leafvit::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const leafvit::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const leafvit::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
