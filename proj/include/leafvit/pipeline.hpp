#pragma once

#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "leafvit/config.hpp"
#include "leafvit/dataset.hpp"
#include "leafvit/metrics.hpp"
#include "leafvit/serial.hpp"
#include "leafvit/trainer.hpp"

namespace leafvit {

struct ExtractSummary {
  std::size_t images = 0;
  std::size_t feature_dim = 0;
  std::filesystem::path out_path;
};

// decode -> thumbnail resize -> min-max normalize -> extract, over the whole
// dataset tree, emitting one VITF file. Extractor weights are seeded from
// the config unless a VITL path is given.
inline ExtractSummary run_extract(const PipelineConfig& cfg,
                                  const std::filesystem::path& dataset_root,
                                  const std::optional<std::filesystem::path>& vit_weights_path,
                                  const std::filesystem::path& out_vitf,
                                  const std::optional<std::filesystem::path>& save_weights_path = {},
                                  const std::string& variant_name = "") {
  const ViTConfig vit_cfg =
      variant_name.empty() ? cfg.vit_config() : cfg.vit_config(variant_name);
  const DatasetLayout layout = scan_dataset(dataset_root);
  ViTWeights weights =
      vit_weights_path
          ? vit_weights_from_tensors(decode_vitl(read_file(*vit_weights_path)), vit_cfg)
          : init_weights(vit_cfg);
  if (save_weights_path)
    write_file_atomic(*save_weights_path, encode_vitl(vit_weights_to_tensors(weights)));

  FeatureFile out;
  out.class_names = layout.class_names;
  out.feature_dim = feature_length(vit_cfg);
  for (std::size_t c = 0; c < layout.files.size(); ++c) {
    for (const auto& path : layout.files[c]) {
      const Image raw = load_ppm(path);
      const Image resized = thumbnail_resize(raw, cfg.target_width);
      const NormalizedImage normed = minmax_normalize(
          resized, cfg.norm_min, cfg.norm_max, cfg.per_channel_minmax);
      Sample s;
      s.features = extract(normed, vit_cfg, weights);
      s.label = static_cast<std::uint32_t>(c);
      s.features.label = s.label;
      out.records.push_back(std::move(s));
    }
  }
  write_file_atomic(out_vitf, encode_vitf(out));
  return {out.records.size(), out.feature_dim, out_vitf};
}

struct TrainSummary {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  double best_val_acc = 0.0;
  std::filesystem::path weights_path;
  std::filesystem::path history_path;
};

// Trains one classifier head on a VITF feature file; writes the checkpointed
// weights (VITL) and the per-epoch history CSV.
inline TrainSummary run_train(const PipelineConfig& cfg,
                              const std::filesystem::path& vitf_path,
                              const std::filesystem::path& out_vitl,
                              const std::filesystem::path& out_history,
                              const std::string& arch_name = "") {
  const FeatureFile features = decode_vitf(read_file(vitf_path));
  if (features.records.empty()) throw DataError("train: empty feature file");
  const ArchitectureSpec arch =
      cfg.arch_spec(arch_name.empty() ? cfg.arch : arch_name,
                    features.class_names.size());
  const TrainConfig tc = cfg.train_config();

  TrainResult result = train(features.records, arch, tc);
  write_file_atomic(out_vitl, encode_vitl(cnn_weights_to_tensors(result.weights)));
  write_text_atomic(out_history, history_to_csv(result.history));

  TrainSummary s;
  s.epochs_run = result.history.epochs.size();
  s.best_epoch = result.history.best_epoch;
  const EpochRecord& best = result.history.epochs[result.history.best_epoch - 1];
  s.best_val_loss = best.val_loss;
  s.best_val_acc = best.val_acc;
  s.weights_path = out_vitl;
  s.history_path = out_history;
  return s;
}

struct EvalSummary {
  ClassReport per_class;
  SummaryReport summary;
  std::size_t test_count = 0;
  double test_accuracy = 0.0;
  std::filesystem::path report_path;
  std::filesystem::path csv_path;
};

// Evaluates saved weights on the test split, which is reconstructed from the
// same seed and fractions the trainer used.
inline EvalSummary run_evaluate(const PipelineConfig& cfg,
                                const std::filesystem::path& vitf_path,
                                const std::filesystem::path& vitl_path,
                                const std::filesystem::path& report_path,
                                const std::filesystem::path& csv_path) {
  const FeatureFile features = decode_vitf(read_file(vitf_path));
  const LoadedCNN model = cnn_weights_from_tensors(decode_vitl(read_file(vitl_path)));
  if (model.spec.num_classes != features.class_names.size())
    throw ShapeError("evaluate: weights expect " +
                     std::to_string(model.spec.num_classes) +
                     " classes, features carry " +
                     std::to_string(features.class_names.size()));

  std::vector<std::uint32_t> labels(features.records.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    labels[i] = features.records[i].label;
  const SplitIndices split = stratified_split(labels, cfg.train_frac,
                                              cfg.val_frac, cfg.test_frac, cfg.seed);

  std::vector<Sample> test_set;
  std::vector<std::uint32_t> truths;
  test_set.reserve(split.test.size());
  for (std::size_t i : split.test) {
    test_set.push_back(features.records[i]);
    truths.push_back(features.records[i].label);
  }
  const std::vector<std::uint32_t> preds =
      predict_batch(test_set, model.spec, model.weights);

  const ConfusionMatrix cm = confusion_matrix(
      truths, preds, features.class_names.size(), features.class_names);
  EvalSummary s;
  s.per_class = per_class_metrics(cm);
  s.summary = averaged_metrics(cm);
  s.test_count = test_set.size();
  s.test_accuracy = 1.0 - s.summary.hamming_loss;
  s.report_path = report_path;
  s.csv_path = csv_path;

  write_text_atomic(report_path,
                    render_report(s.per_class, s.summary, features.class_names));
  write_text_atomic(csv_path,
                    report_to_csv(s.per_class, s.summary, features.class_names));
  return s;
}

// Re-renders the fixed-width text table from a metrics CSV produced by
// run_evaluate.
inline std::string run_report(const std::filesystem::path& csv_path) {
  const std::vector<std::uint8_t> bytes = read_file(csv_path);
  std::stringstream ss(std::string(bytes.begin(), bytes.end()));
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(ss, line) || line != "name,precision,recall,f1,support")
    throw ParseError("report: bad CSV header", 1);
  ++line_no;

  std::vector<std::string> names;
  ClassReport per_class;
  SummaryReport summary;
  bool saw_micro = false, saw_macro = false, saw_hamming = false;
  while (std::getline(ss, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    while (fields.size() < 5) fields.push_back("");
    if (fields.size() != 5)
      throw ParseError("report: expected 5 CSV fields", line_no);

    auto num = [&](const std::string& v) {
      return detail::parse_number<double>(v, line_no);
    };
    if (fields[0] == "micro_avg") {
      summary.micro_precision = num(fields[1]);
      summary.micro_recall = num(fields[2]);
      summary.micro_f1 = num(fields[3]);
      saw_micro = true;
    } else if (fields[0] == "macro_avg") {
      summary.macro_precision = num(fields[1]);
      summary.macro_recall = num(fields[2]);
      summary.macro_f1 = num(fields[3]);
      saw_macro = true;
    } else if (fields[0] == "hamming_loss") {
      summary.hamming_loss = num(fields[1]);
      saw_hamming = true;
    } else {
      ClassMetrics m;
      m.precision = num(fields[1]);
      m.recall = num(fields[2]);
      m.f1 = num(fields[3]);
      m.support = detail::parse_number<std::uint64_t>(fields[4], line_no);
      names.push_back(fields[0]);
      per_class.push_back(m);
    }
  }
  if (!saw_micro || !saw_macro || !saw_hamming)
    throw ParseError("report: missing micro_avg/macro_avg/hamming_loss rows",
                     line_no);
  return render_report(per_class, summary, names);
}

struct PipelineCell {
  std::string variant;
  std::string arch;
  TrainSummary train;
  EvalSummary eval;
};

struct PipelineSummary {
  std::filesystem::path dataset_root;
  std::vector<PipelineCell> cells;
  std::filesystem::path manifest_path;
};

namespace detail {

template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const UsageError& e) {
    throw UsageError("stage " + stage + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError("stage " + stage + ": " + e.what(), e.offset());
  } catch (const ShapeError& e) {
    throw ShapeError("stage " + stage + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError("stage " + stage + ": " + e.what());
  }
}

inline std::string hash_hex_of_file(const std::filesystem::path& p) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64_bytes(read_file(p))));
  return buf;
}

}  // namespace detail

// Full grid: optional synthesis, one extraction per variant, one training and
// evaluation per (variant, arch) cell, and a manifest recording the config,
// artifact hashes and headline metrics.
inline PipelineSummary run_pipeline(const PipelineConfig& cfg,
                                    std::ostream* log = nullptr) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw DataError("cannot create " + cfg.out_dir + ": " + ec.message());

  PipelineSummary result;
  result.dataset_root = cfg.dataset_root;
  if (cfg.run_synth || cfg.dataset_root.empty()) {
    result.dataset_root = std::filesystem::path(cfg.out_dir) / "dataset";
    detail::run_stage("synth", [&] {
      synth_dataset(result.dataset_root, cfg.synth_classes, cfg.synth_per_class,
                    cfg.synth_size, cfg.seed);
      return 0;
    });
    if (log)
      *log << "synth: " << cfg.synth_classes << " classes x "
           << cfg.synth_per_class << " images -> " << result.dataset_root.string()
           << "\n";
  }

  const std::filesystem::path out_dir(cfg.out_dir);
  std::vector<std::filesystem::path> artifacts;

  for (const std::string& variant : cfg.pipeline_variants) {
    const std::filesystem::path vitf = out_dir / ("features_" + variant + ".vitf");
    const ExtractSummary ex = detail::run_stage("extract(" + variant + ")", [&] {
      return run_extract(cfg, result.dataset_root, std::nullopt, vitf,
                         std::nullopt, variant);
    });
    artifacts.push_back(vitf);
    if (log)
      *log << "extract variant=" << variant << ": " << ex.images
           << " images, dim " << ex.feature_dim << " -> " << vitf.string() << "\n";

    for (const std::string& arch : cfg.pipeline_archs) {
      const std::string cell = variant + "_" + arch;
      const std::filesystem::path vitl = out_dir / ("weights_" + cell + ".vitl");
      const std::filesystem::path hist = out_dir / ("history_" + cell + ".csv");
      const std::filesystem::path rep = out_dir / ("report_" + cell + ".txt");
      const std::filesystem::path repcsv = out_dir / ("report_" + cell + ".csv");

      PipelineCell pc;
      pc.variant = variant;
      pc.arch = arch;
      pc.train = detail::run_stage("train(" + cell + ")", [&] {
        return run_train(cfg, vitf, vitl, hist, arch);
      });
      pc.eval = detail::run_stage("evaluate(" + cell + ")", [&] {
        return run_evaluate(cfg, vitf, vitl, rep, repcsv);
      });
      artifacts.push_back(vitl);
      artifacts.push_back(hist);
      artifacts.push_back(rep);
      artifacts.push_back(repcsv);
      if (log)
        *log << "train " << cell << ": best epoch " << pc.train.best_epoch << "/"
             << pc.train.epochs_run << ", val acc " << pc.train.best_val_acc
             << "; test acc " << pc.eval.test_accuracy << "\n";
      result.cells.push_back(std::move(pc));
    }
  }

  std::ostringstream manifest;
  {
    std::stringstream cfg_lines(config_to_text(cfg));
    std::string line;
    while (std::getline(cfg_lines, line)) manifest << "config." << line << '\n';
  }
  manifest << "dataset_root=" << result.dataset_root.string() << '\n';
  for (const auto& p : artifacts)
    manifest << "hash." << p.filename().string() << "="
             << detail::hash_hex_of_file(p) << '\n';
  manifest.precision(9);
  for (const PipelineCell& pc : result.cells) {
    const std::string key = "metrics." + pc.variant + "." + pc.arch + ".";
    manifest << key << "best_epoch=" << pc.train.best_epoch << '\n'
             << key << "epochs_run=" << pc.train.epochs_run << '\n'
             << key << "micro_f1=" << pc.eval.summary.micro_f1 << '\n'
             << key << "macro_f1=" << pc.eval.summary.macro_f1 << '\n'
             << key << "hamming_loss=" << pc.eval.summary.hamming_loss << '\n'
             << key << "test_accuracy=" << pc.eval.test_accuracy << '\n';
  }
  result.manifest_path = out_dir / "manifest.txt";
  write_text_atomic(result.manifest_path, manifest.str());
  return result;
}

}  // namespace leafvit
