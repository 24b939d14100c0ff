#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "tapnet/checkpoint.hpp"
#include "tapnet/data.hpp"
#include "tapnet/errors.hpp"
#include "tapnet/eval.hpp"
#include "tapnet/features.hpp"
#include "tapnet/model.hpp"

namespace tapnet::cli {

// Exit codes: 0 success, 2 usage/config, 3 data, 4 I/O.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitIo = 4;

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  double test_fraction = 0.2;
  std::string out_dir = "tapnet_out";
};

inline void set_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.model.seed = seed;
  cfg.train.seed = seed;
}

namespace detail_cli {

inline std::size_t parse_count(const std::string& key, const std::string& value) {
  try {
    const long long v = std::stoll(value);
    if (v < 0) throw std::invalid_argument("negative");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': expected a non-negative integer, got '" +
                     value + "'");
  }
}

inline double parse_real(const std::string& key, const std::string& value) {
  try {
    return std::stod(value);
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "': expected a number, got '" + value + "'");
  }
}

}  // namespace detail_cli

inline void apply_config_kv(RunConfig& cfg, const std::string& key,
                            const std::string& value) {
  using detail_cli::parse_count;
  using detail_cli::parse_real;
  if (key == "seed") {
    set_seed(cfg, parse_count(key, value));
  } else if (key == "epochs") {
    cfg.train.epochs = parse_count(key, value);
  } else if (key == "batch_size") {
    cfg.train.batch_size = parse_count(key, value);
  } else if (key == "learning_rate") {
    cfg.train.learning_rate = parse_real(key, value);
  } else if (key == "validation_fraction") {
    cfg.train.validation_fraction = parse_real(key, value);
  } else if (key == "test_fraction") {
    cfg.test_fraction = parse_real(key, value);
  } else if (key == "attention_mode") {
    cfg.model.attention_mode = attention_mode_from_string(value);
  } else if (key == "input_features") {
    cfg.model.input_features = parse_count(key, value);
  } else if (key == "num_classes") {
    cfg.model.num_classes = parse_count(key, value);
  } else if (key == "conv_filters") {
    cfg.model.conv_filters = parse_count(key, value);
  } else if (key == "kernel_size") {
    cfg.model.kernel_size = parse_count(key, value);
  } else if (key == "pool_size") {
    cfg.model.pool_size = parse_count(key, value);
  } else if (key == "bilstm_units") {
    cfg.model.bilstm_units = parse_count(key, value);
  } else if (key == "attention_width") {
    cfg.model.attention_width = parse_count(key, value);
  } else if (key == "dense_units") {
    cfg.model.dense_units = parse_count(key, value);
  } else if (key == "dropout_rate") {
    cfg.model.dropout_rate = parse_real(key, value);
  } else if (key == "out_dir") {
    cfg.out_dir = value;
  } else {
    throw UsageError("unknown config key '" + key + "'");
  }
}

// Config file: one `key = value` per line, `#` starts a comment.
inline void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::string trimmed = tapnet::detail::trim(line);
    if (trimmed.empty()) continue;
    const std::size_t eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(line_no) +
                       ": expected 'key = value', got '" + trimmed + "'");
    }
    const std::string key = tapnet::detail::trim(trimmed.substr(0, eq));
    const std::string value = tapnet::detail::trim(trimmed.substr(eq + 1));
    apply_config_kv(cfg, key, value);
  }
}

// Every run echoes its effective configuration so a log reconstructs the run.
inline void echo_config(const RunConfig& cfg, std::ostream& out) {
  out << "config: seed=" << cfg.model.seed
      << " epochs=" << cfg.train.epochs
      << " batch_size=" << cfg.train.batch_size
      << " learning_rate=" << cfg.train.learning_rate
      << " validation_fraction=" << cfg.train.validation_fraction
      << " test_fraction=" << cfg.test_fraction
      << " input_features=" << cfg.model.input_features
      << " num_classes=" << cfg.model.num_classes
      << " conv_filters=" << cfg.model.conv_filters
      << " kernel_size=" << cfg.model.kernel_size
      << " pool_size=" << cfg.model.pool_size
      << " bilstm_units=" << cfg.model.bilstm_units
      << " attention_width=" << cfg.model.attention_width
      << " attention_mode=" << to_string(cfg.model.attention_mode)
      << " dense_units=" << cfg.model.dense_units
      << " dropout_rate=" << cfg.model.dropout_rate
      << " out_dir=" << cfg.out_dir << "\n";
}

inline int map_exception(std::ostream& err) {
  try {
    throw;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
}

namespace detail_cli {

inline void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory: " + dir);
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write: " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace detail_cli

inline constexpr const char* kCheckpointFile = "model.tapt";
inline constexpr const char* kCurvesFile = "curves.csv";
inline constexpr const char* kReportTextFile = "report.txt";
inline constexpr const char* kReportJsonFile = "report.json";
inline constexpr const char* kConfusionFile = "confusion.csv";
inline constexpr const char* kPredictionsFile = "predictions.csv";

// split -> normalize -> train -> evaluate on the held-out split; writes
// checkpoint, curve data and the report into out_dir.
inline int cmd_train(const RunConfig& cfg, const std::string& features_csv,
                     std::ostream& out, std::ostream& err) {
  try {
    cfg.model.validate();
    cfg.train.validate();
    echo_config(cfg, out);
    Dataset ds = load_feature_csv(features_csv, static_cast<int>(cfg.model.num_classes));
    if (!ds.has_labels) {
      throw UsageError(features_csv + ": training requires a 'label' column");
    }
    if (ds.width() != cfg.model.input_features) {
      throw UsageError(features_csv + ": has " + std::to_string(ds.width()) +
                       " feature columns, config expects " +
                       std::to_string(cfg.model.input_features));
    }
    detail_cli::ensure_out_dir(cfg.out_dir);

    auto [tr_raw, te_raw] = stratified_split(ds, cfg.test_fraction, cfg.train.seed);
    NormStats norm = zscore_fit(tr_raw);
    Dataset tr = zscore_apply(norm, tr_raw);
    Dataset te = zscore_apply(norm, te_raw);

    auto [params, history] = train(tr, cfg.model, cfg.train);

    auto [pred, probs] = predict_batch(params, cfg.model, te.features);
    ConfusionMatrix cm = confusion(te.labels, pred, cfg.model.num_classes);
    ClassificationReport rep = report(cm);

    const std::filesystem::path dir(cfg.out_dir);
    save_checkpoint(params, cfg.model, (dir / kCheckpointFile).string(), &norm);
    emit_curves(history, (dir / kCurvesFile).string());
    detail_cli::write_text((dir / kReportTextFile).string(), render_report(rep));
    detail_cli::write_text((dir / kReportJsonFile).string(), report_to_json(rep).dump(2) + "\n");
    write_confusion_csv(cm, (dir / kConfusionFile).string());

    out << "trained on " << tr.n() << " samples, evaluated on " << te.n() << " held out\n";
    out << render_report(rep);
    out << "checkpoint: " << (dir / kCheckpointFile).string() << "\n";
    return kExitOk;
  } catch (...) {
    return map_exception(err);
  }
}

// Inference-mode evaluation of a labeled CSV against a checkpoint.
inline int cmd_evaluate(const std::string& checkpoint_path, const std::string& features_csv,
                        const std::string& out_dir, std::ostream& out, std::ostream& err) {
  try {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    Dataset ds = load_feature_csv(features_csv, static_cast<int>(ck.config.num_classes));
    if (!ds.has_labels) {
      throw UsageError(features_csv +
                       ": no 'label' column; use the predict command for unlabeled data");
    }
    if (ds.width() != ck.config.input_features) {
      throw UsageError(features_csv + ": has " + std::to_string(ds.width()) +
                       " feature columns, checkpoint expects " +
                       std::to_string(ck.config.input_features));
    }
    if (ds.n() == 0) throw DataError(features_csv + ": no data rows");
    detail_cli::ensure_out_dir(out_dir);
    if (ck.has_norm) ds = zscore_apply(ck.norm, ds);

    auto [pred, probs] = predict_batch(ck.params, ck.config, ds.features);
    ConfusionMatrix cm = confusion(ds.labels, pred, ck.config.num_classes);
    ClassificationReport rep = report(cm);

    const std::filesystem::path dir(out_dir);
    detail_cli::write_text((dir / kReportTextFile).string(), render_report(rep));
    detail_cli::write_text((dir / kReportJsonFile).string(), report_to_json(rep).dump(2) + "\n");
    write_confusion_csv(cm, (dir / kConfusionFile).string());
    out << "evaluated " << ds.n() << " samples\n" << render_report(rep);
    return kExitOk;
  } catch (...) {
    return map_exception(err);
  }
}

// Per-row class and probabilities; accepts labeled or unlabeled CSVs.
inline int cmd_predict(const std::string& checkpoint_path, const std::string& features_csv,
                       const std::string& out_dir, std::ostream& out, std::ostream& err) {
  try {
    Checkpoint ck = load_checkpoint(checkpoint_path);
    Dataset ds = load_feature_csv(features_csv, static_cast<int>(ck.config.num_classes));
    if (ds.width() != ck.config.input_features) {
      throw UsageError(features_csv + ": has " + std::to_string(ds.width()) +
                       " feature columns, checkpoint expects " +
                       std::to_string(ck.config.input_features));
    }
    detail_cli::ensure_out_dir(out_dir);
    if (ck.has_norm && ds.n() > 0) ds = zscore_apply(ck.norm, ds);

    const std::filesystem::path path = std::filesystem::path(out_dir) / kPredictionsFile;
    std::ofstream file(path);
    if (!file) throw IoError("cannot write predictions: " + path.string());
    file << "row,predicted_class";
    for (std::size_t k = 0; k < ck.config.num_classes; ++k) file << ",p" << k;
    file << '\n';
    if (ds.n() > 0) {
      auto [pred, probs] = predict_batch(ck.params, ck.config, ds.features);
      char buf[32];
      for (std::size_t r = 0; r < ds.n(); ++r) {
        file << r << ',' << pred[r];
        for (std::size_t k = 0; k < ck.config.num_classes; ++k) {
          std::snprintf(buf, sizeof(buf), "%.17g", probs(r, k));
          file << ',' << buf;
        }
        file << '\n';
      }
    }
    if (!file) throw IoError("write failed: " + path.string());
    out << "wrote " << ds.n() << " predictions to " << path.string() << "\n";
    return kExitOk;
  } catch (...) {
    return map_exception(err);
  }
}

// Finite-difference check of the whole model at a small configuration.
// `inject_fault` deliberately corrupts the conv gradient to prove the
// checker flags a broken backward pass.
inline int cmd_gradcheck(const std::string& mode, bool inject_fault, std::ostream& out,
                         std::ostream& err) {
  try {
    ModelConfig tiny;
    tiny.input_features = 6;
    tiny.num_classes = 3;
    tiny.conv_filters = 2;
    tiny.kernel_size = 3;
    tiny.pool_size = 2;
    tiny.bilstm_units = 2;
    tiny.attention_width = 4;
    tiny.dense_units = 4;
    tiny.dropout_rate = 0.0;
    tiny.seed = 7;

    Rng rng(11);
    Mat batch(4, tiny.input_features);
    for (double& v : batch.data) v = rng.normal();
    std::vector<int> labels = {0, 1, 2, 1};

    std::vector<AttentionMode> modes;
    if (mode == "final") {
      modes = {AttentionMode::final_state};
    } else if (mode == "all") {
      modes = {AttentionMode::all_positions};
    } else if (mode == "both") {
      modes = {AttentionMode::final_state, AttentionMode::all_positions};
    } else {
      throw UsageError("gradcheck mode must be final, all or both");
    }

    bool ok = true;
    for (AttentionMode m : modes) {
      tiny.attention_mode = m;
      GradCheckReport rep = gradient_check(tiny, batch, labels, 1e-5,
                                           inject_fault ? 2.0 : 1.0);
      out << "attention mode " << to_string(m) << ":\n";
      for (const auto& g : rep.groups) {
        out << "  " << g.name << ": max relative error " << g.max_rel_err
            << (g.max_rel_err <= 1e-4 ? "" : "  <-- FAIL") << "\n";
      }
      out << "  worst: " << rep.worst << " (" << (rep.pass() ? "pass" : "FAIL") << ")\n";
      ok = ok && rep.pass();
    }
    return ok ? kExitOk : 1;
  } catch (...) {
    return map_exception(err);
  }
}

inline int cmd_synth(std::size_t n_per_class, double separation, std::uint64_t seed,
                     const std::string& out_path, std::ostream& out, std::ostream& err) {
  try {
    Dataset ds = synth_generate(n_per_class, separation, seed);
    write_feature_csv(ds, out_path);
    out << "wrote " << ds.n() << " samples to " << out_path << "\n";
    return kExitOk;
  } catch (...) {
    return map_exception(err);
  }
}

// One feature row per landmark recording. Per-file failures go to the error
// stream; remaining files are still processed.
inline int cmd_extract(const std::vector<std::string>& inputs, const std::string& out_path,
                       std::ostream& out, std::ostream& err) {
  try {
    if (inputs.empty()) throw UsageError("extract: no input files given");
    Dataset ds;
    ds.features = Mat(0, kDefaultFeatureWidth);
    std::vector<double> rows;
    std::size_t ok_count = 0;
    for (const std::string& path : inputs) {
      try {
        LandmarkSequence seq = load_landmark_csv(path);
        std::vector<double> row = extract_from_landmarks(seq);
        rows.insert(rows.end(), row.begin(), row.end());
        ++ok_count;
      } catch (const Error& e) {
        err << path << ": " << e.what() << "\n";
      }
    }
    if (ok_count == 0) throw DataError("extract: no input file produced features");
    ds.features = Mat(ok_count, kDefaultFeatureWidth);
    ds.features.data = std::move(rows);
    write_feature_csv(ds, out_path);
    out << "extracted features from " << ok_count << " of " << inputs.size()
        << " recordings to " << out_path << "\n";
    return kExitOk;
  } catch (...) {
    return map_exception(err);
  }
}

}  // namespace tapnet::cli
