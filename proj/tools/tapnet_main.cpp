#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tapnet/cli.hpp"

namespace {

struct CommonFlags {
  std::string config_file;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double lr = 0.0;
  double test_fraction = 0.0;
  std::string attention_mode;
  std::string out_dir;
};

void add_train_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file, "config file (key = value lines)");
  cmd->add_option("--seed", f.seed, "seed for init, shuffling and dropout");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--batch-size", f.batch_size, "mini-batch size");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--test-fraction", f.test_fraction, "held-out test fraction");
  cmd->add_option("--attention-mode", f.attention_mode, "final | all");
  cmd->add_option("--out-dir", f.out_dir, "output directory");
}

// Config file first, then explicit flags on top.
tapnet::cli::RunConfig merge_config(const CLI::App* cmd, const CommonFlags& f) {
  tapnet::cli::RunConfig cfg;
  if (!f.config_file.empty()) tapnet::cli::load_config_file(cfg, f.config_file);
  if (cmd->count("--seed")) tapnet::cli::set_seed(cfg, f.seed);
  if (cmd->count("--epochs")) cfg.train.epochs = f.epochs;
  if (cmd->count("--batch-size")) cfg.train.batch_size = f.batch_size;
  if (cmd->count("--lr")) cfg.train.learning_rate = f.lr;
  if (cmd->count("--test-fraction")) cfg.test_fraction = f.test_fraction;
  if (cmd->count("--attention-mode")) {
    cfg.model.attention_mode = tapnet::attention_mode_from_string(f.attention_mode);
  }
  if (cmd->count("--out-dir")) cfg.out_dir = f.out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"finger-tapping severity classifier (CNN-BiLSTM with attention)"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string features_csv, checkpoint_path, out_path, out_dir = "tapnet_out";
  std::string gradcheck_mode = "both";
  bool inject_fault = false;
  std::size_t n_per_class = 100;
  double separation = 6.0;
  std::uint64_t synth_seed = 42;
  std::vector<std::string> extract_inputs;

  CLI::App* train = app.add_subcommand("train", "train on a labeled feature CSV");
  train->add_option("features", features_csv, "feature CSV with label column")->required();
  add_train_flags(train, flags);

  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on a labeled CSV");
  evaluate->add_option("checkpoint", checkpoint_path, "model checkpoint")->required();
  evaluate->add_option("features", features_csv, "labeled feature CSV")->required();
  evaluate->add_option("--out-dir", out_dir, "output directory");

  CLI::App* predict = app.add_subcommand("predict", "predict classes for a feature CSV");
  predict->add_option("checkpoint", checkpoint_path, "model checkpoint")->required();
  predict->add_option("features", features_csv, "feature CSV (label column optional)")->required();
  predict->add_option("--out-dir", out_dir, "output directory");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gradcheck->add_option("--attention-mode", gradcheck_mode, "final | all | both");
  gradcheck->add_flag("--inject-fault", inject_fault,
                      "corrupt the conv gradient to demonstrate a failing check");

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic separable dataset");
  synth->add_option("output", out_path, "output feature CSV")->required();
  synth->add_option("--n-per-class", n_per_class, "samples per class");
  synth->add_option("--separation", separation, "cluster separation in std deviations");
  synth->add_option("--seed", synth_seed, "generator seed");

  CLI::App* extract = app.add_subcommand("extract", "extract features from landmark CSVs");
  extract->add_option("inputs", extract_inputs, "landmark CSV files")->required();
  extract->add_option("--out", out_path, "output feature CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : tapnet::cli::kExitUsage;
  }

  try {
    if (train->parsed()) {
      return tapnet::cli::cmd_train(merge_config(train, flags), features_csv, std::cout,
                                    std::cerr);
    }
    if (evaluate->parsed()) {
      return tapnet::cli::cmd_evaluate(checkpoint_path, features_csv, out_dir, std::cout,
                                       std::cerr);
    }
    if (predict->parsed()) {
      return tapnet::cli::cmd_predict(checkpoint_path, features_csv, out_dir, std::cout,
                                      std::cerr);
    }
    if (gradcheck->parsed()) {
      return tapnet::cli::cmd_gradcheck(gradcheck_mode, inject_fault, std::cout, std::cerr);
    }
    if (synth->parsed()) {
      return tapnet::cli::cmd_synth(n_per_class, separation, synth_seed, out_path,
                                    std::cout, std::cerr);
    }
    if (extract->parsed()) {
      return tapnet::cli::cmd_extract(extract_inputs, out_path, std::cout, std::cerr);
    }
  } catch (const tapnet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return tapnet::cli::kExitUsage;
  }
  return tapnet::cli::kExitUsage;
}
