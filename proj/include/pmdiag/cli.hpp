#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>

#include "pmdiag/eval.hpp"
#include "pmdiag/synth.hpp"

namespace pmdiag::cli {

// Stable process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitStage = 4;
inline constexpr int kExitDigest = 5;

struct SynthSection {
  SynthConfig config;
  ClassCounts counts;
  SeverityRange severity;
};

struct Paths {
  std::optional<std::filesystem::path> dataset;
  std::optional<std::filesystem::path> features;
  std::optional<std::filesystem::path> model;
  std::optional<std::filesystem::path> predictor;
};

struct RunConfig {
  SynthSection synth;
  PreprocessConfig preprocess;
  TrainConfig train;
  // When false, training weights are recomputed from the training label counts.
  bool explicit_class_weights = false;
  double alpha = 0.05;
  SplitSpec split;
  Paths paths;
};

/// MJ-like desk-scale run: test-bench class counts, noise at 3% of the plateau.
RunConfig default_run_config();

/// Starts from the defaults and applies every key in `j`. Unknown keys and
/// invalid values raise Error(InvalidConfig).
RunConfig run_config_from_json(const Json& j);
Json run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

/// --seed: replaces the synth, train and split seeds.
void override_seeds(RunConfig& cfg, std::uint64_t seed);

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

int cmd_generate(const RunConfig& cfg, const std::filesystem::path& out, Streams io);
int cmd_preprocess(const RunConfig& cfg, const std::filesystem::path& dataset,
                   const std::filesystem::path& out, Streams io);
int cmd_train(const RunConfig& cfg, const std::filesystem::path& features,
              const std::filesystem::path& out, Streams io);
int cmd_calibrate(const RunConfig& cfg, const std::filesystem::path& model,
                  const std::filesystem::path& features, const std::filesystem::path& out,
                  Streams io);
int cmd_diagnose(const std::filesystem::path& model, const std::filesystem::path& predictor,
                 const std::filesystem::path& dataset, const std::filesystem::path& out,
                 const PreprocessConfig& preprocess, Streams io);
int cmd_evaluate(const std::filesystem::path& model, const std::filesystem::path& predictor,
                 const std::filesystem::path& features, const std::filesystem::path& out_dir,
                 Streams io);
int cmd_pipeline(const RunConfig& cfg, const std::filesystem::path& out_dir, Streams io);

/// Full command-line entry point.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pmdiag::cli
