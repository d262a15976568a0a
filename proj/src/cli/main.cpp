#include <CLI11.hpp>

#include "pmdiag/cli.hpp"
#include "pmdiag/errors.hpp"

namespace pmdiag::cli {

namespace {

std::filesystem::path pick(const std::string& flag, const std::optional<std::filesystem::path>& from_config,
                           const char* what) {
  if (!flag.empty()) return flag;
  if (from_config) return *from_config;
  throw Error(ErrorCode::InvalidConfig, std::string("no ") + what + " path given");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Point-machine manoeuvre diagnostics: synthetic data, features, classifier, "
               "conformal prediction sets"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "Run configuration (JSON)");
  app.add_option("--out", out_path, "Output file, or directory for evaluate/pipeline");
  auto* seed_opt = app.add_option("--seed", seed, "Override every seed in the configuration");

  std::string data_path;
  std::string features_path;
  std::string model_path;
  std::string predictor_path;

  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset (JSONL)");
  auto* preprocess = app.add_subcommand("preprocess", "Turn a dataset into feature vectors");
  preprocess->add_option("--data", data_path, "Input dataset JSONL");
  auto* train = app.add_subcommand("train", "Train the classifier on a features file");
  train->add_option("--features", features_path, "Training features JSONL");
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate a conformal predictor");
  calibrate->add_option("--model", model_path, "Model JSON");
  calibrate->add_option("--features", features_path, "Calibration features JSONL");
  auto* diagnose = app.add_subcommand("diagnose", "Diagnose every manoeuvre in a dataset");
  diagnose->add_option("--model", model_path, "Model JSON");
  diagnose->add_option("--predictor", predictor_path, "Predictor JSON");
  diagnose->add_option("--data", data_path, "Dataset JSONL");
  auto* evaluate = app.add_subcommand("evaluate", "Metrics and report for a labeled features file");
  evaluate->add_option("--model", model_path, "Model JSON");
  evaluate->add_option("--predictor", predictor_path, "Predictor JSON");
  evaluate->add_option("--features", features_path, "Holdout features JSONL");
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage end to end");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "pm-diag: " << e.what() << '\n' << "run 'pm-diag --help' for usage\n";
    return kExitConfig;
  }

  Streams io{out, err};
  try {
    RunConfig cfg = config_path.empty() ? default_run_config() : load_run_config(config_path);
    if (seed_opt->count() > 0) override_seeds(cfg, seed);
    auto out_or = [&](const char* fallback) {
      return std::filesystem::path(out_path.empty() ? fallback : out_path);
    };

    if (generate->parsed()) return cmd_generate(cfg, out_or("dataset.jsonl"), io);
    if (preprocess->parsed()) {
      return cmd_preprocess(cfg, pick(data_path, cfg.paths.dataset, "dataset"),
                            out_or("features.jsonl"), io);
    }
    if (train->parsed()) {
      return cmd_train(cfg, pick(features_path, cfg.paths.features, "features"),
                       out_or("model.json"), io);
    }
    if (calibrate->parsed()) {
      return cmd_calibrate(cfg, pick(model_path, cfg.paths.model, "model"),
                           pick(features_path, cfg.paths.features, "features"),
                           out_or("predictor.json"), io);
    }
    if (diagnose->parsed()) {
      return cmd_diagnose(pick(model_path, cfg.paths.model, "model"),
                          pick(predictor_path, cfg.paths.predictor, "predictor"),
                          pick(data_path, cfg.paths.dataset, "dataset"), out_or("diagnoses.jsonl"),
                          cfg.preprocess, io);
    }
    if (evaluate->parsed()) {
      return cmd_evaluate(pick(model_path, cfg.paths.model, "model"),
                          pick(predictor_path, cfg.paths.predictor, "predictor"),
                          pick(features_path, cfg.paths.features, "features"), out_or("."), io);
    }
    if (pipeline->parsed()) return cmd_pipeline(cfg, out_or("run"), io);
  } catch (const Error& e) {
    err << "pm-diag: " << e.what() << '\n';
    return e.code() == ErrorCode::InvalidConfig ? kExitConfig : kExitStage;
  }
  return kExitConfig;
}

}  // namespace pmdiag::cli
