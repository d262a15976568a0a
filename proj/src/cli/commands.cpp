#include <chrono>
#include <ctime>
#include <iomanip>
#include <sstream>

#include "pmdiag/cli.hpp"
#include "pmdiag/errors.hpp"

namespace pmdiag::cli {

namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return kExitConfig;
    case ErrorCode::Io:
    case ErrorCode::Parse:
    case ErrorCode::Validation:
    case ErrorCode::DuplicateId: return kExitIo;
    case ErrorCode::DigestMismatch: return kExitDigest;
    default: return kExitStage;
  }
}

int report_error(Streams io, std::string_view command, const Error& e) {
  io.err << "pm-diag " << command << ": " << e.what() << '\n';
  return exit_code_for(e.code());
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

// Injector parameterisations behind a generated dataset; severity s in [0, 1].
Json synthetic_fault_models(const SynthConfig& cfg) {
  return {{"origin", "synthetic; magnitudes are modelling choices, not measurements"},
          {"Obstacle", "additive raised-cosine bump in the movement phase, amplitude (0.5+1.5s) x plateau, "
                       "width (0.05+0.15s) x movement, centre uniform in the middle 80%"},
          {"Friction", "movement plateau x (1.2+0.4s)"},
          {"PowerSupply", "whole trace x (0.8-0.3s) plus ripple of amplitude 0.05s x peak at " +
                              Json(ripple_frequency_hz(cfg.profile.supply)).dump() + " Hz"},
          {"Misalignment", "lock peak widened x (1+2s) and attenuated x (1-0.3s), movement lengthened "
                           "by 0.2s x nominal movement"}};
}

ClassCounts count_labels(std::span<const FeatureVector> features) {
  ClassCounts counts;
  for (const auto& f : features) {
    if (f.label) ++counts[*f.label];
  }
  return counts;
}

void print_counts(std::ostream& out, const ClassCounts& counts) {
  for (auto c : kAllClasses) {
    auto it = counts.find(c);
    out << "  " << std::left << std::setw(13) << name(c) << (it == counts.end() ? 0 : it->second)
        << '\n';
  }
}

TrainConfig effective_train_config(const RunConfig& cfg, std::span<const FeatureVector> train_set) {
  TrainConfig tc = cfg.train;
  if (!cfg.explicit_class_weights) tc.class_weights = class_weights(count_labels(train_set));
  return tc;
}

std::string format_set(const std::vector<SetMember>& members) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(3) << '{';
  for (std::size_t k = 0; k < members.size(); ++k) {
    ss << (k ? ", " : "") << name(members[k].fault_class) << ' ' << members[k].probability;
  }
  ss << '}';
  return ss.str();
}

void print_metrics(std::ostream& out, const MetricsReport& m) {
  out << std::setprecision(6) << "precision " << m.binary.precision << "  fpr " << m.binary.fpr
      << "  fnr " << m.binary.fnr << "  coverage " << m.coverage << "  mean set size "
      << m.mean_set_size << '\n';
}

}  // namespace

int cmd_generate(const RunConfig& cfg, const std::filesystem::path& out, Streams io) {
  try {
    Dataset ds = generate_dataset(cfg.synth.counts, cfg.synth.config, cfg.synth.severity,
                                  cfg.synth.config.seed);
    save_dataset(ds, out);
    io.out << "wrote " << ds.manoeuvres.size() << " manoeuvres to " << out.string() << '\n';
    print_counts(io.out, cfg.synth.counts);
    return kExitOk;
  } catch (const Error& e) {
    return report_error(io, "generate", e);
  }
}

int cmd_preprocess(const RunConfig& cfg, const std::filesystem::path& dataset,
                   const std::filesystem::path& out, Streams io) {
  try {
    Dataset ds = load_dataset(dataset);
    auto features = preprocess_dataset(ds, cfg.preprocess);
    save_features(features, out);
    io.out << "wrote " << features.size() << " feature vectors to " << out.string() << '\n';
    return kExitOk;
  } catch (const Error& e) {
    return report_error(io, "preprocess", e);
  }
}

int cmd_train(const RunConfig& cfg, const std::filesystem::path& features,
              const std::filesystem::path& out, Streams io) {
  try {
    auto train_set = load_features(features);
    TrainResult result = train(train_set, effective_train_config(cfg, train_set));
    result.model.dataset_digest = sha256_hex(read_file(features));
    save_model(result.model, out);
    io.out << "trained on " << train_set.size() << " items; final loss "
           << result.epoch_loss.back() << "\nwrote " << out.string() << '\n';
    return kExitOk;
  } catch (const Error& e) {
    return report_error(io, "train", e);
  }
}

int cmd_calibrate(const RunConfig& cfg, const std::filesystem::path& model,
                  const std::filesystem::path& features, const std::filesystem::path& out,
                  Streams io) {
  try {
    MlpModel m = load_model(model);
    auto calibration = load_features(features);
    ConformalPredictor p = calibrate(m, calibration, cfg.alpha);
    save_predictor(p, out);
    io.out << "calibrated on " << p.n_calibration << " items: alpha " << p.alpha << ", qhat "
           << std::setprecision(17) << p.qhat << "\nwrote " << out.string() << '\n';
    return kExitOk;
  } catch (const Error& e) {
    return report_error(io, "calibrate", e);
  }
}

int cmd_diagnose(const std::filesystem::path& model, const std::filesystem::path& predictor,
                 const std::filesystem::path& dataset, const std::filesystem::path& out,
                 const PreprocessConfig& preprocess, Streams io) {
  try {
    MlpModel m = load_model(model);
    ConformalPredictor p = load_predictor(predictor);
    check_binding(p, m);
    Dataset ds = load_dataset(dataset);
    auto features = preprocess_dataset(ds, preprocess);

    std::string lines;
    std::vector<LabelPair> pairs;
    std::size_t covered = 0;
    for (const auto& f : features) {
      Diagnosis d = diagnose(p, m, f);
      Json j = diagnosis_to_json(d);
      if (f.label) {
        j["label"] = std::string(name(*f.label));
        pairs.push_back({d.argmax_class, *f.label});
        covered += d.contains(*f.label) ? 1 : 0;
      }
      lines += j.dump() + "\n";
      io.out << f.source_id << "  " << format_set(d.prediction_set) << "  argmax "
             << name(d.argmax_class) << "  set covers the true class with guarantee "
             << std::setprecision(4) << 100.0 * d.guarantee() << "%\n";
    }
    write_file_atomic(out, lines);
    // Metrics only make sense when every manoeuvre carries a label.
    if (!features.empty() && pairs.size() == features.size()) {
      const BinaryMetrics b = binary_metrics(pairs);
      io.out << std::setprecision(6) << "precision " << b.precision << "  fpr " << b.fpr
             << "  fnr " << b.fnr << "  coverage "
             << static_cast<double>(covered) / static_cast<double>(pairs.size()) << '\n';
    }
    return kExitOk;
  } catch (const Error& e) {
    return report_error(io, "diagnose", e);
  }
}

int cmd_evaluate(const std::filesystem::path& model, const std::filesystem::path& predictor,
                 const std::filesystem::path& features, const std::filesystem::path& out_dir,
                 Streams io) {
  try {
    MlpModel m = load_model(model);
    ConformalPredictor p = load_predictor(predictor);
    check_binding(p, m);
    auto holdout = load_features(features);
    std::filesystem::create_directories(out_dir);

    ReportInputs in;
    in.metrics = evaluate(p, m, holdout, &in.diagnoses);
    for (const auto& f : holdout) in.truths.push_back(*f.label);
    in.provenance = {{"model_digest", p.model_digest}, {"features", features.string()}};
    in.timestamp = utc_timestamp();
    write_report(in, out_dir);
    print_metrics(io.out, in.metrics);
    return kExitOk;
  } catch (const std::filesystem::filesystem_error& e) {
    io.err << "pm-diag evaluate: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    return report_error(io, "evaluate", e);
  }
}

int cmd_pipeline(const RunConfig& cfg, const std::filesystem::path& out_dir, Streams io) {
  std::string stage = "setup";
  try {
    std::filesystem::create_directories(out_dir);

    stage = cfg.paths.dataset ? "load" : "generate";
    Dataset ds = cfg.paths.dataset
                     ? load_dataset(*cfg.paths.dataset)
                     : generate_dataset(cfg.synth.counts, cfg.synth.config, cfg.synth.severity,
                                        cfg.synth.config.seed);
    const std::string ds_text = dataset_to_jsonl(ds);
    write_file_atomic(out_dir / "dataset.jsonl", ds_text);
    const std::string dataset_digest = sha256_hex(ds_text);

    stage = "preprocess";
    auto features = preprocess_dataset(ds, cfg.preprocess);
    save_features(features, out_dir / "features.jsonl");

    stage = "split";
    auto [train_set, test_set] = stratified_split(features, cfg.split);

    stage = "train";
    TrainResult trained = train(train_set, effective_train_config(cfg, train_set));
    MlpModel& model = trained.model;
    model.dataset_digest = dataset_digest;
    save_model(model, out_dir / "model.json");

    stage = "calibrate";
    auto [calibration, holdout] = split_calibration(test_set, cfg.split);
    ConformalPredictor predictor = calibrate(model, calibration, cfg.alpha);
    save_predictor(predictor, out_dir / "predictor.json");

    stage = "diagnose";
    ReportInputs in;
    in.metrics = evaluate(predictor, model, holdout, &in.diagnoses);
    for (const auto& f : holdout) in.truths.push_back(*f.label);

    stage = "report";
    const Json config = run_config_to_json(cfg);
    in.config = config;
    in.provenance = {{"dataset", ds.provenance},
                     {"dataset_digest", dataset_digest},
                     {"config_digest", sha256_hex(config.dump())},
                     {"model_digest", predictor.model_digest},
                     {"split_sizes",
                      {{"train", train_set.size()},
                       {"test", test_set.size()},
                       {"calibration", calibration.size()},
                       {"holdout", holdout.size()}}},
                     {"qhat", predictor.qhat}};
    if (!cfg.paths.dataset) in.provenance["fault_models"] = synthetic_fault_models(cfg.synth.config);
    in.training_log = trained.epoch_loss;
    in.timestamp = utc_timestamp();
    write_report(in, out_dir);

    io.out << "pipeline: " << ds.manoeuvres.size() << " manoeuvres, train " << train_set.size()
           << ", calibration " << calibration.size() << ", holdout " << holdout.size() << '\n';
    print_metrics(io.out, in.metrics);
    io.out << "outputs in " << out_dir.string() << '\n';
    return kExitOk;
  } catch (const std::filesystem::filesystem_error& e) {
    io.err << "pm-diag pipeline: stage '" << stage << "' failed: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    io.err << "pm-diag pipeline: stage '" << stage << "' failed";
    if (!e.id().empty()) io.err << " on manoeuvre '" << e.id() << "'";
    io.err << ": " << e.what() << '\n';
    const int code = exit_code_for(e.code());
    return code == kExitIo || code == kExitConfig ? code : kExitStage;
  }
}

}  // namespace pmdiag::cli
