#include "cli.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "msclstm/checkpoint.hpp"
#include "msclstm/data.hpp"
#include "msclstm/eda.hpp"
#include "msclstm/metrics.hpp"
#include "msclstm/synthetic.hpp"
#include "msclstm/train.hpp"

namespace msclstm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("SHA-256 failed for " + path.string());
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xF]);
  }
  return out;
}

namespace {

struct Options {
  std::string dataset, checkpoint, schema, manifest;
  std::string out = ".";
  TrainConfig train = TrainConfig::scratch();
  std::string domain = "source";
  std::size_t rows = SyntheticSpec{}.rows;
  double anomaly_rate = SyntheticSpec{}.anomaly_rate;
  double noise = SyntheticSpec{}.noise;
};

struct Input {
  std::string role;
  fs::path path;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

/// Everything needed to rerun a command: its fully explicit argument list
/// and the digests of the files it read.
class Run {
 public:
  Run(std::string subcommand, std::vector<std::string> raw, fs::path out_dir)
      : subcommand_(std::move(subcommand)), raw_(std::move(raw)), out_dir_(std::move(out_dir)) {
    resolved_.push_back(subcommand_);
  }

  const fs::path& out_dir() const { return out_dir_; }
  fs::path output(std::string_view name) {
    outputs_.emplace_back(name);
    return out_dir_ / name;
  }

  void input(const std::string& role, const fs::path& path) {
    if (!fs::is_regular_file(path)) throw IoError("cannot open " + path.string());
    inputs_.push_back({role, path, sha256_file(path), fs::file_size(path)});
  }
  void arg(std::string a) { resolved_.push_back(std::move(a)); }
  void flag(const std::string& name, std::string value) {
    resolved_.push_back(name);
    resolved_.push_back(std::move(value));
  }
  void config(const std::string& key, json value) { config_[key] = std::move(value); }

  void write_manifest() const {
    json j;
    j["tool"] = kToolName;
    j["version"] = kToolVersion;
    j["subcommand"] = subcommand_;
    j["argv"] = raw_;
    std::vector<std::string> resolved = resolved_;
    resolved.push_back("--out");
    resolved.push_back(out_dir_.string());
    j["resolved_argv"] = resolved;
    j["config"] = config_.is_null() ? json::object() : config_;
    j["inputs"] = json::array();
    for (const auto& in : inputs_)
      j["inputs"].push_back({{"role", in.role}, {"path", in.path.string()}, {"bytes", in.bytes}, {"sha256", in.sha256}});
    j["outputs"] = json::array();
    for (const auto& name : outputs_) {
      const fs::path p = out_dir_ / name;
      if (fs::is_regular_file(p)) j["outputs"].push_back({{"file", name}, {"sha256", sha256_file(p)}});
    }
    detail::write_text_file(out_dir_ / kManifestFile, j.dump(2) + "\n");
  }

 private:
  std::string subcommand_;
  std::vector<std::string> raw_, resolved_;
  fs::path out_dir_;
  std::vector<Input> inputs_;
  std::vector<std::string> outputs_;
  json config_;
};

fs::path absolute(const std::string& p) { return fs::absolute(p).lexically_normal(); }

DatasetSchema resolve_schema(const Options& o, Run& run) {
  if (o.schema.empty()) return {};
  const fs::path p = absolute(o.schema);
  run.input("schema", p);
  run.flag("--schema", p.string());
  return load_schema(p);
}

fs::path resolve_dataset(const Options& o, Run& run) {
  const fs::path p = absolute(o.dataset);
  run.input("dataset", p);
  run.arg(p.string());
  return p;
}

fs::path resolve_checkpoint(const Options& o, Run& run) {
  const fs::path p = absolute(o.checkpoint);
  run.input("checkpoint", p);
  run.arg(p.string());
  return p;
}

void resolve_train_flags(const TrainConfig& c, bool finetune, Run& run) {
  run.flag("--epochs", std::to_string(c.epochs));
  run.flag("--batch-size", std::to_string(c.batch_size));
  run.flag("--lr", csv::number(c.learning_rate));
  run.flag("--seed", std::to_string(c.seed));
  run.flag("--val-fraction", csv::number(c.val_fraction));
  run.flag("--threshold", csv::number(c.threshold));
  if (!c.smote_enabled) run.arg("--no-smote");
  if (finetune && c.freeze_features) run.arg("--freeze-features");
  run.config("train", c.to_json());
}

void print_load_summary(const Dataset& ds, std::ostream& out) {
  out << "loaded " << ds.rows() << " rows, " << ds.features() << " features";
  if (ds.dropped_rows) out << " (" << ds.dropped_rows << " malformed rows dropped)";
  out << "\n";
}

EpochCallback progress(int epochs, std::ostream& err) {
  return [epochs, &err](const EpochLog& e) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %d/%d  loss %.4f  acc %.4f  val_loss %.4f  val_acc %.4f\n", e.epoch,
                  epochs, e.train_loss, e.train_acc, e.val_loss, e.val_acc);
    err << line << std::flush;
  };
}

void write_training_outputs(const TrainResult& r, int epochs, Run& run, std::ostream& out) {
  save_checkpoint(r.checkpoint, run.output(kCheckpointFile));
  detail::write_text_file(run.output(kEpochLogFile), epoch_log_csv(r.log));
  detail::write_text_file(run.output(kCurvesFile), curves_svg(r.log));
  detail::write_text_file(run.output(kReportFile), report_json(r.val_report).dump(2) + "\n");
  out << "train rows " << r.train_rows << ", validation rows " << r.val_rows << ", optimizer steps "
      << r.optimizer_steps << "\n\n"
      << format_report(r.val_report, ReportFormat::text, epochs) << "\ncheckpoint "
      << (run.out_dir() / kCheckpointFile).string() << " sha256 " << sha256_file(run.out_dir() / kCheckpointFile)
      << "\n";
}

int cmd_eda(const Options& o, Run& run, std::ostream& out) {
  const fs::path data = resolve_dataset(o, run);
  const DatasetSchema schema = resolve_schema(o, run);
  run.config("schema", schema.to_json());
  const Dataset ds = load_csv(data, schema);
  print_load_summary(ds, out);
  const EdaReport rep = eda_report(ds);
  detail::ensure_directory(run.out_dir());
  emit_eda(rep, run.out_dir());
  for (const char* name : {"class_distribution.json", "correlation.csv", "correlation.svg"}) run.output(name);
  char line[128];
  std::snprintf(line, sizeof line, "normal %llu (%.1f%%), anomaly %llu (%.1f%%)\n",
                static_cast<unsigned long long>(rep.classes.counts[0]), 100.0 * rep.classes.fractions[0],
                static_cast<unsigned long long>(rep.classes.counts[1]), 100.0 * rep.classes.fractions[1]);
  out << line;
  return kExitOk;
}

int cmd_train(const Options& o, Run& run, std::ostream& out, std::ostream& err) {
  const fs::path data = resolve_dataset(o, run);
  const DatasetSchema schema = resolve_schema(o, run);
  resolve_train_flags(o.train, false, run);
  run.config("schema", schema.to_json());
  o.train.validate();
  const Dataset ds = load_csv(data, schema);
  print_load_summary(ds, out);
  detail::ensure_directory(run.out_dir());
  const TrainResult r = train_scratch(ds, o.train, progress(o.train.epochs, err));
  write_training_outputs(r, o.train.epochs, run, out);
  return kExitOk;
}

int cmd_finetune(const Options& o, Run& run, std::ostream& out, std::ostream& err) {
  const fs::path source_path = resolve_checkpoint(o, run);
  const fs::path data = resolve_dataset(o, run);
  const DatasetSchema schema = resolve_schema(o, run);
  resolve_train_flags(o.train, true, run);
  run.config("schema", schema.to_json());
  o.train.validate();
  const Checkpoint source = load_checkpoint(source_path);
  const Dataset ds = load_csv(data, schema);
  print_load_summary(ds, out);
  require_compatible(source, ds);
  detail::ensure_directory(run.out_dir());
  const TrainResult r = finetune(source, ds, o.train, progress(o.train.epochs, err));
  write_training_outputs(r, o.train.epochs, run, out);
  return kExitOk;
}

int cmd_evaluate(const Options& o, Run& run, std::ostream& out) {
  const fs::path ckpt = resolve_checkpoint(o, run);
  const fs::path data = resolve_dataset(o, run);
  const DatasetSchema schema = resolve_schema(o, run);
  run.flag("--threshold", csv::number(o.train.threshold));
  run.config("schema", schema.to_json());
  run.config("threshold", o.train.threshold);
  if (!(o.train.threshold >= 0.0 && o.train.threshold <= 1.0)) throw ConfigError("threshold must be in [0, 1]");
  const Checkpoint c = load_checkpoint(ckpt);
  const Dataset ds = load_csv(data, schema);
  print_load_summary(ds, out);
  const EvalReport rep = evaluate(c, ds, o.train.threshold);
  detail::ensure_directory(run.out_dir());
  detail::write_text_file(run.output(kReportFile), report_json(rep).dump(2) + "\n");
  out << "\n" << format_report(rep, ReportFormat::text);
  return kExitOk;
}

/// Accepts a file with or without a trailing label column when the schema
/// does not name one.
Dataset load_for_prediction(const fs::path& data, const DatasetSchema& schema, const Checkpoint& c) {
  Dataset unlabeled = load_csv(data, schema, {.require_label = false});
  if (!schema.label_column.empty() || unlabeled.fingerprint() == c.fingerprint) return unlabeled;
  try {
    Dataset labeled = load_csv(data, schema);
    if (labeled.fingerprint() == c.fingerprint) return labeled;
  } catch (const Error&) {
  }
  require_compatible(c, unlabeled);
  return unlabeled;
}

int cmd_predict(const Options& o, Run& run, std::ostream& out) {
  const fs::path ckpt = resolve_checkpoint(o, run);
  const fs::path data = resolve_dataset(o, run);
  const DatasetSchema schema = resolve_schema(o, run);
  run.flag("--threshold", csv::number(o.train.threshold));
  run.config("schema", schema.to_json());
  run.config("threshold", o.train.threshold);
  if (!(o.train.threshold >= 0.0 && o.train.threshold <= 1.0)) throw ConfigError("threshold must be in [0, 1]");
  const Checkpoint c = load_checkpoint(ckpt);
  const Dataset ds = load_for_prediction(data, schema, c);
  print_load_summary(ds, out);
  const auto preds = predict_dataset(c, ds, o.train.threshold);
  detail::ensure_directory(run.out_dir());
  std::ostringstream csv_text;
  csv_text << "probability,label\n";
  std::size_t flagged = 0;
  for (const auto& p : preds) {
    csv_text << csv::number(p.probability) << ',' << p.label << '\n';
    flagged += static_cast<std::size_t>(p.label);
  }
  const fs::path dest = run.output(kPredictionsFile);
  detail::write_text_file(dest, csv_text.str());
  out << "wrote " << preds.size() << " predictions (" << flagged << " anomalies) to " << dest.string() << "\n";
  return kExitOk;
}

int cmd_inspect(const Options& o, Run& run, std::ostream& out) {
  const Checkpoint c = load_checkpoint(resolve_checkpoint(o, run));
  out << "version " << c.version << "\n"
      << "features " << c.feature_count() << "\n"
      << "fingerprint " << fingerprint_hex(c.fingerprint) << "\n"
      << "norm_stats " << c.norm.size() << "\n";
  c.params.for_each_tensor([&](const std::string& name, const Tensor<float>& t, bool) {
    out << "tensor " << name << " " << shape_string(t.shape()) << "\n";
  });
  out << "parameters " << c.params.parameter_count() << "\n";
  detail::ensure_directory(run.out_dir());
  return kExitOk;
}

int cmd_synth(const Options& o, Run& run, std::ostream& out) {
  SyntheticSpec spec;
  spec.rows = o.rows;
  spec.anomaly_rate = o.anomaly_rate;
  spec.noise = o.noise;
  if (o.domain == "source") spec.domain = Domain::source;
  else if (o.domain == "target") spec.domain = Domain::target;
  else throw ConfigError("domain must be 'source' or 'target', got '" + o.domain + "'");
  run.flag("--domain", o.domain);
  run.flag("--rows", std::to_string(o.rows));
  run.flag("--anomaly-rate", csv::number(o.anomaly_rate));
  run.flag("--noise", csv::number(o.noise));
  run.flag("--seed", std::to_string(o.train.seed));
  run.config("synthetic", {{"domain", o.domain},
                           {"rows", o.rows},
                           {"anomaly_rate", o.anomaly_rate},
                           {"noise", o.noise},
                           {"seed", o.train.seed}});
  const Dataset ds = synthetic_dataset(spec, o.train.seed);
  detail::ensure_directory(run.out_dir());
  const fs::path dest = run.output(o.domain + ".csv");
  write_dataset_csv(ds, dest);
  out << "wrote " << ds.rows() << " rows (" << ds.count(1) << " anomalies) to " << dest.string() << "\n";
  return kExitOk;
}

/// Re-executes a recorded run after checking that its inputs are unchanged.
int cmd_replay(const Options& o, const std::vector<std::string>& raw_out, std::ostream& out, std::ostream& err) {
  std::ifstream in(o.manifest);
  if (!in) throw IoError("cannot open manifest " + o.manifest);
  std::vector<std::string> args;
  try {
    const json j = json::parse(in);
    if (j.at("tool").get<std::string>() != kToolName) throw FormatError(o.manifest + ": not a run manifest");
    for (const auto& input : j.at("inputs")) {
      const fs::path p = input.at("path").get<std::string>();
      if (sha256_file(p) != input.at("sha256").get<std::string>())
        throw DataError("input " + p.string() + " changed since the recorded run");
    }
    args = j.at("resolved_argv").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(o.manifest + ": " + e.what());
  }
  if (args.empty() || args.front() == "replay") throw FormatError(o.manifest + ": nothing to replay");
  if (!raw_out.empty()) {
    for (std::size_t i = 0; i + 1 < args.size(); ++i)
      if (args[i] == "--out") args[i + 1] = absolute(raw_out.front()).string();
  }
  return run(args, out, err);
}

void add_train_flags(CLI::App* sub, Options& o, bool finetune) {
  sub->add_option("--epochs", o.train.epochs, "Training epochs")->capture_default_str();
  sub->add_option("--batch-size", o.train.batch_size, "Mini-batch size")->capture_default_str();
  sub->add_option("--lr", o.train.learning_rate, "Adam learning rate")->capture_default_str();
  sub->add_option("--seed", o.train.seed, "Seed for split, SMOTE, shuffling and initialization")
      ->capture_default_str();
  sub->add_option("--val-fraction", o.train.val_fraction, "Stratified validation fraction")->capture_default_str();
  sub->add_flag("--no-smote", [&o](std::int64_t) { o.train.smote_enabled = false; }, "Disable SMOTE on the training split");
  if (finetune)
    sub->add_flag("--freeze-features", o.train.freeze_features, "Keep both convolution branches fixed");
  sub->add_option("--threshold", o.train.threshold, "Decision threshold on the anomaly probability")
      ->capture_default_str();
}

void add_common(CLI::App* sub, Options& o, bool schema) {
  if (schema) sub->add_option("--schema", o.schema, "Schema config (JSON)");
  sub->add_option("--out", o.out, "Output directory")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-scale convolutional LSTM anomaly detector for cellular KPI data", std::string(kToolName)};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  Options o;
  Options finetune_opts;
  finetune_opts.train = TrainConfig::finetune();
  std::vector<std::string> replay_out;

  auto* eda = app.add_subcommand("eda", "Class balance and feature correlation reports");
  eda->add_option("dataset", o.dataset, "CSV file")->required();
  add_common(eda, o, true);

  auto* train = app.add_subcommand("train", "Train from scratch");
  train->add_option("dataset", o.dataset, "CSV file")->required();
  add_common(train, o, true);
  add_train_flags(train, o, false);

  auto* ft = app.add_subcommand("finetune", "Continue training a checkpoint on a new dataset");
  ft->add_option("checkpoint", finetune_opts.checkpoint, "Source checkpoint")->required();
  ft->add_option("dataset", finetune_opts.dataset, "CSV file")->required();
  add_common(ft, finetune_opts, true);
  add_train_flags(ft, finetune_opts, true);

  auto* ev = app.add_subcommand("evaluate", "Score a labeled dataset");
  ev->add_option("checkpoint", o.checkpoint, "Checkpoint")->required();
  ev->add_option("dataset", o.dataset, "CSV file")->required();
  add_common(ev, o, true);
  ev->add_option("--threshold", o.train.threshold, "Decision threshold")->capture_default_str();

  auto* pr = app.add_subcommand("predict", "Write per-row probability and label");
  pr->add_option("checkpoint", o.checkpoint, "Checkpoint")->required();
  pr->add_option("dataset", o.dataset, "CSV file, label column optional")->required();
  add_common(pr, o, true);
  pr->add_option("--threshold", o.train.threshold, "Decision threshold")->capture_default_str();

  auto* ins = app.add_subcommand("inspect", "Describe a checkpoint");
  ins->add_option("checkpoint", o.checkpoint, "Checkpoint")->required();
  add_common(ins, o, false);

  auto* syn = app.add_subcommand("synth", "Generate a synthetic KPI dataset");
  syn->add_option("--domain", o.domain, "source or target")->capture_default_str();
  syn->add_option("--rows", o.rows, "Row count")->capture_default_str();
  syn->add_option("--anomaly-rate", o.anomaly_rate, "Target anomaly fraction")->capture_default_str();
  syn->add_option("--noise", o.noise, "Label noise scale")->capture_default_str();
  syn->add_option("--seed", o.train.seed, "Seed")->capture_default_str();
  add_common(syn, o, false);

  auto* rep = app.add_subcommand("replay", "Rerun a recorded command from its run_manifest.json");
  rep->add_option("manifest", o.manifest, "run_manifest.json")->required();
  rep->add_option("--out", replay_out, "Output directory (default: the recorded one)")->expected(1);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  CLI::App* sub = app.get_subcommands().front();
  const Options& opts = sub == ft ? finetune_opts : o;
  try {
    if (sub == rep) return cmd_replay(opts, replay_out, out, err);
    Run run(sub->get_name(), args, absolute(opts.out));
    int code = kExitOk;
    if (sub == eda) code = cmd_eda(opts, run, out);
    else if (sub == train) code = cmd_train(opts, run, out, err);
    else if (sub == ft) code = cmd_finetune(opts, run, out, err);
    else if (sub == ev) code = cmd_evaluate(opts, run, out);
    else if (sub == pr) code = cmd_predict(opts, run, out);
    else if (sub == ins) code = cmd_inspect(opts, run, out);
    else if (sub == syn) code = cmd_synth(opts, run, out);
    run.write_manifest();
    return code;
  } catch (const CompatibilityError& e) {
    err << kToolName << ": incompatible checkpoint: " << e.what() << "\n";
    return kExitCompatibility;
  } catch (const FormatError& e) {
    err << kToolName << ": corrupt artifact: " << e.what() << "\n";
    return kExitCorrupt;
  } catch (const Error& e) {
    err << kToolName << ": error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << kToolName << ": internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace msclstm::cli
