#include "dcn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "dcn/config.hpp"
#include "dcn/errors.hpp"
#include "dcn/selftest.hpp"
#include "dcn/synthetic.hpp"
#include "dcn/trainer.hpp"

namespace dcn {

namespace {

namespace fs = std::filesystem;

constexpr int kExitSelftest = 1;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitArtifact = 4;

std::string flag_name(const std::string& key) {
  std::string name = key;
  std::replace(name.begin(), name.end(), '_', '-');
  return "--" + name;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << text;
  if (!out) throw ArtifactError("failed writing " + path.string());
}

fs::path prepare_out_dir(const RunConfig& config) {
  const fs::path dir(config.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ArtifactError("cannot create output directory " + dir.string() + ": " + ec.message());
  write_text(dir / "config.txt", config.to_text());
  return dir;
}

Dataset load_dataset(const RunConfig& config) {
  if (config.data.empty()) throw InputError("this command needs --data DIR (a prepared split directory)");
  return Dataset::from_prepared(read_prepared(config.data));
}

std::string report_text(const MetricReport& report) { return report.to_json().dump(2) + "\n"; }

int cmd_prepare(const RunConfig& config, std::ostream& out, std::ostream& err) {
  if (config.input.empty()) throw InputError("prepare needs --input PATH");
  const InteractionLog log = ingest_csv(config.input);
  const SplitSpec spec = resolve_split(config, log.events);
  const PreparedData data = prepare(log, config.n_core, spec);
  if (data.splits.train.empty() && data.splits.valid.empty() && data.splits.test.empty())
    err << "warning: " << config.n_core << "-core filtering removed every interaction; writing empty splits\n";
  const fs::path dir = prepare_out_dir(config);
  write_prepared(data, dir);
  out << "prepared " << data.num_users << " users, " << data.num_items << " items: train "
      << data.splits.train.size() << ", valid " << data.splits.valid.size() << ", test " << data.splits.test.size()
      << " -> " << dir.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& config, std::ostream& out) {
  const Dataset data = load_dataset(config);
  const fs::path dir = prepare_out_dir(config);
  const TrainResult result = train(config.train, data, [&out](const EpochRecord& r) {
    out << "epoch " << r.epoch << "  L_i " << r.loss_item << "  L_e " << r.loss_repr << "  L_p " << r.loss_interest
        << "  L_total " << r.loss_total << "  val_auc " << r.val_auc << "\n";
  });
  save_checkpoint(result.params, result.init_rng_state, config.checkpoint_path());
  std::ostringstream history;
  result.history.write_csv(history);
  write_text(dir / "history.csv", history.str());
  const EvalOptions options{config.train.k_neg_eval, config.train.top_k, config.train.seed};
  for (Centricity c : {Centricity::kUser, Centricity::kItem}) {
    const MetricReport report = evaluate(result.params, data.splits.test, data.index, data.train, c, options);
    write_text(dir / ("report_" + to_string(c) + ".json"), report_text(report));
    out << to_string(c) << "-centric test: auc " << report.auc << "  gauc " << report.gauc << "  mrr "
        << report.mrr << "  ndcg@" << report.k << " " << report.ndcg << "\n";
  }
  out << "best epoch " << result.history.best_epoch << "; checkpoint " << config.checkpoint_path().string() << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig& config, std::ostream& out) {
  const fs::path ckpt = config.checkpoint_path();
  if (!fs::exists(ckpt)) throw ArtifactError("checkpoint not found: " + ckpt.string());
  const Dataset data = load_dataset(config);
  config.train.validate();
  SeededRng placeholder(0);
  DcnParameters params(config.train.model_config(data.num_users, data.num_items), placeholder);
  load_into(ckpt, params);
  const fs::path dir = prepare_out_dir(config);
  const EvalOptions options{config.train.k_neg_eval, config.train.top_k, config.train.seed};
  for (Centricity c : config.centricities()) {
    const std::string text =
        report_text(evaluate(params, data.splits.test, data.index, data.train, c, options));
    write_text(dir / ("report_" + to_string(c) + ".json"), text);
    out << text;
  }
  return 0;
}

void write_tables(const fs::path& dir, const std::string& stem, const std::vector<RunReport>& rows,
                  std::ostream& out) {
  std::ostringstream csv;
  write_table_csv(csv, rows);
  write_text(dir / (stem + ".csv"), csv.str());
  write_text(dir / (stem + ".json"), table_json(rows).dump(2) + "\n");
  out << csv.str();
}

int cmd_ablate(const RunConfig& config, std::ostream& out) {
  const Dataset data = load_dataset(config);
  const fs::path dir = prepare_out_dir(config);
  write_tables(dir, "ablation", ablate(config.train, data), out);
  return 0;
}

int cmd_sweep(const RunConfig& config, std::ostream& out) {
  const Dataset data = load_dataset(config);
  const fs::path dir = prepare_out_dir(config);
  write_tables(dir, "sweep", sweep_lambda(config.train, data, config.grid), out);
  return 0;
}

int cmd_selftest(const RunConfig& config, const std::string& fault_name, std::ostream& out) {
  SelftestOptions options;
  options.seed = config.train.seed;
  if (!fault_name.empty()) {
    options.fault = op_from_name(fault_name);
    if (!options.fault) throw InputError("unknown op '" + fault_name + "' for --inject-fault");
    out << "injecting a gradient fault into op '" << fault_name << "'\n";
  }
  const auto outcomes = run_selftest(options);
  const bool ok = print_selftest_summary(out, outcomes);
  if (!ok && options.fault) out << "gradient fault detected in op '" << fault_name << "'\n";
  return ok ? 0 : kExitSelftest;
}

int cmd_synth(const RunConfig& config, const SyntheticSpec& spec, std::ostream& out) {
  const InteractionLog log = make_planted_log(spec);
  const fs::path dir = prepare_out_dir(config);
  std::ofstream csv(dir / "interactions.csv", std::ios::binary | std::ios::trunc);
  if (!csv) throw ArtifactError("cannot write " + (dir / "interactions.csv").string());
  csv << "user_id,item_id,timestamp,label\n";
  for (const auto& e : log.events)
    csv << log.user_raw[e.user] << ',' << log.item_raw[e.item] << ',' << e.timestamp << ',' << e.label << '\n';
  const SplitSpec split = planted_split(spec.num_interactions);
  out << "wrote " << log.events.size() << " interactions to " << (dir / "interactions.csv").string()
      << "; suggested --train-end " << split.train_end << " --valid-end " << split.valid_end << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-sequence recommendation: data preparation, training and dual-centric evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "flat key = value config file (flags override it)");
  std::map<std::string, std::string> flag_values;
  for (const auto& key : RunConfig::keys()) app.add_option(flag_name(key), flag_values[key], "config key " + key);

  auto* prepare_cmd = app.add_subcommand("prepare", "ingest a CSV, apply n-core filtering and split by time");
  auto* train_cmd = app.add_subcommand("train", "train on prepared splits; write checkpoint, history and reports");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
  auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate the four DR x DI combinations");
  auto* sweep_cmd = app.add_subcommand("sweep", "train and evaluate one model per contrastive weight in --grid");
  auto* selftest_cmd = app.add_subcommand("selftest", "gradient checks, metric oracles and invariant suites");
  auto* synth_cmd = app.add_subcommand("synth", "write a planted-pattern interaction CSV");

  std::string fault_name;
  selftest_cmd->add_option("--inject-fault", fault_name, "scale the backward rule of this op (test fixture)");
  SyntheticSpec spec;
  synth_cmd->add_option("--users", spec.num_users, "number of users")->capture_default_str();
  synth_cmd->add_option("--items", spec.num_items, "number of items")->capture_default_str();
  synth_cmd->add_option("--interactions", spec.num_interactions, "number of events")->capture_default_str();
  synth_cmd->add_option("--clusters", spec.clusters, "interest clusters")->capture_default_str();
  synth_cmd->add_option("--noise", spec.noise, "probability of an out-of-cluster event")->capture_default_str();
  synth_cmd->add_option("--drift", spec.drift_fraction, "fraction of items that migrate")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    RunConfig config;
    if (!config_path.empty()) apply_config_file(config, config_path);
    for (const auto& key : RunConfig::keys())
      if (app.get_option(flag_name(key))->count() > 0) config.set(key, flag_values[key]);
    spec.seed = config.train.seed;

    if (prepare_cmd->parsed()) return cmd_prepare(config, out, err);
    if (train_cmd->parsed()) {
      config.checkpoint = config.checkpoint_path().string();
      return cmd_train(config, out);
    }
    if (evaluate_cmd->parsed()) return cmd_evaluate(config, out);
    if (ablate_cmd->parsed()) return cmd_ablate(config, out);
    if (sweep_cmd->parsed()) return cmd_sweep(config, out);
    if (selftest_cmd->parsed()) return cmd_selftest(config, fault_name, out);
    if (synth_cmd->parsed()) return cmd_synth(config, spec, out);
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ArtifactError& e) {
    err << "artifact error: " << e.what() << "\n";
    return kExitArtifact;
  } catch (const SamplingError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "artifact error: " << e.what() << "\n";
    return kExitArtifact;
  }
  return kExitInput;
}

}  // namespace dcn
