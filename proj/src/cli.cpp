#include "oodbatch/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "oodbatch/data.hpp"
#include "oodbatch/errors.hpp"
#include "oodbatch/experiment.hpp"
#include "oodbatch/metrics.hpp"

namespace oodbatch {

namespace {

namespace fs = std::filesystem;

/// Expands `--config FILE.json` (a flat object keyed by long option names)
/// into ordinary arguments placed right after the subcommand name. Keys
/// already given on the command line are skipped, so explicit flags win.
/// CLI11 only reads config files attached to the top-level app, hence the
/// expansion happens before parsing.
std::vector<std::string> expand_config(const CLI::App& app, const std::vector<std::string>& args) {
  if (args.empty()) return args;
  const CLI::App* sub = app.get_subcommand_no_throw(args.front());
  if (sub == nullptr) return args;

  std::vector<std::string> rest;
  std::string config_path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config_path.empty()) return args;

  std::ifstream in(config_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + config_path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");

  auto given = [&](const std::string& flag) {
    return std::any_of(rest.begin(), rest.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  auto scalar = [](const Json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw ConfigError("config values must be strings, numbers, booleans or arrays of those");
  };

  std::vector<std::string> expanded{args.front()};
  for (const auto& [key, value] : j.items()) {
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr || key == "config" || key == "help")
      throw ConfigError("unknown key '" + key + "' in config file " + config_path);
    if (given(flag)) continue;
    if (opt->get_expected_max() == 0) {  // plain flag
      if (!value.is_boolean()) throw ConfigError("config key '" + key + "' must be true or false");
      if (value.get<bool>()) expanded.push_back(flag);
      continue;
    }
    expanded.push_back(flag);
    if (value.is_array()) {
      for (const auto& v : value) expanded.push_back(scalar(v));
    } else {
      expanded.push_back(scalar(value));
    }
  }
  expanded.insert(expanded.end(), rest.begin(), rest.end());
  return expanded;
}

struct TrainFlags {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool amsgrad = true;
  std::string model = "mlp1";
  std::size_t hidden = 64;
  std::size_t image_size = 112;
  double max_rotation = 45.0;
  double max_translate = 0.15;
  double scale_min = 0.85;
  double scale_max = 1.15;
  bool no_augment = false;
  std::size_t patience = 0;
  std::vector<std::size_t> train_n;
  std::size_t valid_n = 0;
  std::size_t test_n = 0;

  TrainConfig to_config() const {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = batch_size;
    c.optim = {lr, weight_decay, beta1, beta2, eps, amsgrad};
    c.aug.target_size = image_size;
    c.aug.max_rotation = max_rotation;
    c.aug.max_translate = max_translate;
    c.aug.scale_low = scale_min;
    c.aug.scale_high = scale_max;
    c.aug.enabled = !no_augment;
    c.model = parse_model_kind(model);
    c.hidden_dim = hidden;
    if (patience) c.early_stop_patience = patience;
    c.train_n = train_n;
    if (valid_n) c.valid_n = valid_n;
    if (test_n) c.test_n = test_n;
    return c;
  }
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--epochs", f.epochs, "Training epochs")->check(CLI::PositiveNumber);
  app->add_option("--batch-size", f.batch_size, "Mini-batch size (balanced: split evenly over train envs)")
      ->check(CLI::PositiveNumber);
  app->add_option("--lr", f.lr, "Adam learning rate (fixed)");
  app->add_option("--weight-decay", f.weight_decay, "Coupled L2 weight decay");
  app->add_option("--beta1", f.beta1, "Adam beta1");
  app->add_option("--beta2", f.beta2, "Adam beta2");
  app->add_option("--eps", f.eps, "Adam epsilon");
  app->add_option("--amsgrad", f.amsgrad, "Use the AMSGrad variant (true|false)");
  app->add_option("--model", f.model, "Classifier: logistic|mlp1")->check(CLI::IsMember({"logistic", "mlp1"}));
  app->add_option("--hidden", f.hidden, "Hidden units (mlp1)")->check(CLI::PositiveNumber);
  app->add_option("--image-size", f.image_size, "Square side the images are resampled to")
      ->check(CLI::PositiveNumber);
  app->add_option("--max-rotation", f.max_rotation, "Augmentation: max |rotation| in degrees");
  app->add_option("--max-translate", f.max_translate, "Augmentation: max |translation| as a fraction of the side");
  app->add_option("--scale-min", f.scale_min, "Augmentation: lower scale bound");
  app->add_option("--scale-max", f.scale_max, "Augmentation: upper scale bound");
  app->add_flag("--no-augment", f.no_augment, "Disable augmentation (resize only)");
  app->add_option("--patience", f.patience, "Early-stop patience in epochs (0 = run all epochs, keep best)");
  app->add_option("--train-n", f.train_n, "Sequential subset size per train env (one value or two)")
      ->delimiter(',')
      ->expected(1, 2);
  app->add_option("--valid-n", f.valid_n, "Sequential subset size of the validation env (0 = all)");
  app->add_option("--test-n", f.test_n, "Sequential subset size of the test env (0 = all)");
}

std::vector<Environment> load_environments(const fs::path& dir, const std::vector<std::string>& names) {
  std::vector<Environment> envs;
  for (const auto& n : names) envs.push_back(load_environment(dir, n));
  return envs;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f.flush()) throw std::runtime_error("write failed for " + path.string());
}

void print_counts(std::ostream& out, const Environment& env) {
  out << env.name() << ": " << env.size() << " images " << env.pack.height << "x" << env.pack.width;
  const auto counts = class_counts(env.manifest);
  for (std::size_t t = 0; t < counts.size(); ++t)
    out << " | " << env.manifest.tasks[t] << " +" << counts[t].n_positive << " -" << counts[t].n_negative << " ?"
        << counts[t].n_missing;
  out << '\n';
}

// ---- synth ------------------------------------------------------------------

struct SynthFlags {
  std::size_t envs = 4;
  std::size_t n = 1000;
  std::size_t image_size = 16;
  double core = 0.6;
  std::vector<double> spurious;
  double noise = 0.05;
  double missing = 0.1;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  SynthConfig cfg;
  cfg.n_envs = f.envs;
  cfg.n_per_env = f.n;
  cfg.image_size = f.image_size;
  cfg.core_strength = f.core;
  if (f.spurious.empty()) {
    cfg.spurious_strength.clear();
    for (std::size_t e = 0; e < f.envs; ++e) cfg.spurious_strength.push_back(e % 2 ? -0.8 : 0.8);
  } else {
    cfg.spurious_strength = f.spurious;
  }
  cfg.noise_std = f.noise;
  cfg.missing_rate = f.missing;
  cfg.seed = f.seed;
  cfg.validate();

  const auto envs = generate_synthetic(cfg);
  for (const auto& env : envs) {
    save_environment(f.out, env);
    print_counts(out, env);
  }
  out << "wrote " << envs.size() << " environments to " << f.out << '\n';
  return 0;
}

// ---- run --------------------------------------------------------------------

struct RunFlags {
  std::string data;
  std::vector<std::string> train;
  std::string valid, test;
  std::string mode = "balanced";
  std::uint64_t seed = 0;
  std::string out;
  TrainFlags train_flags;
};

int cmd_run(const RunFlags& f, std::ostream& out) {
  ExperimentPlan plan;
  plan.train_envs = {f.train.at(0), f.train.at(1)};
  plan.valid_env = f.valid;
  plan.test_env = f.test;
  plan.seed = f.seed;
  plan.mode = parse_sampler_mode(f.mode);
  plan.validate();
  const TrainConfig cfg = f.train_flags.to_config();
  cfg.validate();
  SamplerConfig{plan.mode, cfg.batch_size, plan.seed, true}.validate(2);

  const auto data = load_environments(f.data, {plan.train_envs[0], plan.train_envs[1], plan.valid_env, plan.test_env});
  fs::create_directories(f.out);
  const fs::path dir(f.out);

  std::ofstream log(dir / "run_log.jsonl", std::ios::binary);
  if (!log) throw std::runtime_error("cannot write " + (dir / "run_log.jsonl").string());
  const RunResult r = train_one(plan, data, cfg, [&](const EpochRecord& rec) {
    log << epoch_record_to_json(rec).dump() << '\n';
    log.flush();
  });

  save_checkpoint(dir / "best_checkpoint.oodc", r.best_state);
  Json result;
  result["config"] = run_config_json(plan, cfg);
  result["best_epoch"] = r.best_epoch;
  result["best_valid_auc"] = r.best_valid_auc;
  result["best_valid_report"] = report_to_json(r.best_valid_report, plan.label(), plan.seed);
  result["test_report"] = report_to_json(r.test_report, plan.label(), plan.seed);
  result["all_masked_batches"] = r.all_masked_batches;
  write_text(dir / "result.json", result.dump(2) + "\n");

  out << plan.label() << " mode=" << to_string(plan.mode) << " seed=" << plan.seed << ": best valid AUC "
      << format_2dp(r.best_valid_auc) << " at epoch " << r.best_epoch << ", test mean AUC "
      << (r.test_report.mean_auc ? format_2dp(*r.test_report.mean_auc) : "-") << '\n';
  return 0;
}

// ---- suite ------------------------------------------------------------------

struct SuiteFlags {
  std::string data;
  std::vector<std::string> datasets{"NIH", "CHEX", "MIMIC", "PC"};
  std::string preset = "paper6";
  std::vector<std::string> splits;
  std::vector<std::uint64_t> seeds{0, 42, 99};
  std::vector<std::string> modes{"balanced", "random"};
  std::size_t jobs = 1;
  std::string out;
  TrainFlags train_flags;
};

ExperimentPlan parse_split(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
  if (parts.size() != 4) throw ConfigError("--split expects TRAIN1,TRAIN2,VALID,TEST, got '" + text + "'");
  ExperimentPlan plan;
  plan.train_envs = {parts[0], parts[1]};
  plan.valid_env = parts[2];
  plan.test_env = parts[3];
  plan.validate();
  return plan;
}

int cmd_suite(const SuiteFlags& f, std::ostream& out, std::ostream& err) {
  std::vector<ExperimentPlan> plans;
  std::vector<std::string> names;
  if (f.splits.empty()) {
    plans = enumerate_plans(f.datasets, parse_plan_preset(f.preset));
    names = f.datasets;
  } else {
    for (const auto& s : f.splits) {
      plans.push_back(parse_split(s));
      for (const auto& n : {plans.back().train_envs[0], plans.back().train_envs[1], plans.back().valid_env,
                            plans.back().test_env})
        if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
    }
  }
  std::vector<SamplerMode> modes;
  for (const auto& m : f.modes) modes.push_back(parse_sampler_mode(m));
  const TrainConfig cfg = f.train_flags.to_config();
  cfg.validate();
  for (auto mode : modes) SamplerConfig{mode, cfg.batch_size, 0, true}.validate(2);

  const auto data = load_environments(f.data, names);
  fs::create_directories(f.out);
  const fs::path dir(f.out);
  try {
    const SuiteResult suite = run_suite(plans, data, cfg, f.seeds, modes, f.jobs);
    write_text(dir / "suite.json", suite_to_json(suite).dump(2) + "\n");
    const std::string table = render_table(suite);
    write_text(dir / "suite_table.txt", table);
    out << table;
  } catch (const SuiteFailure& e) {
    Json partial = suite_to_json(e.partial());
    partial["error"] = e.what();
    write_text(dir / "suite_partial.json", partial.dump(2) + "\n");
    err << "error: " << e.what() << "\npartial results written to " << (dir / "suite_partial.json").string() << '\n';
    return 1;
  }
  return 0;
}

// ---- report -----------------------------------------------------------------

int cmd_report(const std::string& in_path, const std::string& out_path, std::ostream& out) {
  std::ifstream in(in_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + in_path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw FormatError(std::string("invalid suite JSON: ") + e.what());
  }
  const std::string table = render_table(suite_from_json(j));
  if (!out_path.empty()) write_text(out_path, table);
  out << table;
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Balanced per-environment mini-batch training for out-of-distribution generalization", "oodbatch"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.footer(
      "Each subcommand accepts --config FILE.json with keys named after the long flags "
      "(e.g. {\"epochs\": 30, \"train\": [\"e0\", \"e1\"]}). Flags given on the command "
      "line override values from the file.");

  // Expanded away before parsing; registered so it shows up in --help.
  auto with_config = [](CLI::App* sub) {
    sub->add_option("--config", "JSON config file; explicit flags take precedence");
  };

  SynthFlags synth;
  auto* s = app.add_subcommand("synth", "Generate synthetic multi-environment datasets (CSV manifest + XRPK pack)");
  with_config(s);
  s->add_option("--envs", synth.envs, "Number of environments")->check(CLI::Range(2, 1000));
  s->add_option("--n", synth.n, "Images per environment")->check(CLI::PositiveNumber);
  s->add_option("--image-size", synth.image_size, "Image side in pixels")->check(CLI::Range(8, 4096));
  s->add_option("--core", synth.core, "Label correlation of the core blobs, all envs")->check(CLI::Range(0.0, 1.0));
  s->add_option("--spurious", synth.spurious, "Per-env corner-patch correlation (default alternates +0.8,-0.8)")
      ->delimiter(',');
  s->add_option("--noise", synth.noise, "Per-pixel noise std (intensity fraction)");
  s->add_option("--missing", synth.missing, "Probability a label is missing");
  s->add_option("--seed", synth.seed, "Generator seed");
  s->add_option("--out", synth.out, "Output directory")->required();

  RunFlags run;
  auto* r = app.add_subcommand("run", "Train one leave-a-dataset-out split");
  with_config(r);
  r->add_option("--data", run.data, "Directory holding <env>.csv and <env>.xrpk")->required();
  r->add_option("--train", run.train, "Two training environments")->delimiter(',')->expected(2)->required();
  r->add_option("--valid", run.valid, "Validation environment")->required();
  r->add_option("--test", run.test, "Test environment")->required();
  r->add_option("--mode", run.mode, "Batch sampling: balanced|random")->check(CLI::IsMember({"balanced", "random"}));
  r->add_option("--seed", run.seed, "Seed for initialization, sampling and augmentation");
  r->add_option("--out", run.out, "Output directory for run_log.jsonl, best_checkpoint.oodc, result.json")
      ->required();
  add_train_flags(r, run.train_flags);

  SuiteFlags suite;
  auto* u = app.add_subcommand("suite", "Run every split x seed x mode and print the comparison table");
  with_config(u);
  u->add_option("--data", suite.data, "Directory holding <env>.csv and <env>.xrpk")->required();
  u->add_option("--datasets", suite.datasets, "Four environments in the role order NIH,CHEX,MIMIC,PC")
      ->delimiter(',')
      ->expected(4);
  u->add_option("--preset", suite.preset, "Split preset: paper6|all12")->check(CLI::IsMember({"paper6", "all12"}));
  u->add_option("--split", suite.splits, "Explicit split TRAIN1,TRAIN2,VALID,TEST (repeatable; overrides --preset)");
  u->add_option("--seeds", suite.seeds, "Seeds")->delimiter(',');
  u->add_option("--modes", suite.modes, "Sampler modes to compare")
      ->delimiter(',')
      ->check(CLI::IsMember({"balanced", "random"}));
  u->add_option("--jobs", suite.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  u->add_option("--out", suite.out, "Output directory for suite.json and suite_table.txt")->required();
  add_train_flags(u, suite.train_flags);

  std::string report_in, report_out;
  auto* p = app.add_subcommand("report", "Re-render a suite.json as the comparison table");
  p->add_option("--in", report_in, "suite.json produced by `suite`")->required();
  p->add_option("--out", report_out, "Also write the table to this file");

  std::vector<std::string> argv_store{"oodbatch"};
  try {
    const auto expanded = expand_config(app, args);
    argv_store.insert(argv_store.end(), expanded.begin(), expanded.end());
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*s) return cmd_synth(synth, out);
    if (*r) return cmd_run(run, out);
    if (*u) return cmd_suite(suite, out, err);
    if (*p) return cmd_report(report_in, report_out, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace oodbatch
