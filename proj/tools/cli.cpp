#include "gmp/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gmp/equivalence.hpp"
#include "gmp/error.hpp"
#include "gmp/experiment.hpp"
#include "gmp/gradcheck.hpp"

namespace gmp {

using nlohmann::json;

namespace {

/// Raised for bad flag combinations discovered after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

template <class T, class F>
std::vector<T> parse_list(const std::string& text, F&& parse_one) {
  std::vector<T> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) out.push_back(parse_one(item));
  if (out.empty()) throw UsageError("empty list '" + text + "'");
  return out;
}

std::size_t to_size(const std::string& s) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size() || s.front() == '-') throw UsageError("expected a non-negative integer, got '" + s + "'");
  return v;
}

/// "none", "random:0,0.2,0.4" or a single "random:0.2".
std::vector<NoiseSpec> parse_noise_axis(const std::string& text) {
  if (text == "none") return {NoiseSpec{}};
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw UsageError("noise axis is none or <kind>:<p>[,<p>...]");
  const std::string kind = text.substr(0, colon);
  return parse_list<NoiseSpec>(text.substr(colon + 1), [&](const std::string& p) { return parse_noise(kind + ":" + p); });
}

/// Options shared by train and sweep that feed an ExperimentConfig.
struct RunOptions {
  std::string config_path;
  std::string dataset;
  std::string backbone;
  std::string method;
  std::size_t r = 0;
  std::string placement;
  std::size_t shots = 0;
  std::size_t epochs = 0;
  double lr = 0.0;
  std::string optimizer;
  double momentum = 0.0;
  double tau = 0.0;
  std::size_t k = 0;
  std::string task;
  std::string noise;
  bool file_splits = false;
  bool record_time = false;
  std::uint64_t seed = 0;
  std::size_t repeats = 0;
  std::string seeds;

  CLI::Option* seed_opt = nullptr;
  std::vector<std::pair<std::string, CLI::Option*>> opts;

  void add(CLI::App* app, bool axes) {
    auto reg = [&](const char* name, CLI::Option* o) { opts.emplace_back(name, o); };
    app->add_option("--config", config_path, "ExperimentConfig JSON; flags override its fields");
    reg("dataset", app->add_option("--dataset", dataset, "fixture, fixture@<seed>, or a graph JSON path"));
    reg("backbone", app->add_option("--backbone", backbone, "fixture, init:<kind>:<dims>[:<seed>], or a backbone JSON path"));
    if (!axes) {
      reg("method", app->add_option("--method", method, "none, lr_gmp, conditional_lr_gmp or a GDP kind"));
      reg("r", app->add_option("--r", r, "prompt rank")->check(CLI::PositiveNumber));
      reg("placement", app->add_option("--placement", placement, "first, middle, last or all"));
      reg("shots", app->add_option("--shots", shots, "labelled nodes per class")->check(CLI::PositiveNumber));
      reg("noise", app->add_option("--noise", noise, "none or random:<p>"));
    }
    reg("epochs", app->add_option("--epochs", epochs)->check(CLI::PositiveNumber));
    reg("lr", app->add_option("--lr", lr)->check(CLI::NonNegativeNumber));
    reg("optimizer", app->add_option("--optimizer", optimizer)->check(CLI::IsMember({"adam", "sgd"})));
    reg("momentum", app->add_option("--momentum", momentum, "SGD momentum")->check(CLI::NonNegativeNumber));
    reg("tau", app->add_option("--tau", tau, "assignment temperature")->check(CLI::PositiveNumber));
    reg("k", app->add_option("--k", k, "basis size / prompt nodes")->check(CLI::PositiveNumber));
    reg("task", app->add_option("--task", task)->check(CLI::IsMember({"node", "graph"})));
    reg("file_splits", app->add_flag("--file-splits", file_splits, "use the splits stored in the dataset file"));
    app->add_flag("--record-time", record_time, "fill wall_time_ms (breaks byte-identical reruns)");
    seed_opt = app->add_option("--seed", seed, "first seed");
    app->add_option("--repeats", repeats, "number of consecutive seeds starting at --seed")->check(CLI::PositiveNumber);
    app->add_option("--seeds", seeds, "explicit comma-separated seed list");
  }

  bool given(const char* name) const {
    for (const auto& [n, o] : opts) {
      if (n == name) return o->count() > 0;
    }
    return false;
  }

  ExperimentConfig build() const {
    ExperimentConfig c;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw UsageError("cannot open config " + config_path);
      json doc;
      try {
        doc = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ParseError("", std::string("malformed config: ") + e.what());
      }
      c = parse_experiment_config(doc);
    }
    if (given("dataset")) c.dataset = dataset;
    if (given("backbone")) c.backbone = backbone;
    if (given("method")) c.train.method = parse_method(method);
    if (given("r")) c.train.r = r;
    if (given("placement")) c.train.placement = parse_placement(placement);
    if (given("shots")) c.train.shots = shots;
    if (given("noise")) c.noise = parse_noise(noise);
    if (given("epochs")) c.train.epochs = epochs;
    if (given("lr")) c.train.lr = lr;
    if (given("optimizer")) {
      if (optimizer == "sgd") c.train.optimizer = Sgd{momentum};
      else c.train.optimizer = Adam{};
    } else if (given("momentum")) {
      if (!std::holds_alternative<Sgd>(c.train.optimizer)) throw UsageError("--momentum needs --optimizer sgd");
      c.train.optimizer = Sgd{momentum};
    }
    if (given("tau")) c.train.tau = tau;
    if (given("k")) c.train.k = k;
    if (given("task")) c.train.task = task == "graph" ? Task::Graph : Task::Node;
    if (given("file_splits")) c.file_splits = file_splits;
    c.record_time = record_time;

    if (!seeds.empty()) {
      if (seed_opt->count() > 0 || repeats > 0) throw UsageError("--seeds excludes --seed and --repeats");
      c.seeds = parse_list<std::uint64_t>(seeds, [](const std::string& s) { return to_size(s); });
    } else if (seed_opt->count() > 0) {
      c.seeds.clear();
      for (std::size_t i = 0; i < std::max<std::size_t>(repeats, 1); ++i) c.seeds.push_back(seed + i);
    } else if (repeats > 0) {
      throw UsageError("--repeats needs --seed");
    }
    if (c.seeds.empty()) throw UsageError("no seed given: pass --seed, --seeds, or seeds in the config file");
    validate(c.train);
    return c;
  }
};

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph message prompting: equivalence checks, gradient checks and prompt-tuning experiments", "gmp"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "write a synthetic graph (and optionally the fixture backbone)");
  std::string gen_sbm, gen_out, gen_backbone_out;
  double gen_p_in = 0.3, gen_p_out = 0.02, gen_shift = 1.0, gen_std = 1.0;
  std::size_t gen_dim = 4, gen_split_shots = 0;
  bool gen_fixture = false;
  std::uint64_t gen_seed = 0;
  gen->add_option("--sbm", gen_sbm, "comma-separated block sizes");
  gen->add_flag("--fixture", gen_fixture, "the separable two-block fixture");
  gen->add_option("--p-in", gen_p_in)->check(CLI::Range(0.0, 1.0));
  gen->add_option("--p-out", gen_p_out)->check(CLI::Range(0.0, 1.0));
  gen->add_option("--dim", gen_dim)->check(CLI::PositiveNumber);
  gen->add_option("--shift", gen_shift, "feature mean shift per block");
  gen->add_option("--std", gen_std, "feature noise std")->check(CLI::NonNegativeNumber);
  gen->add_option("--splits", gen_split_shots, "store a few-shot split with this many shots");
  gen->add_option("--seed", gen_seed)->required();
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--backbone-out", gen_backbone_out, "also write the fixture backbone here");

  // verify
  auto* verify = app.add_subcommand("verify", "check GDP to GMP translations on random graphs");
  int verify_prop = 0;
  VerifyConfig vcfg;
  std::string verify_mutant = "none", verify_out;
  verify->add_option("--prop", verify_prop, "single proposition 1-5 (default all)")->check(CLI::Range(1, 5));
  verify->add_option("--trials", vcfg.trials)->check(CLI::PositiveNumber);
  verify->add_option("--max-nodes", vcfg.max_nodes)->check(CLI::Range(2, 1000));
  verify->add_option("--tol", vcfg.tolerance)->check(CLI::NonNegativeNumber);
  verify->add_option("--mutant", verify_mutant)->check(CLI::IsMember({"none", "drop-mask"}));
  verify->add_option("--seed", vcfg.seed)->required();
  verify->add_option("--out", verify_out, "also write the JSON report here");

  // gradcheck
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of the backward pass");
  std::uint64_t gc_seed = 0;
  std::string gc_mutant = "none", gc_out;
  gradcheck_cmd->add_option("--seed", gc_seed)->required();
  gradcheck_cmd->add_option("--mutant", gc_mutant)->check(CLI::IsMember({"none", "sign-flip"}));
  gradcheck_cmd->add_option("--out", gc_out, "write the JSON report here");

  // train
  auto* train_cmd = app.add_subcommand("train", "prompt-tune one configuration");
  RunOptions train_opts;
  std::string train_csv, train_metrics;
  train_opts.add(train_cmd, false);
  train_cmd->add_option("--csv", train_csv, "append result rows to this CSV");
  train_cmd->add_option("--metrics", train_metrics, "write the metrics JSON here");

  // perturb
  auto* perturb = app.add_subcommand("perturb", "flip edges of a graph file");
  std::string pert_in, pert_out, pert_kind = "random";
  double pert_p = 0.0;
  std::size_t pert_target = 0, pert_budget = 0;
  std::uint64_t pert_seed = 0;
  perturb->add_option("--in", pert_in)->required();
  perturb->add_option("--out", pert_out)->required();
  perturb->add_option("--kind", pert_kind)->check(CLI::IsMember({"random", "targeted"}));
  perturb->add_option("--p", pert_p, "fraction of existing edges to flip (random)")->check(CLI::Range(0.0, 1.0));
  perturb->add_option("--target", pert_target, "target node (targeted)");
  perturb->add_option("--budget", pert_budget, "pairs to flip around the target (targeted)");
  perturb->add_option("--seed", pert_seed)->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Cartesian sweep, one summary row per cell");
  RunOptions sweep_opts;
  std::string sw_methods = "lr_gmp", sw_r = "2", sw_place = "all", sw_shots = "1", sw_noise = "none";
  std::string sw_out, sw_runs_csv, sw_format = "csv";
  std::size_t sw_jobs = std::max(1u, std::thread::hardware_concurrency());
  sweep_opts.add(sweep, true);
  sweep->add_option("--methods", sw_methods);
  sweep->add_option("--r", sw_r);
  sweep->add_option("--placement", sw_place);
  sweep->add_option("--shots", sw_shots);
  sweep->add_option("--noise", sw_noise, "none or random:<p>,<p>,...");
  sweep->add_option("--jobs", sw_jobs)->check(CLI::PositiveNumber);
  sweep->add_option("--out", sw_out, "summary file (default stdout)");
  sweep->add_option("--runs-csv", sw_runs_csv, "append per-run rows to this CSV");
  sweep->add_option("--format", sw_format)->check(CLI::IsMember({"csv", "md"}));

  // report
  auto* report = app.add_subcommand("report", "mean ± std table from a results CSV");
  std::string rep_in, rep_out, rep_format = "md";
  report->add_option("--in", rep_in)->required();
  report->add_option("--out", rep_out);
  report->add_option("--format", rep_format)->check(CLI::IsMember({"csv", "md"}));

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      if (gen_fixture == !gen_sbm.empty()) throw UsageError("gen needs exactly one of --fixture or --sbm");
      Graph g;
      if (gen_fixture) {
        g = fixture_graph(gen_seed);
      } else {
        SbmParams p;
        p.block_sizes = parse_list<std::size_t>(gen_sbm, to_size);
        p.p_in = gen_p_in;
        p.p_out = gen_p_out;
        p.node_dim = gen_dim;
        p.feature_shift = gen_shift;
        p.feature_std = gen_std;
        Rng rng(gen_seed);
        g = sbm_generate(rng, p);
      }
      std::optional<SplitSpec> splits;
      if (gen_split_shots > 0) {
        Rng rng = Rng(gen_seed).split(1);
        splits = sample_few_shot(*g.labels, gen_split_shots, rng);
      }
      save_json(g, gen_out, splits);
      if (!gen_backbone_out.empty()) save_backbone(fixture_backbone(), gen_backbone_out);
      out << "seed " << gen_seed << ": wrote " << gen_out << " (" << g.num_nodes << " nodes, " << g.num_edges()
          << " directed edges)\n";
      return kExitOk;
    }

    if (verify->parsed()) {
      vcfg.mutant = verify_mutant == "drop-mask" ? TranslatorMutant::DropMask : TranslatorMutant::None;
      std::vector<EquivReport> reports;
      if (verify_prop > 0) reports.push_back(verify_proposition(static_cast<Proposition>(verify_prop), vcfg));
      else reports = verify_all(vcfg);
      bool pass = true;
      json doc = {{"schema_version", 1}, {"seed", vcfg.seed}, {"mutant", verify_mutant}, {"reports", json::array()}};
      for (const auto& r : reports) {
        pass = pass && r.pass;
        doc["reports"].push_back(report_to_json(r));
      }
      doc["pass"] = pass;
      const std::string text = doc.dump(2) + "\n";
      out << text;
      if (!verify_out.empty()) write_text(verify_out, text);
      return pass ? kExitOk : kExitFailed;
    }

    if (gradcheck_cmd->parsed()) {
      const auto reports = gradcheck_suite(gc_seed, gc_mutant == "sign-flip" ? GradMutant::SignFlip : GradMutant::None);
      bool pass = true;
      double worst = 0.0;
      json doc = {{"schema_version", 1}, {"seed", gc_seed}, {"mutant", gc_mutant}, {"configs", json::array()}};
      for (const auto& r : reports) {
        pass = pass && r.pass;
        worst = std::max(worst, r.max_rel_err);
        doc["configs"].push_back(gradcheck_to_json(r));
        char line[160];
        std::snprintf(line, sizeof line, "%-20s %-5s %-7s N=%-3zu checked=%-4zu kinks=%-3zu max_rel_err=%.3e %s\n",
                      to_string(r.config.method).c_str(), to_string(r.config.layer_kind).c_str(),
                      to_string(r.config.placement).c_str(), r.num_nodes, r.checked, r.kinks, r.max_rel_err,
                      r.pass ? "ok" : "FAIL");
        out << line;
      }
      doc["max_rel_err"] = worst;
      doc["pass"] = pass;
      out << (pass ? "PASS" : "FAIL") << " max_rel_err=" << worst << "\n";
      if (!gc_out.empty()) write_text(gc_out, doc.dump(2) + "\n");
      return pass ? kExitOk : kExitFailed;
    }

    if (train_cmd->parsed()) {
      const ExperimentConfig cfg = train_opts.build();
      json runs = json::array();
      std::vector<ResultRow> rows;
      for (std::uint64_t seed : cfg.seeds) {
        const RunResult run = run_experiment(cfg, seed);
        rows.push_back(run.row);
        runs.push_back(run_to_json(cfg, run));
        out << run.row.method << " seed " << seed << ": val_acc " << fixed(run.row.val_acc, 4) << " test_acc "
            << fixed(run.row.test_acc, 4) << " (best epoch " << run.row.epochs_to_best << ")\n";
      }
      if (!train_csv.empty()) append_results(train_csv, rows);
      if (!train_metrics.empty()) {
        write_text(train_metrics, json{{"schema_version", 1}, {"runs", std::move(runs)}}.dump(2) + "\n");
      }
      return kExitOk;
    }

    if (perturb->parsed()) {
      LoadedGraph lg = load_json(pert_in);
      Rng rng(pert_seed);
      Graph g;
      if (pert_kind == "random") {
        g = random_flip(lg.graph, pert_p, rng);
      } else {
        if (pert_budget == 0) throw UsageError("targeted perturbation needs --budget");
        g = targeted_flip(lg.graph, pert_target, pert_budget, rng);
      }
      save_json(g, pert_out, lg.splits);
      out << "seed " << pert_seed << ": " << lg.graph.num_edges() << " -> " << g.num_edges() << " directed edges, wrote "
          << pert_out << "\n";
      return kExitOk;
    }

    if (sweep->parsed()) {
      const ExperimentConfig base = sweep_opts.build();
      SweepAxes axes;
      axes.methods = parse_list<Method>(sw_methods, parse_method);
      axes.r = parse_list<std::size_t>(sw_r, to_size);
      axes.placements = parse_list<Placement>(sw_place, parse_placement);
      axes.shots = parse_list<std::size_t>(sw_shots, to_size);
      axes.noise = parse_noise_axis(sw_noise);
      const auto rows = run_sweep(base, axes, sw_jobs);
      if (!sw_runs_csv.empty()) append_results(sw_runs_csv, rows);
      const auto summary = summarize(rows);
      const std::string text = sw_format == "md" ? summary_markdown(summary) : summary_csv(summary);
      if (sw_out.empty()) out << text;
      else write_text(sw_out, text);
      return kExitOk;
    }

    if (report->parsed()) {
      const auto summary = summarize(read_results_file(rep_in));
      const std::string text = rep_format == "md" ? summary_markdown(summary) : summary_csv(summary);
      if (rep_out.empty()) out << text;
      else write_text(rep_out, text);
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "parse error at " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    // ShapeError and ParameterError: the inputs do not fit together.
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailed;
  }
  return kExitUsage;
}

}  // namespace gmp
