// Acceptance run: one [PASS]/[FAIL] line per criterion, exit status 1 if
// any criterion fails. Thresholds are fixed here, not read from flags.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>

#include "gmp/cli.hpp"
#include "gmp/equivalence.hpp"
#include "gmp/experiment.hpp"
#include "gmp/gradcheck.hpp"

using namespace gmp;
namespace fs = std::filesystem;

namespace {

constexpr double kEquivTol = 1e-9;
constexpr double kGradTol = 1e-4;
constexpr double kRankTol = 1e-8;
constexpr double kCertMin = 0.95;
constexpr double kLearnMin = 0.90;

int failures = 0;

void report(int id, bool pass, const std::string& what, double seconds) {
  if (!pass) ++failures;
  char t[32];
  std::snprintf(t, sizeof t, "%.1fs", seconds);
  std::cout << (pass ? "[PASS] " : "[FAIL] ") << id << ' ' << what << " (" << t << ")" << std::endl;
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, const char* spec = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void criterion_equivalence() {
  Timer t;
  VerifyConfig cfg;
  cfg.trials = 200;
  cfg.max_nodes = 30;
  cfg.tolerance = kEquivTol;
  cfg.seed = 1;
  bool pass = true;
  std::string detail;
  for (auto prop : {Proposition::NodeFeature, Proposition::EdgeFeature, Proposition::EdgeWeight, Proposition::Hybrid}) {
    const auto rep = verify_proposition(prop, cfg);
    pass = pass && rep.pass && rep.trials == 200;
    for (const auto& [name, diff] : rep.variants) {
      pass = pass && diff < kEquivTol;
      detail += " p" + std::to_string(rep.proposition) + (name.empty() ? "" : "-" + name) + "=" + fmt(diff);
    }
    if (rep.variants.empty()) detail += " p" + std::to_string(rep.proposition) + "=" + fmt(rep.max_abs_diff);
  }
  report(1, pass, "proposition equivalence, 200 trials, max diff <" + fmt(kEquivTol) + ":" + detail, t.seconds());
}

void criterion_subgraph() {
  Timer t;
  VerifyConfig cfg;
  cfg.trials = 200;
  cfg.max_nodes = 30;
  cfg.tolerance = kEquivTol;
  cfg.seed = 1;
  const auto rep = verify_proposition(Proposition::Subgraph, cfg);
  std::set<std::size_t> trials;
  for (const auto& s : rep.skipped_nodes) trials.insert(s.trial);
  report(2, rep.pass && rep.trials == 200,
         "subgraph prompt, 200 instances, max diff " + fmt(rep.max_abs_diff) + " over " +
             std::to_string(rep.comparisons) + " node rows; " + std::to_string(rep.skipped_nodes.size()) +
             " isolated nodes listed across " + std::to_string(trials.size()) + " instances",
         t.seconds());
}

void criterion_mutants() {
  Timer t;
  VerifyConfig cfg;
  cfg.trials = 50;
  cfg.seed = 1;
  cfg.mutant = TranslatorMutant::DropMask;
  std::size_t caught = 0;
  const auto reps = verify_all(cfg);
  for (const auto& r : reps) caught += r.pass ? 0 : 1;

  const auto grads = gradcheck_suite(0, GradMutant::SignFlip);
  std::size_t flipped = 0;
  double min_err = 1e300;
  for (const auto& g : grads) {
    flipped += g.pass ? 0 : 1;
    min_err = std::min(min_err, g.max_rel_err);
  }

  std::ostringstream cli_err, cli_out;
  const int verify_code = run_cli({"verify", "--trials", "20", "--seed", "1", "--mutant", "drop-mask"}, cli_out, cli_err);
  const int grad_code = run_cli({"gradcheck", "--seed", "0", "--mutant", "sign-flip"}, cli_out, cli_err);

  const bool pass = caught == reps.size() && flipped == grads.size() && verify_code != 0 && grad_code != 0;
  report(3, pass,
         "negative controls: drop-mask fails " + std::to_string(caught) + "/" + std::to_string(reps.size()) +
             " propositions, sign-flip fails " + std::to_string(flipped) + "/" + std::to_string(grads.size()) +
             " configs (min rel err " + fmt(min_err) + "), CLI exits " + std::to_string(verify_code) + "/" +
             std::to_string(grad_code),
         t.seconds());
}

void criterion_gradients() {
  Timer t;
  const auto reps = gradcheck_suite(0);
  bool pass = reps.size() >= 20;
  double worst = 0.0;
  std::set<std::string> kinds, placements, methods;
  std::size_t scalars = 0;
  for (const auto& r : reps) {
    pass = pass && r.pass && r.max_rel_err < kGradTol;
    worst = std::max(worst, r.max_rel_err);
    kinds.insert(to_string(r.config.layer_kind));
    placements.insert(to_string(r.config.placement));
    methods.insert(to_string(r.config.method));
    scalars += r.checked;
  }
  pass = pass && kinds.size() == 3 && placements.size() == 4 && methods.size() == 2;
  report(4, pass,
         "gradcheck over " + std::to_string(reps.size()) + " configs (" + std::to_string(methods.size()) + " methods, " +
             std::to_string(kinds.size()) + " layer kinds, " + std::to_string(placements.size()) + " placements, " +
             std::to_string(scalars) + " scalars), max rel err " + fmt(worst) + " < " + fmt(kGradTol),
         t.seconds());
}

void criterion_zero_prompt() {
  Timer t;
  Rng root(5);
  std::size_t identical = 0;
  const LayerKind kinds[] = {LayerKind::Gcn, LayerKind::Gin, LayerKind::MpnnLinear};
  for (std::size_t i = 0; i < 50; ++i) {
    Rng rng = root.split(i);
    const Graph g = random_graph(rng, 2, 20, 5, 3);
    const LayerKind kind = kinds[i % 3];
    BackboneSpec bb = init_backbone(kind, {g.node_dim(), 6, 5, 3}, g.edge_dim(), rng.uniform() < 0.5, rng);
    bb.gin_eps = 0.2;
    for (auto& l : bb.layers)
      for (auto& b : l.b) b = 0.1 * rng.normal();
    const Head head{randn(rng, 3, 3, 1.0), {0.1, 0.0, -0.1}};

    PromptState p;
    p.kind = PromptKind::LrGmp;
    const auto prepared = prepare_graph(bb, g);
    for (std::size_t l = 0; l < bb.num_layers(); ++l)
      p.layers.push_back(LayerPrompt{Mat(prepared->adjacency.graph.num_edges(), 2), {},
                                     randn(rng, bb.message_width(l), 2, 1.0)});
    const Mat a = forward(bb, g, p, head).logits;
    const Mat b = forward(bb, g, PromptState{}, head).logits;
    if (a.rows() == b.rows() && a.cols() == b.cols() &&
        std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0)
      ++identical;
  }
  report(5, identical == 50, "zero-prompt identity: " + std::to_string(identical) + "/50 bitwise identical", t.seconds());
}

void criterion_rank() {
  Timer t;
  Rng root(6);
  bool pass = true;
  std::string detail;
  for (std::size_t r : {2, 5, 10}) {
    std::size_t worst = 0, ok = 0;
    for (std::size_t i = 0; i < 100; ++i) {
      Rng rng = root.split(r * 1000 + i);
      const std::size_t m = r + 5 + rng.uniform_index(30);
      const std::size_t w = r + 1 + rng.uniform_index(12);
      const auto P = lr_expand({randn(rng, m, r, 1.0), randn(rng, w, r, 1.0)});
      const auto rank = numerical_rank(P.mat, kRankTol);
      worst = std::max(worst, rank);
      ok += rank <= r ? 1 : 0;
    }
    pass = pass && ok == 100;
    detail += " r=" + std::to_string(r) + ":" + std::to_string(ok) + "/100 max " + std::to_string(worst);
  }
  report(6, pass, "rank bound" + detail, t.seconds());
}

void criterion_learning() {
  Timer t;
  const Graph g = fixture_graph(0);
  const BackboneSpec bb = fixture_backbone();
  double cert_min = 1.0, lr_sum = 0.0, probe_sum = 0.0, lr_min = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng split_rng = Rng(seed).split(1);
    const SplitSpec split = sample_few_shot(*g.labels, 1, split_rng);
    cert_min = std::min(cert_min, certify_rank1_prompt(g, bb, split).test_acc);

    TrainConfig cfg;
    cfg.seed = seed;
    cfg.r = 2;
    cfg.shots = 1;
    cfg.lr = 1e-3;
    cfg.epochs = 300;
    cfg.method = Method::LrGmp;
    const auto lr = train(g, bb, cfg, split);
    cfg.method = Method::None;
    const auto probe = train(g, bb, cfg, split);
    lr_sum += lr.test_acc;
    lr_min = std::min(lr_min, lr.test_acc);
    probe_sum += probe.test_acc;
  }
  const double lr_mean = lr_sum / 10.0, probe_mean = probe_sum / 10.0;
  const bool pass = cert_min >= kCertMin && lr_mean >= kLearnMin && lr_mean > probe_mean;
  report(7, pass,
         "fixture: rank-1 certificate min test acc " + fmt(cert_min, "%.3f") + " >= " + fmt(kCertMin) +
             "; LR-GMP mean test acc " + fmt(lr_mean, "%.3f") + " (min " + fmt(lr_min, "%.3f") + ") >= " +
             fmt(kLearnMin) + ", probe " + fmt(probe_mean, "%.3f"),
         t.seconds());
}

void criterion_sweep(const fs::path& summary_path) {
  Timer t;
  ExperimentConfig base;
  for (std::uint64_t s = 0; s < 10; ++s) base.seeds.push_back(s);
  SweepAxes axes;
  axes.r = {2, 5, 10};
  axes.placements = {Placement::First, Placement::Middle, Placement::Last, Placement::All};
  axes.shots = {1, 3, 5};
  axes.noise = {{"random", 0.0}, {"random", 0.2}, {"random", 0.4}};
  const std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  const auto rows = run_sweep(base, axes, jobs);
  const auto summary = summarize(rows);
  std::ofstream(summary_path) << summary_markdown(summary);

  std::map<double, std::pair<double, std::size_t>> by_noise;
  for (const auto& r : rows) {
    by_noise[r.noise_p].first += r.test_acc;
    by_noise[r.noise_p].second += 1;
  }
  const double clean = by_noise[0.0].first / by_noise[0.0].second;
  const double noisy = by_noise[0.4].first / by_noise[0.4].second;
  std::size_t cells_ok = 0;
  for (const auto& s : summary) cells_ok += s.runs == 10 ? 1 : 0;
  const bool pass = rows.size() == 1080 && summary.size() == 108 && cells_ok == 108 && clean >= noisy;
  report(8, pass,
         "sweep: " + std::to_string(rows.size()) + " runs in " + std::to_string(summary.size()) +
             " cells; mean test acc p=0 " + fmt(clean, "%.4f") + " >= p=0.4 " + fmt(noisy, "%.4f") + " (p=0.2 " +
             fmt(by_noise[0.2].first / by_noise[0.2].second, "%.4f") + ")",
         t.seconds());
}

constexpr std::size_t kCommands = 9;

std::map<std::string, std::string> run_commands(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto p = [&](const char* name) { return (dir / name).string(); };
  const std::vector<std::vector<std::string>> commands{
      {"gen", "--sbm", "20,20", "--p-in", "0.3", "--p-out", "0.05", "--seed", "7", "--splits", "2", "--out", p("g.json")},
      {"gen", "--fixture", "--seed", "0", "--out", p("fixture.json"), "--backbone-out", p("backbone.json")},
      {"perturb", "--in", p("fixture.json"), "--out", p("noisy.json"), "--p", "0.2", "--seed", "3"},
      {"verify", "--trials", "20", "--seed", "4", "--out", p("verify.json")},
      {"gradcheck", "--seed", "4", "--out", p("gradcheck.json")},
      {"train", "--dataset", p("noisy.json"), "--backbone", p("backbone.json"), "--epochs", "40", "--seeds", "0,1",
       "--metrics", p("metrics.json"), "--csv", p("runs.csv")},
      {"train", "--dataset", p("g.json"), "--backbone", "init:mpnn:4,8,4:1", "--method", "node_multi", "--file-splits",
       "--epochs", "20", "--seed", "0", "--metrics", p("gdp.json"), "--csv", p("runs.csv")},
      {"sweep", "--epochs", "20", "--seeds", "0,1", "--r", "2,5", "--noise", "random:0,0.4", "--jobs", "3",
       "--runs-csv", p("sweep_runs.csv"), "--out", p("sweep.md"), "--format", "md"},
      {"report", "--in", p("runs.csv"), "--out", p("report.csv"), "--format", "csv"},
  };
  std::map<std::string, std::string> outputs;
  if (commands.size() != kCommands) throw std::logic_error("command count");
  for (std::size_t i = 0; i < commands.size(); ++i) {
    std::ostringstream out, err;
    const int code = run_cli(commands[i], out, err);
    outputs["stdout." + std::to_string(i)] = std::to_string(code) + "\n" + out.str();
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::ifstream in(entry.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    outputs[entry.path().filename().string()] = ss.str();
  }
  return outputs;
}

void criterion_determinism(const fs::path& work) {
  Timer t;
  // Same paths both times: the metrics JSON records the config, paths included.
  const fs::path dir = work / "rerun";
  const auto a = run_commands(dir);
  const auto b = run_commands(dir);
  std::size_t same = 0, failed = 0;
  for (const auto& [name, bytes] : a) {
    if (name.rfind("stdout.", 0) == 0) failed += bytes.rfind("0\n", 0) == 0 ? 0 : 1;
    const auto it = b.find(name);
    same += it != b.end() && it->second == bytes ? 1 : 0;
  }
  const std::size_t files = a.size() - kCommands;
  report(9, files >= 12 && same == a.size() && failed == 0 && a.size() == b.size(),
         "determinism: " + std::to_string(same) + "/" + std::to_string(a.size()) + " outputs (" +
             std::to_string(files) + " JSON/CSV/MD files plus stdout of " + std::to_string(kCommands) +
             " commands) byte-identical on rerun, " + std::to_string(failed) + " commands failed",
         t.seconds());
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "gmp_acceptance";
  fs::create_directories(work);
  const std::set<std::string> only(argv + std::min(argc, 2), argv + argc);
  auto want = [&](int id) { return only.empty() || only.count(std::to_string(id)) > 0; };

  if (want(1)) criterion_equivalence();
  if (want(2)) criterion_subgraph();
  if (want(3)) criterion_mutants();
  if (want(4)) criterion_gradients();
  if (want(5)) criterion_zero_prompt();
  if (want(6)) criterion_rank();
  if (want(7)) criterion_learning();
  if (want(8)) criterion_sweep(work / "sweep_summary.md");
  if (want(9)) criterion_determinism(work);
  return failures == 0 ? 0 : 1;
}
