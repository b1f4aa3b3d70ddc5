#include "gmp/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "gmp/error.hpp"
#include "gmp/json_util.hpp"

namespace gmp {

using nlohmann::json;

namespace {

// Sub-stream of the run seed used for structural noise.
constexpr std::uint64_t kNoiseStream = 4;

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size() || s.front() == '-') throw ParameterError("bad " + what + " '" + s + "'");
  return v;
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) throw ParameterError("bad " + what + " '" + s + "'");
  return v;
}

std::string fmt(double x, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dataset_label(const std::string& spec) {
  if (spec == "fixture" || spec.rfind("fixture@", 0) == 0) return spec;
  std::string stem = std::filesystem::path(spec).stem().string();
  std::replace(stem.begin(), stem.end(), ',', '_');
  return stem;
}

struct Dataset {
  std::optional<Graph> graph;
  std::optional<GraphDataset> collection;
  std::optional<SplitSpec> splits;
};

Dataset load_dataset(const std::string& spec) {
  Dataset d;
  if (spec == "fixture") {
    d.graph = fixture_graph(0);
    return d;
  }
  if (spec.rfind("fixture@", 0) == 0) {
    d.graph = fixture_graph(parse_u64(spec.substr(8), "fixture seed"));
    return d;
  }
  const std::string text = read_file(spec);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("", std::string("malformed JSON: ") + e.what());
  }
  if (doc.is_object() && doc.contains("graphs")) {
    GraphDataset ds;
    const auto& graphs = json_util::require_array(doc["graphs"], "/graphs");
    for (std::size_t i = 0; i < graphs.size(); ++i) {
      try {
        ds.graphs.push_back(parse_graph_json(graphs[i].dump()).graph);
      } catch (const ParseError& e) {
        const std::string msg = e.what();
        throw ParseError("/graphs/" + std::to_string(i) + e.pointer(), msg.substr(e.pointer().size() + 2));
      }
    }
    const auto& labels = json_util::require_array(json_util::require_field(doc, "", "labels"), "/labels");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      ds.labels.push_back(static_cast<int>(json_util::require_index(labels[i], "/labels/" + std::to_string(i))));
    }
    if (ds.labels.size() != ds.graphs.size()) throw ParseError("/labels", "need one label per graph");
    d.collection = std::move(ds);
    return d;
  }
  auto loaded = parse_graph_json(text);
  d.graph = std::move(loaded.graph);
  d.splits = std::move(loaded.splits);
  return d;
}

BackboneSpec load_backbone_spec(const std::string& spec, std::size_t edge_dim) {
  if (spec == "fixture") return fixture_backbone();
  if (spec.rfind("init:", 0) == 0) {
    const auto parts = split_on(spec.substr(5), ':');
    if (parts.size() < 2 || parts.size() > 3) throw ParameterError("backbone init spec is init:<kind>:<dims>[:<seed>]");
    std::vector<std::size_t> dims;
    for (const auto& d : split_on(parts[1], ',')) dims.push_back(parse_u64(d, "backbone width"));
    Rng rng(parts.size() == 3 ? parse_u64(parts[2], "backbone seed") : 0);
    return init_backbone(parse_layer_kind(parts[0]), dims, edge_dim, true, rng);
  }
  return load_backbone(spec);
}

Graph apply_noise(const Graph& g, const NoiseSpec& noise, std::uint64_t seed) {
  if (noise.kind == "none") return g;
  Rng rng = Rng(seed).split(kNoiseStream);
  return random_flip(g, noise.p, rng);
}

json optimizer_json(const Optimizer& opt) {
  if (const auto* a = std::get_if<Adam>(&opt)) {
    return {{"kind", "adam"}, {"beta1", a->beta1}, {"beta2", a->beta2}, {"eps", a->eps}};
  }
  return {{"kind", "sgd"}, {"momentum", std::get<Sgd>(opt).momentum}};
}

}  // namespace

// ---------------------------------------------------------------- fixture

SbmParams fixture_sbm_params() {
  SbmParams p;
  p.block_sizes = {50, 50};
  p.p_in = 0.3;
  p.p_out = 0.02;
  p.node_dim = 4;
  p.feature_shift = 0.05;
  p.feature_std = 0.02;
  return p;
}

Graph fixture_graph(std::uint64_t seed) {
  Rng rng(seed);
  return sbm_generate(rng, fixture_sbm_params());
}

BackboneSpec fixture_backbone() {
  constexpr double gain = 20.0;
  constexpr double threshold = 0.05;
  BackboneSpec s;
  s.kind = LayerKind::Gcn;
  s.dims = {4, 4, 4, 4};
  s.self_loops = true;
  LayerWeights gate{Mat(4, 4), std::vector<double>(4, 0.0), {}, {}, {}};
  gate.W(0, 0) = gain;
  gate.W(1, 1) = gain;
  gate.b[0] = -gain * threshold;
  gate.b[1] = -gain * threshold;
  gate.W(2, 2) = 1.0;
  gate.W(3, 3) = 1.0;
  gate.b[2] = 1.0;
  gate.b[3] = 1.0;
  s.layers.push_back(gate);
  for (int l = 0; l < 2; ++l) s.layers.push_back(LayerWeights{Mat::identity(4), std::vector<double>(4, 0.0), {}, {}, {}});
  validate_backbone(s);
  return s;
}

Certificate certify_rank1_prompt(const Graph& graph, const BackboneSpec& bb, const SplitSpec& split) {
  if (!graph.labels) throw ParameterError("certificate needs labels");
  if (split.test.empty()) throw ParameterError("certificate needs a test split");
  const auto& labels = *graph.labels;
  const std::size_t E = bb.self_loops ? with_self_loops(graph).graph.num_edges() : graph.num_edges();
  const std::size_t width = bb.message_width(0);
  Certificate best;
  const Head dummy{Mat(bb.dims.back(), 1), {0.0}};
  for (int i = 0; i <= 200; ++i) {
    const double c = 0.002 * i;
    PromptState p;
    p.kind = PromptKind::LrGmp;
    p.layers.resize(bb.num_layers());
    LayerPrompt lp{Mat(E, 1, c), {}, Mat(width, 1)};
    lp.V(0, 0) = 1.0;
    if (width > 1) lp.V(1, 0) = 1.0;
    p.layers[0] = lp;
    const Mat emb = forward(bb, graph, p, dummy).embeddings;

    // Nearest centroid over all labelled nodes, two classes.
    Mat mu(2, emb.cols());
    std::size_t count[2] = {0, 0};
    for (NodeId v = 0; v < graph.num_nodes; ++v) {
      if (labels[v] < 0 || labels[v] > 1) continue;
      ++count[labels[v]];
      for (std::size_t j = 0; j < emb.cols(); ++j) mu(labels[v], j) += emb(v, j);
    }
    if (count[0] == 0 || count[1] == 0) throw ParameterError("certificate expects two populated classes");
    for (int k = 0; k < 2; ++k)
      for (std::size_t j = 0; j < emb.cols(); ++j) mu(k, j) /= static_cast<double>(count[k]);
    std::size_t correct = 0;
    for (NodeId v : split.test) {
      double d0 = 0.0, d1 = 0.0;
      for (std::size_t j = 0; j < emb.cols(); ++j) {
        d0 += (emb(v, j) - mu(0, j)) * (emb(v, j) - mu(0, j));
        d1 += (emb(v, j) - mu(1, j)) * (emb(v, j) - mu(1, j));
      }
      correct += (d1 < d0 ? 1 : 0) == labels[v];
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(split.test.size());
    ++best.grid_points;
    if (acc > best.test_acc) {
      best.test_acc = acc;
      best.c = c;
    }
  }
  return best;
}

// ---------------------------------------------------------------- configs

NoiseSpec parse_noise(const std::string& text) {
  if (text == "none") return {};
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ParameterError("noise spec is none or random:<p>");
  NoiseSpec n{text.substr(0, colon), parse_double(text.substr(colon + 1), "noise level")};
  if (n.kind != "random") throw ParameterError("unknown noise kind '" + n.kind + "'");
  if (!(n.p >= 0.0 && n.p <= 1.0)) throw ParameterError("noise level must lie in [0, 1]");
  return n;
}

ExperimentConfig parse_experiment_config(const json& doc) {
  using namespace json_util;
  if (!doc.is_object()) throw ParseError("", "expected an object");
  ExperimentConfig c;
  auto str = [&](const char* key, std::string& out) {
    if (!doc.contains(key)) return;
    if (!doc[key].is_string()) throw ParseError(std::string("/") + key, "expected string");
    out = doc[key].get<std::string>();
  };
  auto idx = [&](const char* key, std::size_t& out) {
    if (doc.contains(key)) out = require_index(doc[key], std::string("/") + key);
  };
  auto num = [&](const char* key, double& out) {
    if (doc.contains(key)) out = require_number(doc[key], std::string("/") + key);
  };
  str("dataset", c.dataset);
  str("backbone", c.backbone);
  try {
    std::string s;
    str("method", s);
    if (!s.empty()) c.train.method = parse_method(s);
    s.clear();
    str("placement", s);
    if (!s.empty()) c.train.placement = parse_placement(s);
    s.clear();
    str("task", s);
    if (s == "graph") c.train.task = Task::Graph;
    else if (!s.empty() && s != "node") throw ParameterError("task must be node or graph");
  } catch (const ParameterError& e) {
    throw ParseError("", e.what());
  }
  num("lr", c.train.lr);
  idx("epochs", c.train.epochs);
  idx("r", c.train.r);
  num("tau", c.train.tau);
  idx("k", c.train.k);
  idx("shots", c.train.shots);
  if (doc.contains("optimizer")) {
    const auto& o = doc["optimizer"];
    const auto& kind = require_field(o, "/optimizer", "kind");
    if (kind == "adam") {
      Adam a;
      if (o.contains("beta1")) a.beta1 = require_number(o["beta1"], "/optimizer/beta1");
      if (o.contains("beta2")) a.beta2 = require_number(o["beta2"], "/optimizer/beta2");
      if (o.contains("eps")) a.eps = require_number(o["eps"], "/optimizer/eps");
      c.train.optimizer = a;
    } else if (kind == "sgd") {
      Sgd s;
      if (o.contains("momentum")) s.momentum = require_number(o["momentum"], "/optimizer/momentum");
      c.train.optimizer = s;
    } else {
      throw ParseError("/optimizer/kind", "expected adam or sgd");
    }
  }
  if (doc.contains("noise")) {
    const auto& n = doc["noise"];
    const auto& kind = require_field(n, "/noise", "kind");
    if (!kind.is_string()) throw ParseError("/noise/kind", "expected string");
    c.noise.kind = kind.get<std::string>();
    if (n.contains("p")) c.noise.p = require_number(n["p"], "/noise/p");
    if (c.noise.kind != "none" && c.noise.kind != "random") throw ParseError("/noise/kind", "expected none or random");
  }
  if (doc.contains("file_splits")) {
    if (!doc["file_splits"].is_boolean()) throw ParseError("/file_splits", "expected boolean");
    c.file_splits = doc["file_splits"].get<bool>();
  }
  if (doc.contains("seeds")) {
    const auto& seeds = require_array(doc["seeds"], "/seeds");
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      c.seeds.push_back(require_index(seeds[i], "/seeds/" + std::to_string(i)));
    }
  }
  if (doc.contains("repeats")) {
    const std::size_t repeats = require_index(doc["repeats"], "/repeats");
    if (!c.seeds.empty() && repeats != c.seeds.size()) throw ParseError("/repeats", "must equal the number of seeds");
  }
  try {
    validate(c.train);
  } catch (const ParameterError& e) {
    throw ParseError("", e.what());
  }
  return c;
}

json experiment_config_to_json(const ExperimentConfig& c) {
  return {{"dataset", c.dataset},
          {"backbone", c.backbone},
          {"method", to_string(c.train.method)},
          {"lr", c.train.lr},
          {"epochs", c.train.epochs},
          {"optimizer", optimizer_json(c.train.optimizer)},
          {"r", c.train.r},
          {"tau", c.train.tau},
          {"k", c.train.k},
          {"shots", c.train.shots},
          {"placement", to_string(c.train.placement)},
          {"task", c.train.task == Task::Node ? "node" : "graph"},
          {"noise", {{"kind", c.noise.kind}, {"p", c.noise.p}}},
          {"file_splits", c.file_splits},
          {"seeds", c.seeds},
          {"repeats", c.seeds.size()}};
}

RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  validate(tc);
  Dataset data = load_dataset(cfg.dataset);
  RunResult out;
  if (data.collection) {
    if (tc.task != Task::Graph) throw ParameterError("graph collections need task = graph");
    const auto& first = data.collection->graphs.front();
    const BackboneSpec bb = load_backbone_spec(cfg.backbone, first.edge_dim());
    GraphDataset noisy = *data.collection;
    for (std::size_t i = 0; i < noisy.graphs.size(); ++i) {
      noisy.graphs[i] = apply_noise(noisy.graphs[i], cfg.noise, Rng(seed).split(i).next_u64());
    }
    Rng split_rng = Rng(seed).split(1);
    const SplitSpec split = sample_few_shot(noisy.labels, tc.shots, split_rng);
    out.state = train_graph_task(noisy, bb, tc, split);
  } else {
    if (tc.task != Task::Node) throw ParameterError("task = graph needs a graph collection dataset");
    const BackboneSpec bb = load_backbone_spec(cfg.backbone, data.graph->edge_dim());
    const Graph g = apply_noise(*data.graph, cfg.noise, seed);
    if (cfg.file_splits) {
      if (!data.splits) throw ParameterError("dataset has no stored splits");
      out.state = train(g, bb, tc, *data.splits);
    } else {
      out.state = train(g, bb, tc);
    }
  }
  ResultRow& row = out.row;
  row.method = to_string(tc.method);
  row.dataset = dataset_label(cfg.dataset);
  row.seed = seed;
  row.r = tc.r;
  row.placement = to_string(tc.placement);
  row.shots = tc.shots;
  row.noise_kind = cfg.noise.kind;
  row.noise_p = cfg.noise.p;
  row.val_acc = out.state.best_val_acc;
  row.test_acc = out.state.test_acc;
  row.epochs_to_best = out.state.best_epoch;
  if (cfg.record_time) {
    row.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return out;
}

json run_to_json(const ExperimentConfig& cfg, const RunResult& run) {
  const auto& s = run.state.split;
  json doc = {{"schema_version", 1},
              {"config", experiment_config_to_json(cfg)},
              {"seed", run.row.seed},
              {"split", {{"train", s.train}, {"val", s.val}, {"test", s.test}}},
              {"history", history_to_json(run.state)},
              {"val_acc", run.row.val_acc},
              {"test_acc", run.row.test_acc},
              {"epochs_to_best", run.row.epochs_to_best}};
  if (cfg.record_time) doc["wall_time_ms"] = run.row.wall_time_ms;
  return doc;
}

// ---------------------------------------------------------------- CSV

const char* const kResultsHeader = "# gmp-results v1";
const char* const kResultColumns =
    "method,dataset,seed,r,placement,shots,noise_kind,noise_p,val_acc,test_acc,epochs_to_best,wall_time_ms";

std::string result_csv_line(const ResultRow& r) {
  std::ostringstream out;
  out << r.method << ',' << r.dataset << ',' << r.seed << ',' << r.r << ',' << r.placement << ',' << r.shots << ','
      << r.noise_kind << ',' << fmt(r.noise_p, 4) << ',' << fmt(r.val_acc) << ',' << fmt(r.test_acc) << ','
      << r.epochs_to_best << ',' << fmt(r.wall_time_ms, 3);
  return out.str();
}

void append_results(const std::string& path, const std::vector<ResultRow>& rows) {
  bool fresh = true;
  if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
    std::ifstream in(path);
    std::string first, second;
    std::getline(in, first);
    std::getline(in, second);
    if (first != kResultsHeader || second != kResultColumns) {
      throw ParseError("", path + " is not a results file with the current column layout");
    }
    fresh = false;
  }
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (fresh) out << kResultsHeader << '\n' << kResultColumns << '\n';
  for (const auto& r : rows) out << result_csv_line(r) << '\n';
}

std::vector<ResultRow> read_results(std::istream& in) {
  std::vector<ResultRow> rows;
  std::string line;
  bool seen_columns = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!seen_columns) {
      if (line != kResultColumns) throw ParseError("line " + std::to_string(lineno), "unexpected column header");
      seen_columns = true;
      continue;
    }
    const auto f = split_on(line, ',');
    if (f.size() != 12) throw ParseError("line " + std::to_string(lineno), "expected 12 fields");
    try {
      ResultRow r;
      r.method = f[0];
      r.dataset = f[1];
      r.seed = parse_u64(f[2], "seed");
      r.r = parse_u64(f[3], "r");
      r.placement = f[4];
      r.shots = parse_u64(f[5], "shots");
      r.noise_kind = f[6];
      r.noise_p = parse_double(f[7], "noise_p");
      r.val_acc = parse_double(f[8], "val_acc");
      r.test_acc = parse_double(f[9], "test_acc");
      r.epochs_to_best = parse_u64(f[10], "epochs_to_best");
      r.wall_time_ms = parse_double(f[11], "wall_time_ms");
      if (r.val_acc < 0.0 || r.val_acc > 1.0 || r.test_acc < 0.0 || r.test_acc > 1.0) {
        throw ParameterError("accuracy outside [0, 1]");
      }
      rows.push_back(std::move(r));
    } catch (const ParameterError& e) {
      throw ParseError("line " + std::to_string(lineno), e.what());
    }
  }
  return rows;
}

std::vector<ResultRow> read_results_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("", "cannot open " + path);
  return read_results(in);
}

// ---------------------------------------------------------------- sweeps

std::vector<ResultRow> run_sweep(const ExperimentConfig& base, const SweepAxes& axes, std::size_t jobs) {
  if (axes.methods.empty() || axes.r.empty() || axes.placements.empty() || axes.shots.empty() || axes.noise.empty()) {
    throw ParameterError("sweep axis is empty");
  }
  if (base.seeds.empty()) throw ParameterError("sweep needs at least one seed");
  struct Job {
    ExperimentConfig cfg;
    std::uint64_t seed;
  };
  std::vector<Job> work;
  for (Method m : axes.methods)
    for (std::size_t r : axes.r)
      for (Placement p : axes.placements)
        for (std::size_t s : axes.shots)
          for (const auto& n : axes.noise)
            for (std::uint64_t seed : base.seeds) {
              ExperimentConfig c = base;
              c.train.method = m;
              c.train.r = r;
              c.train.placement = p;
              c.train.shots = s;
              c.noise = n;
              validate(c.train);
              work.push_back({std::move(c), seed});
            }

  std::vector<ResultRow> out(work.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < work.size(); i = next++) {
      try {
        out[i] = run_experiment(work[i].cfg, work[i].seed).row;
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        next = work.size();
      }
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, work.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  std::vector<SummaryRow> out;
  std::vector<std::vector<const ResultRow*>> members;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    const std::string key = r.method + ',' + r.dataset + ',' + std::to_string(r.r) + ',' + r.placement + ',' +
                            std::to_string(r.shots) + ',' + r.noise_kind + ',' + fmt(r.noise_p, 4);
    auto [it, inserted] = index.emplace(key, out.size());
    if (inserted) {
      SummaryRow s;
      s.method = r.method;
      s.dataset = r.dataset;
      s.r = r.r;
      s.placement = r.placement;
      s.shots = r.shots;
      s.noise_kind = r.noise_kind;
      s.noise_p = r.noise_p;
      out.push_back(s);
      members.emplace_back();
    }
    members[it->second].push_back(&r);
  }
  auto mean_std = [](const std::vector<double>& xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    const double sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
    return std::pair{m, sd};
  };
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::vector<double> val, test, ep;
    for (const auto* r : members[i]) {
      val.push_back(r->val_acc);
      test.push_back(r->test_acc);
      ep.push_back(static_cast<double>(r->epochs_to_best));
    }
    out[i].runs = members[i].size();
    std::tie(out[i].val_mean, out[i].val_std) = mean_std(val);
    std::tie(out[i].test_mean, out[i].test_std) = mean_std(test);
    out[i].epochs_to_best_mean = mean_std(ep).first;
  }
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << "# gmp-summary v1\n"
      << "method,dataset,r,placement,shots,noise_kind,noise_p,runs,val_mean,val_std,test_mean,test_std,"
         "epochs_to_best_mean\n";
  for (const auto& s : rows) {
    out << s.method << ',' << s.dataset << ',' << s.r << ',' << s.placement << ',' << s.shots << ',' << s.noise_kind
        << ',' << fmt(s.noise_p, 4) << ',' << s.runs << ',' << fmt(s.val_mean) << ',' << fmt(s.val_std) << ','
        << fmt(s.test_mean) << ',' << fmt(s.test_std) << ',' << fmt(s.epochs_to_best_mean, 2) << '\n';
  }
  return out.str();
}

std::string summary_markdown(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << "| method | dataset | r | placement | shots | noise | runs | val acc | test acc |\n"
      << "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& s : rows) {
    const std::string noise = s.noise_kind == "none" ? "none" : s.noise_kind + " " + fmt(s.noise_p, 2);
    out << "| " << s.method << " | " << s.dataset << " | " << s.r << " | " << s.placement << " | " << s.shots << " | "
        << noise << " | " << s.runs << " | " << fmt(s.val_mean, 4) << " ± " << fmt(s.val_std, 4) << " | "
        << fmt(s.test_mean, 4) << " ± " << fmt(s.test_std, 4) << " |\n";
  }
  return out.str();
}

}  // namespace gmp
