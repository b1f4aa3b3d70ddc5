#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gmp/error.hpp"
#include "gmp/experiment.hpp"

using namespace gmp;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gmp_unit_tests";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  fs::remove(p);
  return p;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("fixture shape") {
  const Graph g = fixture_graph(0);
  CHECK(g.num_nodes == 100);
  CHECK_FALSE(g.directed);
  CHECK(g.node_dim() == 4);
  CHECK(fixture_graph(0) == g);
  const BackboneSpec bb = fixture_backbone();
  CHECK(bb.num_layers() == 3);
  CHECK_NOTHROW(validate_backbone(bb));
}

TEST_CASE("rank-1 certificate on the fixture") {
  const Graph g = fixture_graph(0);
  Rng rng = Rng(0).split(1);
  const auto split = sample_few_shot(*g.labels, 1, rng);
  const auto cert = certify_rank1_prompt(g, fixture_backbone(), split);
  CHECK(cert.grid_points == 201);
  CHECK(cert.test_acc >= 0.95);
  CHECK(cert.c > 0.0);
}

TEST_CASE("noise specs") {
  CHECK(parse_noise("none") == NoiseSpec{});
  CHECK(parse_noise("random:0.25") == NoiseSpec{"random", 0.25});
  CHECK_THROWS_AS(parse_noise("random:2"), ParameterError);
  CHECK_THROWS_AS(parse_noise("targeted:0.1"), ParameterError);
  CHECK_THROWS_AS(parse_noise("random"), ParameterError);
}

TEST_CASE("config JSON round trip") {
  ExperimentConfig cfg;
  cfg.dataset = "fixture@3";
  cfg.train.method = Method::ConditionalLrGmp;
  cfg.train.r = 5;
  cfg.train.optimizer = Sgd{0.5};
  cfg.noise = {"random", 0.2};
  cfg.seeds = {1, 2};
  const auto doc = experiment_config_to_json(cfg);
  CHECK(experiment_config_to_json(parse_experiment_config(doc)).dump() == doc.dump());
  CHECK(parse_experiment_config(nlohmann::json::object()).train.epochs == 300);
  CHECK_THROWS(parse_experiment_config(nlohmann::json{{"method", "bogus"}}));
}

TEST_CASE("single run and metrics document") {
  ExperimentConfig cfg;
  cfg.train.epochs = 10;
  const auto a = run_experiment(cfg, 4);
  const auto b = run_experiment(cfg, 4);
  CHECK(a.row == b.row);
  CHECK(a.row.wall_time_ms == 0.0);
  CHECK(a.row.method == "lr_gmp");
  CHECK(run_to_json(cfg, a).dump() == run_to_json(cfg, b).dump());
  const auto doc = run_to_json(cfg, a);
  CHECK(doc["schema_version"] == 1);
  CHECK(doc["history"]["epochs"].size() == 11);

  cfg.noise = {"random", 0.4};
  CHECK(run_experiment(cfg, 4).row.noise_p == 0.4);
  cfg.dataset = "missing.json";
  CHECK_THROWS(run_experiment(cfg, 4));
}

TEST_CASE("results CSV") {
  const ResultRow row{"lr_gmp", "fixture", 3, 2, "all", 1, "random", 0.2, 0.5, 0.75, 12, 0.0};
  const auto path = scratch("results.csv");
  append_results(path.string(), {row});
  append_results(path.string(), {row});
  const auto text = slurp(path);
  CHECK(text.rfind(std::string(kResultsHeader) + "\n" + kResultColumns + "\n", 0) == 0);
  const auto back = read_results_file(path.string());
  REQUIRE(back.size() == 2);
  CHECK(back[0] == row);

  const auto other = scratch("other.csv");
  std::ofstream(other) << "# something else\n";
  CHECK_THROWS_AS(append_results(other.string(), {row}), ParseError);
  std::istringstream bad(std::string(kResultsHeader) + "\n" + kResultColumns + "\nlr_gmp,fixture\n");
  CHECK_THROWS_AS(read_results(bad), ParseError);
}

TEST_CASE("summaries") {
  std::vector<ResultRow> rows;
  for (int s = 0; s < 3; ++s) rows.push_back({"lr_gmp", "fixture", std::uint64_t(s), 2, "all", 1, "none", 0, 0.5, 0.5 + 0.1 * s, 1, 0});
  rows.push_back({"none", "fixture", 0, 2, "all", 1, "none", 0, 0.4, 0.4, 0, 0});
  const auto sum = summarize(rows);
  REQUIRE(sum.size() == 2);
  CHECK(sum[0].method == "lr_gmp");
  CHECK(sum[0].runs == 3);
  CHECK(sum[0].test_mean == doctest::Approx(0.6));
  CHECK(sum[0].test_std == doctest::Approx(0.1));
  CHECK(sum[1].test_std == 0.0);
  CHECK(summarize({}).empty());
  CHECK(summary_csv(sum).rfind("# gmp-summary v1\n", 0) == 0);
}

TEST_CASE("report golden file") {
  const auto rows = read_results_file(GMP_TEST_DATA "/report_input.csv");
  CHECK(summary_markdown(summarize(rows)) == slurp(GMP_TEST_DATA "/report_expected.md"));
}

TEST_CASE("sweeps keep canonical order") {
  ExperimentConfig base;
  base.train.epochs = 3;
  base.seeds = {0, 1};
  SweepAxes axes;
  axes.r = {2, 5};
  axes.placements = {Placement::First, Placement::Last};
  const auto one = run_sweep(base, axes, 1);
  const auto four = run_sweep(base, axes, 4);
  CHECK(one == four);
  REQUIRE(one.size() == 8);
  CHECK(one[0].r == 2);
  CHECK(one[0].placement == "first");
  CHECK(one[1].seed == 1);
  CHECK(one[2].placement == "last");
  CHECK(one[4].r == 5);
  axes.shots.clear();
  CHECK_THROWS_AS(run_sweep(base, axes, 1), ParameterError);
}

TEST_CASE("graph collections need the graph task") {
  const auto path = scratch("collection.json");
  nlohmann::json doc;
  doc["labels"] = nlohmann::json::array();
  doc["graphs"] = nlohmann::json::array();
  for (std::uint64_t s = 0; s < 8; ++s) {
    Rng rng(s);
    const Graph g = sbm_generate(rng, {{3, 3}, 0.7, 0.1, 2, s % 2 ? 1.0 : -1.0, 0.1});
    doc["graphs"].push_back(nlohmann::json::parse(dump_graph_json(g)));
    doc["labels"].push_back(static_cast<int>(s % 2));
  }
  std::ofstream(path) << doc.dump();
  ExperimentConfig cfg;
  cfg.dataset = path.string();
  cfg.backbone = "init:gin:2,4,4:1";
  cfg.train.epochs = 5;
  cfg.train.method = Method::ConditionalLrGmp;
  CHECK_THROWS_AS(run_experiment(cfg, 0), ParameterError);
  cfg.train.task = Task::Graph;
  const auto run = run_experiment(cfg, 0);
  CHECK(run.state.history.size() == 6);
}

}  // TEST_SUITE
