#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gmp/cli.hpp"
#include "gmp/experiment.hpp"
#include "gmp/graph.hpp"

using namespace gmp;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path tmp(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gmp_cli_tests";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  fs::remove(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"bogus"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
  CHECK(cli({"gen", "--sbm", "5,5", "--out", tmp("x.json").string()}).code == kExitUsage);
  CHECK(cli({"gen", "--sbm", "5,5", "--p-in", "1.5", "--seed", "1", "--out", tmp("x.json").string()}).code ==
        kExitUsage);
  CHECK(cli({"train", "--epochs", "2"}).code == kExitUsage);
  CHECK(cli({"train", "--seed", "0", "--method", "bogus"}).code == kExitUsage);
}

TEST_CASE("gen writes a loadable graph, byte-identical per seed") {
  const auto a = tmp("g1.json"), b = tmp("g2.json");
  const std::vector<std::string> base{"gen", "--sbm", "20,20", "--p-in", "0.3", "--p-out", "0.05", "--seed", "7", "--out"};
  auto args = base;
  args.push_back(a.string());
  REQUIRE(cli(args).code == kExitOk);
  args.back() = b.string();
  REQUIRE(cli(args).code == kExitOk);
  CHECK(slurp(a) == slurp(b));
  const auto g = load_json(a);
  CHECK(g.graph.num_nodes == 40);
  CHECK_FALSE(g.graph.directed);
  REQUIRE(g.graph.labels.has_value());

  const auto fx = tmp("fx.json"), bb = tmp("bb.json");
  CHECK(cli({"gen", "--fixture", "--seed", "0", "--splits", "1", "--out", fx.string(), "--backbone-out", bb.string()})
            .code == kExitOk);
  CHECK(load_json(fx).graph == fixture_graph(0));
  CHECK(load_json(fx).splits.has_value());
  CHECK(load_backbone(bb) == fixture_backbone());
}

TEST_CASE("verify") {
  const auto out = tmp("verify.json");
  const auto ok = cli({"verify", "--prop", "3", "--trials", "200", "--seed", "1", "--out", out.string()});
  CHECK(ok.code == kExitOk);
  const auto doc = nlohmann::json::parse(slurp(out));
  CHECK(doc["pass"] == true);
  REQUIRE(doc["reports"].size() == 1);
  CHECK(doc["reports"][0]["max_abs_diff"].get<double>() < 1e-9);
  CHECK(cli({"verify", "--trials", "10", "--seed", "1", "--mutant", "drop-mask"}).code == kExitFailed);
}

TEST_CASE("gradcheck") {
  const auto ok = cli({"gradcheck", "--seed", "3"});
  CHECK(ok.code == kExitOk);
  CHECK(ok.out.find("PASS") != std::string::npos);
  CHECK(cli({"gradcheck", "--seed", "3", "--mutant", "sign-flip"}).code == kExitFailed);
}

TEST_CASE("train, report and determinism") {
  const auto m1 = tmp("m1.json"), m2 = tmp("m2.json"), csv = tmp("runs.csv");
  const std::vector<std::string> base{"train", "--epochs", "20", "--seed", "2", "--repeats", "2", "--metrics"};
  auto a = base;
  a.push_back(m1.string());
  a.insert(a.end(), {"--csv", csv.string()});
  REQUIRE(cli(a).code == kExitOk);
  auto b = base;
  b.push_back(m2.string());
  REQUIRE(cli(b).code == kExitOk);
  CHECK(slurp(m1) == slurp(m2));
  CHECK(nlohmann::json::parse(slurp(m1))["runs"].size() == 2);
  CHECK(read_results_file(csv.string()).size() == 2);

  const auto probe = cli({"train", "--epochs", "5", "--seed", "2", "--method", "none", "--csv", csv.string()});
  CHECK(probe.code == kExitOk);
  const auto rows = read_results_file(csv.string());
  REQUIRE(rows.size() == 3);
  CHECK(rows.back().method == "none");

  const auto rep = cli({"report", "--in", csv.string()});
  CHECK(rep.code == kExitOk);
  CHECK(rep.out.find("| lr_gmp |") != std::string::npos);
  CHECK(rep.out.find("| none |") != std::string::npos);
}

TEST_CASE("report on an empty CSV prints an empty table") {
  const auto empty = tmp("empty.csv");
  std::ofstream(empty).close();
  const auto rep = cli({"report", "--in", empty.string()});
  CHECK(rep.code == kExitOk);
  CHECK(rep.out == summary_markdown({}));
  CHECK(cli({"report", "--in", tmp("nope.csv").string()}).code != kExitOk);
}

TEST_CASE("report golden file") {
  const auto rep = cli({"report", "--in", GMP_TEST_DATA "/report_input.csv"});
  CHECK(rep.code == kExitOk);
  CHECK(rep.out == slurp(GMP_TEST_DATA "/report_expected.md"));
}

TEST_CASE("perturb") {
  const auto in = tmp("p_in.json"), o1 = tmp("p1.json"), o2 = tmp("p2.json");
  REQUIRE(cli({"gen", "--fixture", "--seed", "0", "--out", in.string()}).code == kExitOk);
  CHECK(cli({"perturb", "--in", in.string(), "--out", o1.string(), "--p", "0.2", "--seed", "5"}).code == kExitOk);
  CHECK(cli({"perturb", "--in", in.string(), "--out", o2.string(), "--p", "0.2", "--seed", "5"}).code == kExitOk);
  CHECK(slurp(o1) == slurp(o2));
  CHECK(slurp(o1) != slurp(in));
  CHECK(cli({"perturb", "--in", in.string(), "--out", o1.string(), "--kind", "targeted", "--target", "0", "--budget",
             "500", "--seed", "5"})
            .code != kExitOk);
}

TEST_CASE("sweep row counts") {
  const auto noise = cli({"sweep", "--epochs", "3", "--seeds", "0,1", "--noise", "random:0,0.2,0.4", "--format", "csv"});
  CHECK(noise.code == kExitOk);
  // version line, column header, three rows
  CHECK(std::count(noise.out.begin(), noise.out.end(), '\n') == 5);
  const auto place = cli({"sweep", "--epochs", "3", "--seeds", "0", "--placement", "first,middle,last,all"});
  CHECK(place.code == kExitOk);
  CHECK(std::count(place.out.begin(), place.out.end(), '\n') == 6);
}

}  // TEST_SUITE
