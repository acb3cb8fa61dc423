#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <json.hpp>

#include "cbed/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cbed");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cbed::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cbed_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
  const fs::path p = dir / "config.in.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  const std::string s = slurp(p);
  return s.substr(0, s.find('\n'));
}

nlohmann::json tiny_loop() {
  return {{"d", 3},     {"B", 2},      {"T", 2},     {"N", 15},  {"L", 6},
          {"n_outer", 6}, {"C", 2},    {"O", 2},     {"bootstrap_replicates", 3},
          {"learner_restarts", 1}, {"immd_designs", 2}, {"immd_samples", 10}, {"seed", 3}};
}

}  // namespace

TEST_CASE("missing config exits with status 2") {
  const fs::path dir = scratch("missing");
  const Result r = cli({"sample", "--config", (dir / "nope.json").string(), "--out", dir.string()});
  CHECK(r.code == 2);
  CHECK(!r.err.empty());
  const std::string cmd = std::string(CBED_TOOL_PATH) + " sample --config " + (dir / "nope.json").string() +
                          " --out " + dir.string() + " 2> " + (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 2);
  CHECK(!slurp(dir / "stderr.txt").empty());
}

TEST_CASE("usage and config errors exit with status 2") {
  const fs::path dir = scratch("usage");
  CHECK(cli({}).code == 2);
  CHECK(cli({"sample"}).code == 2);
  const fs::path bad = write_config(dir, {{"d", 3}, {"no_such_key", 1}});
  CHECK(cli({"sample", "--config", bad.string(), "--out", dir.string()}).code == 2);
  const fs::path bad_type = write_config(dir, {{"d", "three"}});
  CHECK(cli({"sample", "--config", bad_type.string(), "--out", dir.string()}).code == 2);
}

TEST_CASE("sample writes the SCM, samples and config echo") {
  const fs::path dir = scratch("sample");
  nlohmann::json cfg = {{"d", 3}, {"seed", 1}, {"scm_seed", 99}, {"sample", {{"n", 5}, {"interventions", {{{"targets", {1}}, {"states", {2.0}}}}}}}};
  const fs::path c = write_config(dir, cfg);
  const fs::path a = dir / "a", b = dir / "b";
  REQUIRE(cli({"sample", "--config", c.string(), "--out", a.string()}).code == 0);
  REQUIRE(cli({"sample", "--config", c.string(), "--out", b.string(), "--seed", "2"}).code == 0);
  CHECK(fs::exists(a / "config.json"));
  CHECK(first_line(a / "samples.csv") == "targets,x0,x1,x2");
  CHECK(slurp(a / "scm.json") == slurp(b / "scm.json"));
  CHECK(slurp(a / "samples.csv") != slurp(b / "samples.csv"));
  const std::string csv = slurp(a / "samples.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);
  CHECK(csv.find("\n1,") != std::string::npos);
  const auto echo = nlohmann::json::parse(slurp(a / "config.json"));
  CHECK(echo.at("seed") == 1);
  CHECK(echo.contains("learning_rate"));
  CHECK(echo.contains("particle_prior"));
}

TEST_CASE("eig-grid emits four single-target panels for two nodes and batch two") {
  const fs::path dir = scratch("grid");
  const fs::path c = write_config(dir, {{"d", 2}, {"B", 2}, {"N", 10}, {"L", 5}, {"n_outer", 5}, {"particles_per_graph", 5},
                                         {"grid", {{"lo", -20.0}, {"hi", 20.0}, {"points", 5}}}});
  REQUIRE(cli({"eig-grid", "--config", c.string(), "--out", (dir / "a").string()}).code == 0);
  REQUIRE(cli({"eig-grid", "--config", c.string(), "--out", (dir / "b").string()}).code == 0);
  const std::string csv = slurp(dir / "a" / "eig_grid.csv");
  CHECK(csv == slurp(dir / "b" / "eig_grid.csv"));
  CHECK(first_line(dir / "a" / "eig_grid.csv") == "target_spec,state_1,state_2,eig_nats");
  std::set<std::string> panels;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    panels.insert(line.substr(0, line.find(',')));
    ++rows;
  }
  CHECK(panels == std::set<std::string>{"0|0", "0|1", "1|0", "1|1"});
  CHECK(rows == 4 * 25);

  const fs::path too_big = write_config(dir, {{"d", 5}, {"B", 1}, {"grid", {{"points", 2}}}});
  CHECK(cli({"eig-grid", "--config", too_big.string(), "--out", (dir / "c").string()}).code != 0);
}

TEST_CASE("design writes a trace, the policy and the designs") {
  const fs::path dir = scratch("design");
  const fs::path c = write_config(dir, tiny_loop());
  REQUIRE(cli({"design", "--config", c.string(), "--out", dir.string()}).code == 0);
  CHECK(fs::exists(dir / "policy.json"));
  CHECK(fs::exists(dir / "designs.json"));
  const auto row = nlohmann::json::parse(first_line(dir / "trace.jsonl"));
  for (const char* key : {"step", "eig_value", "temperature", "ess", "grad_norm"}) CHECK(row.contains(key));
}

TEST_CASE("loop directories share one schema across strategies") {
  const fs::path dir = scratch("loop");
  const fs::path c = write_config(dir, tiny_loop());
  for (const char* s : {"policy", "random_fixed", "random_random"}) {
    const fs::path out = dir / s;
    REQUIRE(cli({"loop", "--config", c.string(), "--out", out.string(), "--strategy", s}).code == 0);
    for (const char* f : {"config.json", "designs.jsonl", "metrics.csv", "particles_final.json"}) CHECK(fs::exists(out / f));
    CHECK(first_line(out / "metrics.csv") == "batch_index,e_shd,f1,i_mmd,ess,seed");
    const std::string m = slurp(out / "metrics.csv");
    CHECK(std::count(m.begin(), m.end(), '\n') == 4);
    const auto d = nlohmann::json::parse(first_line(out / "designs.jsonl"));
    CHECK(d.contains("batch"));
    CHECK(d.contains("designs"));
  }
  CHECK(fs::exists(dir / "policy" / "trace.jsonl"));
}

TEST_CASE("seed sweeps aggregate and do not depend on --jobs") {
  const fs::path dir = scratch("sweep");
  const fs::path c = write_config(dir, tiny_loop());
  REQUIRE(cli({"loop", "--config", c.string(), "--out", (dir / "j1").string(), "--seeds", "1,2,3", "--jobs", "1"}).code == 0);
  REQUIRE(cli({"loop", "--config", c.string(), "--out", (dir / "j3").string(), "--seeds", "1,2,3", "--jobs", "3"}).code == 0);
  for (const char* s : {"seed_1", "seed_2", "seed_3"}) {
    CHECK(slurp(dir / "j1" / s / "metrics.csv") == slurp(dir / "j3" / s / "metrics.csv"));
  }
  CHECK(slurp(dir / "j1" / "aggregate.csv") == slurp(dir / "j3" / "aggregate.csv"));
  CHECK(first_line(dir / "j1" / "aggregate.csv") ==
        "batch_index,n_seeds,e_shd_mean,e_shd_ci95,f1_mean,f1_ci95,i_mmd_mean,i_mmd_ci95");
  CHECK(slurp(dir / "j1" / "seed_1" / "metrics.csv") != slurp(dir / "j1" / "seed_2" / "metrics.csv"));
}

TEST_CASE("evaluate writes one metrics row") {
  const fs::path dir = scratch("evaluate");
  const fs::path c = write_config(dir, tiny_loop());
  REQUIRE(cli({"evaluate", "--config", c.string(), "--out", dir.string()}).code == 0);
  const std::string m = slurp(dir / "metrics.csv");
  CHECK(std::count(m.begin(), m.end(), '\n') == 2);
}

TEST_CASE("DIFFCBED_OUT applies only without --out") {
  const fs::path dir = scratch("envout");
  const fs::path c = write_config(dir, {{"d", 2}, {"sample", {{"n", 2}}}});
  ::setenv("DIFFCBED_OUT", (dir / "from_env").string().c_str(), 1);
  const int a = cli({"sample", "--config", c.string()}).code;
  const int b = cli({"sample", "--config", c.string(), "--out", (dir / "flag").string()}).code;
  ::unsetenv("DIFFCBED_OUT");
  CHECK(a == 0);
  CHECK(b == 0);
  CHECK(fs::exists(dir / "from_env" / "samples.csv"));
  CHECK(fs::exists(dir / "flag" / "samples.csv"));
  CHECK(!fs::exists(dir / "from_env" / "flag"));
}
