#include "mfg/cli/runners.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <sstream>

#include <sys/wait.h>

using namespace mfg;
using namespace mfg::cli;

namespace {

const fs::path kConfigs = MFG_CONFIG_DIR;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mfg_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json p0_doc() { return read_json_file(kConfigs / "p0_equilibria.json"); }

std::vector<std::string> errors_of(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.errors();
  }
  return {};
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
  for (const auto& e : errors)
    if (e.find(needle) != std::string::npos) return true;
  return false;
}

int run_tool(const std::string& args) {
  const std::string cmd = std::string(MFG_SOLVE_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing", "[cli][config]") {
  SECTION("P0 fixture parses to P0 exactly") {
    const auto cfg = parse_config(kConfigs / "p0_equilibria.json");
    CHECK(cfg.model == oracle::p0());
    CHECK(cfg.run == RunKind::equilibria);
  }
  SECTION("minimal d = 1 config") {
    const auto cfg = parse_config(kConfigs / "minimal_d1.json");
    CHECK(cfg.model.d == 1);
  }
  SECTION("every shipped fixture parses") {
    for (const auto& entry : fs::directory_iterator(kConfigs)) CHECK_NOTHROW(parse_config(entry.path()));
  }
  SECTION("w_S = w_I is rejected with the better-state message") {
    auto doc = p0_doc();
    doc["model"]["w_S"][0] = 2.0;
    CHECK(mentions(errors_of(doc), "better state"));
  }
  SECTION("all errors are reported, not just the first") {
    auto doc = p0_doc();
    doc["model"]["lambda"] = "fast";
    doc["model"]["q_plus"] = {0.5};
    doc["bogus"] = 1;
    doc["run"] = "dance";
    const auto errors = errors_of(doc);
    CHECK(errors.size() >= 4);
    CHECK(mentions(errors, "/model/lambda"));
    CHECK(mentions(errors, "/model/q_plus"));
    CHECK(mentions(errors, "/bogus: unknown key"));
    CHECK(mentions(errors, "/run"));
  }
  SECTION("missing file and malformed JSON") {
    CHECK_THROWS_AS(parse_config(fs::path("/nonexistent/config.json")), ConfigError);
    const auto dir = scratch_dir("malformed");
    std::ofstream(dir / "bad.json") << "{ not json";
    CHECK_THROWS_AS(parse_config(dir / "bad.json"), ConfigError);
  }
  SECTION("strategies are 1-based and range checked") {
    auto doc = read_json_file(kConfigs / "p0_turnpike.json");
    doc["turnpike"]["strategy"] = 3;
    CHECK(mentions(errors_of(doc), "/turnpike/strategy"));
    doc["turnpike"]["strategy"] = 2;
    CHECK(parse_config(doc).turnpike->strategy == 1);
  }
  SECTION("empty sweep axis is rejected") {
    auto doc = read_json_file(kConfigs / "p0_sweep_beta11.json");
    doc["sweep"]["axes"][0]["values"] = json::array();
    CHECK(mentions(errors_of(doc), "sweep axis is empty"));
    doc["sweep"]["axes"][0]["values"] = {0.1};
    doc["sweep"]["axes"][0]["path"] = "/model/nonexistent";
    CHECK(mentions(errors_of(doc), "/sweep/axes/0/path"));
  }
}

TEST_CASE("canonical round trip", "[cli][config]") {
  for (const auto& entry : fs::directory_iterator(kConfigs)) {
    const auto cfg = parse_config(entry.path());
    const json once = serialize(cfg);
    const auto again = parse_config(once);
    CHECK(again == cfg);
    CHECK(serialize(again) == once);
  }
}

TEST_CASE("equilibria run", "[cli][run]") {
  const auto dir = scratch_dir("equilibria");
  const auto bundle = execute(parse_config(kConfigs / "p0_equilibria.json"), dir);
  CHECK(bundle.exit_code() == 0);
  const auto doc = read_json_file(dir / "equilibria.json");
  REQUIRE(doc["equilibria"].size() == 1);
  CHECK(doc["equilibria"][0] == "Single(1)");
  const auto& first = doc["candidates"][0];
  CHECK(first["status"] == "accepted");
  CHECK(std::abs(first["stability"]["xi_principal"].get<double>() + 1.0198039) < 1e-6);
  CHECK(first["margins"]["I"][0]["j"] == 2);
  const auto manifest = read_json_file(dir / "manifest.json");
  CHECK(manifest["config"] == serialize(parse_config(kConfigs / "p0_equilibria.json")));
  CHECK(manifest["exit_code"] == 0);
}

TEST_CASE("simulate run writes the trajectory contract", "[cli][run]") {
  auto cfg = parse_config(kConfigs / "p0_simulate.json");
  cfg.simulate->grid.t_end = 0.05;
  const auto dir = scratch_dir("simulate");
  REQUIRE(execute(cfg, dir).exit_code() == 0);
  std::ifstream in(dir / "trajectory.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "t,x_1I,x_1S,x_2I,x_2S,g_1I,g_1S,g_2I,g_2S,cone_ok,argmin_ok");
  CHECK(row.rfind("0,0.25,0.25,0.25,0.25,", 0) == 0);
  std::size_t lines = 2;
  while (std::getline(in, row)) ++lines;
  CHECK(lines == 1 + 51);
}

TEST_CASE("turnpike run", "[cli][run]") {
  auto cfg = parse_config(kConfigs / "p0_turnpike.json");
  cfg.turnpike->grid.t_end = 2.0;
  const auto dir = scratch_dir("turnpike");
  REQUIRE(execute(cfg, dir).exit_code() == 0);
  const auto summary = read_json_file(dir / "turnpike.json");
  CHECK(summary["status"] == "certified");
  CHECK(fs::exists(dir / "trajectory.csv"));

  cfg.model.q_plus(1) = 0.4;
  const auto dir2 = scratch_dir("turnpike_violation");
  const auto bundle = execute(cfg, dir2);
  CHECK(bundle.exit_code() == 2);
  const auto violated = read_json_file(dir2 / "turnpike.json");
  CHECK(violated["status"] == "hypothesis_violation");
  CHECK(fs::exists(dir2 / "manifest.json"));
}

TEST_CASE("nplayer run", "[cli][run]") {
  auto cfg = parse_config(kConfigs / "p0_nplayer.json");
  cfg.nplayer->N_list = {50, 100};
  cfg.nplayer->replications = 4;
  cfg.nplayer->grid.t_end = 1.0;
  const auto a = scratch_dir("nplayer_a"), b = scratch_dir("nplayer_b");
  REQUIRE(execute(cfg, a).exit_code() == 0);
  cfg.threads = 3;
  REQUIRE(execute(cfg, b).exit_code() == 0);
  const auto body = slurp(a / "lln_errors.csv");
  CHECK(body.rfind("N,replications,mean_sup_error,std_error\n50,4,", 0) == 0);
  CHECK(body == slurp(b / "lln_errors.csv"));
}

TEST_CASE("sweep run", "[cli][run][sweep]") {
  const auto cfg = parse_config(kConfigs / "p0_sweep_beta11.json");
  const auto dir = scratch_dir("sweep");
  REQUIRE(execute(cfg, dir).exit_code() == 0);
  std::ifstream in(dir / "sweep.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("point,/model/beta/0/0,control,status,", 0) == 0);
  std::vector<double> x_single;
  std::size_t points = 0;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells[2] == "Single(1)") {
      x_single.push_back(std::stod(cells[5]));
      ++points;
    }
  }
  REQUIRE(points == 3);
  CHECK(x_single[0] < x_single[1]);
  CHECK(x_single[1] < x_single[2]);
  CHECK(std::abs(x_single[0] - 0.5) < 1e-15);

  SECTION("a point with invalid parameters fails alone") {
    auto bad = cfg;
    bad.sweep->axes[0].path = "/model/w_S/0";
    bad.sweep->axes[0].values = {0.5, 5.0};
    const auto d2 = scratch_dir("sweep_partial");
    const auto bundle = execute(bad, d2);
    CHECK(bundle.points_ok == 1);
    CHECK(bundle.points_total == 2);
    CHECK(bundle.exit_code() == 0);

    bad.sweep->axes[0].values = {5.0};
    const auto d3 = scratch_dir("sweep_failed");
    CHECK(execute(bad, d3).exit_code() == 2);
    CHECK(fs::exists(d3 / "manifest.json"));
  }
}

TEST_CASE("command line contract", "[cli][tool]") {
  const auto dir = scratch_dir("tool");
  CHECK(run_tool("solve " + (kConfigs / "p0_equilibria.json").string() + " --out " + dir.string()) == 0);
  CHECK(fs::exists(dir / "equilibria.json"));
  CHECK(fs::exists(dir / "manifest.json"));

  CHECK(run_tool("solve " + (kConfigs / "p0_equilibria.json").string() + " --validate-only") == 0);

  auto doc = read_json_file(kConfigs / "p0_sweep_beta11.json");
  doc["sweep"]["axes"][0]["values"] = json::array();
  std::ofstream(dir / "empty_axis.json") << doc.dump();
  CHECK(run_tool("solve " + (dir / "empty_axis.json").string() + " --out " + dir.string()) == 1);
  CHECK(run_tool("solve /nonexistent.json") == 1);

  const auto env_dir = scratch_dir("tool_env");
  const std::string env_cmd = "MFG_OUTPUT_DIR=" + env_dir.string() + " " + MFG_SOLVE_BIN + " solve " +
                              (kConfigs / "minimal_d1.json").string() + " > /dev/null 2>&1";
  CHECK(std::system(env_cmd.c_str()) == 0);
  CHECK(fs::exists(env_dir / "equilibria.json"));
}

TEST_CASE("identical config and seed give identical bytes", "[cli][determinism]") {
  auto cfg = parse_config(kConfigs / "p0_nplayer.json");
  cfg.nplayer->N_list = {100};
  cfg.nplayer->replications = 3;
  cfg.nplayer->grid.t_end = 1.0;
  const auto a = scratch_dir("det_a"), b = scratch_dir("det_b");
  execute(cfg, a);
  execute(cfg, b);
  CHECK(slurp(a / "lln_errors.csv") == slurp(b / "lln_errors.csv"));
  cfg.seed += 1;
  const auto c = scratch_dir("det_c");
  execute(cfg, c);
  CHECK(slurp(a / "lln_errors.csv") != slurp(c / "lln_errors.csv"));
}
