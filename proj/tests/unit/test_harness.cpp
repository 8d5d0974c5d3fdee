#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "helpers.hpp"
#include "mfl/harness.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mfl;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

json load(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mfl-test-" + name);
  fs::remove_all(dir);
  return dir;
}

json simulate_config() {
  return json::parse(R"({"schema_version": 1, "task": "simulate",
    "flow": {"kind": "euclidean", "dim": 2},
    "params": {"s": 0.0, "t": 0.5, "x": [0.0, 0.0]},
    "mc": {"n_paths": 400, "step": 0.01, "seed": 7}})");
}

ErrorCode code_of(const json& j) {
  try {
    parse_config(j);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Ok;
}

std::string message_of(const json& j) {
  try {
    parse_config(j);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("shipped configs parse and round-trip") {
  std::size_t seen = 0;
  for (const auto& entry : fs::directory_iterator(fs::path(MFL_SOURCE_DIR) / "tools" / "configs")) {
    CAPTURE(entry.path().string());
    const ExperimentConfig cfg = parse_config(load(entry.path()));
    CHECK(parse_config(config_to_json(cfg)) == cfg);
    CHECK(parse_config_text(config_to_json(cfg).dump()) == cfg);
    ++seen;
  }
  CHECK(seen >= 6);
}

TEST_CASE("config validation") {
  CHECK(code_of(simulate_config()) == ErrorCode::Ok);
  SUBCASE("unknown keys are named") {
    json j = simulate_config();
    j["colour"] = "red";
    CHECK(code_of(j) == ErrorCode::ConfigInvalid);
    CHECK(message_of(j).find("colour") != std::string::npos);
    json k = simulate_config();
    k["mc"]["seeds"] = 3;
    CHECK(code_of(k) == ErrorCode::ConfigInvalid);
    CHECK(message_of(k).find("mc.seeds") != std::string::npos);
    json p = simulate_config();
    p["params"]["tt"] = 0.1;
    CHECK(code_of(p) == ErrorCode::ConfigInvalid);
  }
  SUBCASE("times beyond the horizon") {
    json j = simulate_config();
    j["flow"] = json::parse(R"({"kind": "ricci_sphere", "dim": 2})");
    j["params"]["x"] = json::array({0.0, 0.0, 1.0});
    j["params"]["t"] = 0.6;
    CHECK(code_of(j) == ErrorCode::ConfigInvalid);
    j["params"]["t"] = 0.4;
    CHECK(code_of(j) == ErrorCode::Ok);
  }
  SUBCASE("mc limits and schema") {
    json j = simulate_config();
    j["mc"]["n_paths"] = 99;
    CHECK(code_of(j) == ErrorCode::ConfigInvalid);
    json k = simulate_config();
    k["mc"]["step"] = 0.0;
    CHECK(code_of(k) == ErrorCode::ConfigInvalid);
    json v = simulate_config();
    v["schema_version"] = 2;
    CHECK(code_of(v) == ErrorCode::ConfigInvalid);
    json t = simulate_config();
    t["task"] = "plot";
    CHECK(code_of(t) == ErrorCode::ConfigInvalid);
    json f = simulate_config();
    f["output"] = json::parse(R"({"directory": "x", "formats": ["pdf"]})");
    CHECK(code_of(f) == ErrorCode::ConfigInvalid);
  }
  SUBCASE("bad flows and points") {
    json j = simulate_config();
    j["flow"]["kind"] = "klein";
    CHECK(code_of(j) == ErrorCode::ConfigInvalid);
    json s = simulate_config();
    s["flow"] = json::parse(R"({"kind": "sphere", "dim": 1})");
    CHECK(code_of(s) == ErrorCode::ConfigInvalid);
    json p = simulate_config();
    p["flow"] = json::parse(R"({"kind": "sphere", "dim": 2})");
    p["params"]["x"] = json::array({1.0, 1.0, 0.0});
    CHECK(code_of(p) == ErrorCode::ConfigInvalid);
    json d = simulate_config();
    d["flow"] = json::parse(R"({"kind": "sphere", "dim": 2, "drift": {"kind": "linear_radial", "lambda": 1.0}})");
    CHECK(code_of(d) == ErrorCode::ConfigInvalid);
  }
  CHECK_THROWS_AS(parse_config_text("{not json"), Error);
}

TEST_CASE("simulate task: terminal variance is 2t per coordinate") {
  const ReportBundle b = run_experiment(parse_config(simulate_config()));
  CHECK(b.errors == 0);
  const json& r = b.results.at(0);
  CHECK(r["name"] == "terminal_moments");
  for (const auto& v : r["coordinate_variance"]) {
    CHECK(std::abs(v["mean"].get<double>() - 1.0) <= 3 * v["stderr"].get<double>());
  }
}

TEST_CASE("verify task on the sphere matrix holds everywhere") {
  const ExperimentConfig cfg = parse_config(load(fs::path(MFL_SOURCE_DIR) / "tools" / "configs" / "verify_sphere.json"));
  const ReportBundle b = run_experiment(cfg);
  CHECK(b.errors == 0);
  CHECK(b.results.size() == 8);
  for (const auto& v : b.results) {
    CAPTURE(v["name"].get<std::string>());
    CHECK(v["kind"] == "verdict");
    CHECK(v["holds"] == true);
    for (const char* key : {"name", "item", "lhs", "rhs", "slack", "stderr", "holds", "seed", "config"}) {
      CHECK(v.contains(key));
    }
  }
}

TEST_CASE("MC-level failures become error results") {
  json j = json::parse(R"({"schema_version": 1, "task": "verify",
    "flow": {"kind": "sphere", "dim": 2},
    "params": {"K": 1.0, "checks": [
      {"inequality": "entropy", "f": {"type": "coordinate", "index": 2}, "x": [1.0, 0.0, 0.0], "t": 0.2, "p": 2.0},
      {"inequality": "gradient", "f": {"type": "coordinate", "index": 2}, "x": [1.0, 0.0, 0.0], "t": 0.2, "p": 1.0}]},
    "mc": {"n_paths": 200, "step": 0.01, "seed": 1}})");
  const ReportBundle b = run_experiment(parse_config(j));
  CHECK(b.errors == 1);
  CHECK(b.results.at(0)["kind"] == "error");
  CHECK(b.results.at(0)["code"] == error_code_name(ErrorCode::NonPositiveField));
  CHECK(b.results.at(1)["kind"] == "verdict");
}

TEST_CASE("reports are deterministic modulo the timestamp") {
  json j = json::parse(R"({"schema_version": 1, "task": "couple",
    "flow": {"kind": "sphere", "dim": 2},
    "params": {"s": 0.0, "t": 0.2, "x": [1.0, 0.0, 0.0], "y": [0.0, 1.0, 0.0], "mode": "mirror",
               "hit_times": [0.1, 0.2], "p": [1.0]},
    "mc": {"n_paths": 300, "step": 0.005, "seed": 4}})");
  const ExperimentConfig cfg = parse_config(j);
  auto dump = [&](const char* threads) {
    setenv("MFL_THREADS", threads, 1);
    json out = run_experiment(cfg).to_json();
    out.erase("created");
    return out.dump();
  };
  const std::string a = dump("1");
  const std::string b = dump("3");
  unsetenv("MFL_THREADS");
  CHECK(a == b);
  // The echoed config reproduces the run.
  json echoed = json::parse(a)["config"];
  json again = run_experiment(parse_config(echoed)).to_json();
  again.erase("created");
  CHECK(again.dump() == a);
}

TEST_CASE("emit_report formats") {
  SUBCASE("empty bundle") {
    ReportBundle b;
    b.version = library_version();
    const fs::path dir = scratch("empty");
    const auto written = emit_report(b, dir.string(), {"json", "csv", "svg"});
    CHECK(written.size() == 1);
    const json j = load(dir / "report.json");
    CHECK(j["results"].is_array());
    CHECK(j["results"].empty());
    CHECK(j["diagnostics"].empty());
    CHECK(j.contains("version"));
    CHECK(j.contains("config"));
  }
  SUBCASE("grigoryan table") {
    const ExperimentConfig cfg =
        parse_config(load(fs::path(MFL_SOURCE_DIR) / "tools" / "configs" / "nonexplosion_quadratic.json"));
    const ReportBundle b = run_experiment(cfg);
    const fs::path dir = scratch("grigoryan");
    emit_report(b, dir.string(), {"json", "csv", "svg"});
    const std::string csv = slurp(dir / "grigoryan.csv");
    CHECK(csv.rfind("R,F\n", 0) == 0);
    CHECK(fs::exists(dir / "grigoryan_F.svg"));
    CHECK(b.results.at(0).dump().find("convergent-trend") != std::string::npos);
  }
  SUBCASE("coupling plot") {
    json j = json::parse(R"({"schema_version": 1, "task": "couple",
      "flow": {"kind": "euclidean", "dim": 2},
      "params": {"s": 0.0, "t": 0.2, "x": [0.0, 0.0], "y": [1.0, 0.0], "mode": "mirror", "record_paths": 80},
      "mc": {"n_paths": 200, "step": 0.01, "seed": 4}})");
    const ReportBundle b = run_experiment(parse_config(j));
    const fs::path dir = scratch("coupling");
    emit_report(b, dir.string(), {"csv", "svg"});
    CHECK_FALSE(fs::exists(dir / "report.json"));
    const std::string svg = slurp(dir / "coupling_rho.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(count(svg, "<polyline") == 50);
    const std::string csv = slurp(dir / "coupling.csv");
    CHECK(csv.rfind("path_id,k,t,rho,coupled_flag,regularized_flag\n", 0) == 0);
  }
  SUBCASE("polyline per path below the cap") {
    Plot p;
    p.name = "p";
    for (int i = 0; i < 7; ++i) p.lines.push_back({{0.0, 1.0 * i}, {1.0, 2.0 * i}});
    CHECK(count(plot_to_svg(p), "<polyline") == 7);
  }
  SUBCASE("unwritable directory") {
    ReportBundle b;
    const fs::path blocker = scratch("blocker");
    std::ofstream(blocker.string()) << "file";
    try {
      emit_report(b, (blocker / "sub").string(), {"json"});
      FAIL("expected IoError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::IoError);
    }
    fs::remove(blocker);
  }
}

TEST_CASE("CSV keeps full precision") {
  Table t;
  t.name = "t";
  t.header = {"a", "b"};
  t.rows = {{0.1, 1.0 / 3.0}};
  const std::string csv = table_to_csv(t);
  std::istringstream in(csv);
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  CHECK(header == "a,b");
  const double b = std::stod(line.substr(line.find(',') + 1));
  CHECK(b == 1.0 / 3.0);
}
