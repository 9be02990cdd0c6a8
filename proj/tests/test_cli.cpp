#include <doctest.h>

#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream o, e;
  Run r;
  r.code = da_cli::run(args, o, e);
  r.out = o.str();
  r.err = e.str();
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("da_thermo_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string write(const std::string& name, const json& j) const {
    std::ofstream(path / name) << j.dump();
    return (path / name).string();
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path output_dir(const std::string& out) {
  const auto at = out.find("output: ");
  REQUIRE(at != std::string::npos);
  std::string rest = out.substr(at + 8);
  return rest.substr(0, rest.find('\n'));
}

const json kSmall = {{"map", {{"type", "linear"}}},
                     {"budgets", {{"n_min", 3}, {"n_max", 5}, {"candidates", 30000}}},
                     {"t_grid", {-0.5, 0.0, 0.5, 1.0, 1.5}}};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("fnv1a64 reference vectors") {
    CHECK(da_cli::fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(da_cli::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(da_cli::fnv1a64("foobar") == 0x85944171f73967e8ULL);
  }

  TEST_CASE("csv quoting and number format") {
    CHECK(da_cli::quote_field("plain") == "plain");
    CHECK(da_cli::quote_field("a,b") == "\"a,b\"");
    CHECK(da_cli::quote_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(da_cli::quote_field("two\nlines") == "\"two\nlines\"");
    CHECK(da_cli::format_number(0.1) == "0.10000000000000001");
    da_cli::Csv c({"x", "y"});
    c.row({1.5, std::string("a,b")});
    c.row({static_cast<long long>(7), std::string("z")});
    CHECK(c.str() == "x,y\r\n1.5,\"a,b\"\r\n7,z\r\n");
    CHECK_THROWS(c.row({1.0}));
  }

  TEST_CASE("config resolution and schema errors") {
    json cfg = da_cli::resolve_config(json::object());
    CHECK(cfg["map"]["rho"].get<double>() == 0.05);
    CHECK(cfg["budgets"]["n_max"].get<int>() == 14);
    CHECK(cfg["seed"].get<int>() == 1);
    auto path_of = [](const json& j) {
      try {
        da_cli::resolve_config(j);
      } catch (const da_cli::SchemaError& e) {
        return e.path();
      }
      return std::string("none");
    };
    CHECK(path_of({{"budgets", {{"nmax", 3}}}}) == "/budgets/nmax");
    CHECK(path_of({{"map", {{"rho", "big"}}}}) == "/map/rho");
    CHECK(path_of({{"budgets", {{"steps", 10}}}}) == "/budgets/steps");
    CHECK(path_of({{"budgets", {{"n_min", 9}, {"n_max", 5}}}}) != "none");
    CHECK(path_of({{"potential", {{"type", "expression"}}}}) != "none");
    CHECK(path_of({{"t_grid", json::array()}}) == "/t_grid");
  }

  TEST_CASE("config hash ignores workers and output root") {
    json a = da_cli::resolve_config({{"workers", 1}});
    json b = da_cli::resolve_config({{"workers", 4}, {"out", "/somewhere"}});
    json c = da_cli::resolve_config({{"seed", 2}});
    CHECK(da_cli::config_hash("pressure", a) == da_cli::config_hash("pressure", b));
    CHECK(da_cli::config_hash("pressure", a) != da_cli::config_hash("pressure", c));
    CHECK(da_cli::config_hash("pressure", a) != da_cli::config_hash("srb", a));
    CHECK(da_cli::config_hash("pressure", a).size() == 16);
  }

  TEST_CASE("spectral run writes artifacts, caches, and respects --no-cache") {
    TempDir t;
    const std::string root = (t.path / "out").string();
    Run r = cli({"spectral", "--out", root});
    REQUIRE(r.code == 0);
    const fs::path dir = output_dir(r.out);
    CHECK(fs::exists(dir / "eigenvalues.csv"));
    json manifest = json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["command"] == "spectral");
    bool listed = false;
    for (const auto& a : manifest["artifacts"]) {
      const std::string body = slurp(dir / a["file"].get<std::string>());
      CHECK(a["bytes"].get<std::size_t>() == body.size());
      char h[17];
      std::snprintf(h, sizeof h, "%016llx", static_cast<unsigned long long>(da_cli::fnv1a64(body)));
      CHECK(a["fnv1a64"].get<std::string>() == h);
      listed = listed || a["file"] == "eigenvalues.csv";
    }
    CHECK(listed);
    CHECK(slurp(dir / "eigenvalues.csv").find("\r\n") != std::string::npos);

    Run again = cli({"spectral", "--out", root});
    CHECK(again.code == 0);
    CHECK(again.out.rfind("cached: ", 0) == 0);
    Run fresh = cli({"spectral", "--out", root, "--no-cache"});
    CHECK(fresh.code == 0);
    CHECK(output_dir(fresh.out) == fs::path(dir.string() + ".1"));
    CHECK(slurp(dir / "eigenvalues.csv") == slurp(output_dir(fresh.out) / "eigenvalues.csv"));
  }

  TEST_CASE("exit codes") {
    TempDir t;
    const std::string root = (t.path / "out").string();
    Run bad = cli({"spectral", "--out", root, "--config", t.write("bad.json", {{"map", {{"rho", "x"}}}})});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("/map/rho") != std::string::npos);
    Run rej = cli({"build-map", "--out", root, "--config", t.write("rej.json", {{"map", {{"lambda_c", 3.0}}}})});
    CHECK(rej.code == 3);
    CHECK(cli({"no-such-command"}).code == 2);
    CHECK(cli({"criteria", "--out", root, "nonsense"}).code == 2);
    CHECK(cli({"schema"}).code == 0);
  }

  TEST_CASE("pressure-curve output and worker determinism") {
    TempDir t;
    const std::string cfg = t.write("small.json", kSmall);
    Run r = cli({"pressure-curve", "--out", (t.path / "a").string(), "--config", cfg});
    REQUIRE(r.code == 0);
    const std::string curve = slurp(output_dir(r.out) / "curve.csv");
    CHECK(curve.rfind("t,P_est,P_lower,fit_r2\r\n", 0) == 0);

    Run p1 = cli({"pressure", "--out", (t.path / "w1").string(), "--config", cfg, "--workers", "1"});
    Run p2 = cli({"pressure", "--out", (t.path / "w2").string(), "--config", cfg, "--workers", "2"});
    REQUIRE(p1.code == 0);
    REQUIRE(p2.code == 0);
    CHECK(slurp(output_dir(p1.out) / "log_sums.csv") == slurp(output_dir(p2.out) / "log_sums.csv"));
  }

  TEST_CASE("criteria result carries a verdict") {
    TempDir t;
    Run r = cli({"criteria", "threshold-T", "--out", (t.path / "o").string()});
    REQUIRE(r.code == 0);
    json res = json::parse(slurp(output_dir(r.out) / "result.json"));
    CHECK(res["command"] == "criteria-threshold-T");
    CHECK(res["result"].contains("verdict"));
    CHECK(fs::exists(output_dir(r.out) / "criterion.csv"));
  }
}
