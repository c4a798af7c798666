#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "core/errors.hpp"
#include "lab/config.hpp"
#include "lab/presets.hpp"
#include "lab/runner.hpp"

using namespace siamlab;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Io;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("siamlab_lab_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("lab") {
  TEST_CASE("registry covers every table and figure") {
    std::set<std::string> names, refs;
    for (const Preset& p : preset_registry()) {
      CHECK(names.insert(p.name).second);
      refs.insert(p.reference);
      CHECK_NOTHROW(wire(p.spec.arch));
      CHECK_NOTHROW(validate(p.spec.train));
    }
    for (const char* r : {"table1", "table2", "table3", "table4", "table5", "table6", "fig2", "fig3", "fig4a", "fig4b",
                          "fig4c", "fig5", "fig6", "fig8"}) {
      CHECK(refs.count(r) == 1);
    }
    for (const char* n : {"table1-moving-average", "table1-samebatch-10", "table1-samebatch-25", "table2-simsiam",
                          "table2-naive", "table2-mirror", "table2-symmetric-predictor", "table3-baseline",
                          "table3-keep-oe", "table3-keep-re", "table4-full", "table4-keep-oe", "table4-keep-re",
                          "table4-none", "table5-mlp", "table5-two-fc", "table5-tanh-fc", "table5-bias",
                          "fig3-probe-center", "fig3-probe-residual", "fig8-bn-mse", "fig8-mse-no-bn"}) {
      CHECK(names.count(n) == 1);
    }
    CHECK(code_of([] { find_preset("nope"); }) == ErrorCode::UnknownPreset);
  }

  TEST_CASE("config text: comments, blanks, whitespace, line numbers in errors") {
    std::istringstream ok("# header\n\n  train.steps = 12   # trailing\nloss.kind=infonce\n");
    const Settings s = parse_config(ok);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == std::make_pair(std::string("train.steps"), std::string("12")));
    std::istringstream bad("train.steps = 1\nnot an assignment\n");
    try {
      parse_config(bad);
      FAIL("accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidOverride);
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK(code_of([] { read_config_file("/nonexistent.cfg"); }) == ErrorCode::Io);
  }

  TEST_CASE("settings: every key round-trips through describe, bad values are rejected") {
    RunSpec spec = find_preset("table6-bias-single").spec;
    RunSpec back;
    apply_settings(back, describe(spec));
    CHECK(describe(back) == describe(spec));
    CHECK(setting_keys().size() == describe(spec).size());
    for (auto [k, v] : std::vector<std::pair<std::string, std::string>>{
             {"train.steps", "ten"}, {"train.steps", "1.5"}, {"encoder.final_bn", "maybe"}, {"loss.kind", "l1"},
             {"train.schedule", "step"}, {"data.source", "imagenet"}, {"nope.key", "1"}, {"train.seed", "-1"}}) {
      CAPTURE(k);
      CHECK(code_of([&] { apply_setting(spec, k, v); }) == ErrorCode::InvalidOverride);
    }
    apply_setting(spec, "train.seed", "9");
    CHECK(spec.train.seed == 9);
    CHECK(spec.data.synthetic.seed == 9);
  }

  TEST_CASE("resolve order: preset, seed, config file, then flags") {
    const Preset& p = find_preset("table2-simsiam");
    const RunSpec s = resolve_spec(p, 3, {{"train.steps", "10"}, {"train.batch", "64"}}, {{"train.steps", "20"}, {"train.warmup", "5"}});
    CHECK(s.train.steps == 20);
    CHECK(s.train.batch == 64);
    CHECK(s.train.seed == 3);
    CHECK(code_of([&] { resolve_spec(find_preset("table2-mirror"), 0, {}, {{"arch.predictor", "identity"}}); }) ==
          ErrorCode::InvalidArchitecture);
  }

  TEST_CASE("run_preset writes artifacts and a manifest that reproduces the run") {
    const fs::path dir = scratch("run");
    RunRequest req;
    req.preset = "table2-simsiam";
    req.seed = 1;
    req.out_dir = dir.string();
    req.overrides = {{"train.steps", "60"}, {"train.warmup", "10"}};
    const RunOutcome out = run_preset(req);
    for (const char* f : {"trajectory.csv", "trajectory.svg", "checkpoint.txt", "manifest.json"}) {
      CHECK(fs::exists(dir / f));
    }
    CHECK_FALSE(fs::exists(dir / "manifest.json.tmp"));
    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["preset"] == "table2-simsiam");
    CHECK(manifest["seed"] == 1);
    CHECK(manifest["overrides"]["train.steps"] == "60");
    CHECK(manifest["verdict"]["expectation_held"] == out.manifest.expectation_held);
    CHECK(manifest["artifacts"]["trajectory"] == (dir / "trajectory.csv").string());

    const std::string first = slurp(dir / "trajectory.csv");
    const fs::path again = scratch("run2");
    req.out_dir = again.string();
    run_preset(req);
    CHECK(slurp(again / "trajectory.csv") == first);
    CHECK(slurp(again / "checkpoint.txt") == slurp(dir / "checkpoint.txt"));

    req.overrides = {{"train.nope", "1"}};
    CHECK(code_of([&] { run_preset(req); }) == ErrorCode::InvalidOverride);
    req.preset = "nope";
    CHECK(code_of([&] { run_preset(req); }) == ErrorCode::UnknownPreset);
    fs::remove_all(dir);
    fs::remove_all(again);
  }

  TEST_CASE("tau sweep: long-format rows and a fixed-batch entropy per value") {
    const auto rows = sweep("fig6-temperature", "tau", {0.1, 1.0}, {0}, {{"train.steps", "20"}, {"train.warmup", "5"}});
    std::vector<double> entropy;
    for (const auto& r : rows) {
      if (r.metric == "entropy_fixed_batch") entropy.push_back(r.reading);
    }
    REQUIRE(entropy.size() == 2);
    CHECK(entropy[0] <= entropy[1]);
    std::ostringstream csv;
    write_sweep_csv(csv, rows);
    CHECK(csv.str().rfind("value,seed,metric,step,reading\n", 0) == 0);
  }

  TEST_CASE("sweep errors") {
    CHECK(code_of([] { sweep("fig6-temperature", "tau", {}, {0}); }) == ErrorCode::InvalidParameter);
    CHECK(code_of([] { sweep("fig6-temperature", "tau", {0.1}, {}); }) == ErrorCode::InvalidParameter);
    CHECK(code_of([] { sweep("fig6-temperature", "width", {1}, {0}); }) == ErrorCode::InvalidParameter);
    CHECK(code_of([] { sweep("fig6-temperature", "tau", {-1.0}, {0}); }) == ErrorCode::InvalidParameter);
    CHECK(code_of([] { sweep("table2-simsiam", "eta", {0.0}, {0}); }) == ErrorCode::InvalidParameter);
    CHECK(code_of([] { sweep("nope", "tau", {0.1}, {0}); }) == ErrorCode::UnknownPreset);
  }

  TEST_CASE("CSV reader: blanks become missing, ragged rows and text are errors") {
    std::istringstream ok("step,a,b\n1,0.5,\n2,1e-3,4\n");
    const CsvTable t = read_csv(ok);
    REQUIRE(t.rows.size() == 2);
    CHECK_FALSE(t.rows[0][2].has_value());
    CHECK(*t.rows[1][1] == doctest::Approx(1e-3));
    CHECK(t.column("b") == 2);
    CHECK(code_of([&] { t.column("c"); }) == ErrorCode::MissingColumn);
    std::istringstream ragged("a,b\n1\n");
    CHECK(code_of([&] { read_csv(ragged); }) == ErrorCode::MalformedFile);
    std::istringstream text("a\nx\n");
    CHECK(code_of([&] { read_csv(text); }) == ErrorCode::MalformedFile);
  }

  TEST_CASE("SVG: one polyline per metric, legend only for several, deterministic, well formed") {
    std::istringstream in("step,m_o,m_r\n0,0.1,0.9\n50,0.2,0.8\n100,0.3,\n");
    const CsvTable t = read_csv(in);
    const std::string one = render_svg(t, {"m_o"});
    const std::string two = render_svg(t, {"m_o", "m_r"});
    auto count = [](const std::string& s, const std::string& w) {
      std::size_t n = 0;
      for (auto p = s.find(w); p != std::string::npos; p = s.find(w, p + 1)) ++n;
      return n;
    };
    CHECK(count(one, "<polyline") == 1);
    CHECK(count(two, "<polyline") == 2);
    CHECK(count(one, "class=\"legend\"") == 0);
    CHECK(count(two, "class=\"legend\"") == 1);
    CHECK(two == render_svg(t, {"m_o", "m_r"}));
    CHECK(one.rfind("<svg", 0) == 0);
    CHECK(count(one, "<svg") == count(one, "</svg>"));
    CHECK(one.find(">step<") != std::string::npos);
    CHECK(code_of([&] { render_svg(t, {"std"}); }) == ErrorCode::MissingColumn);

    const fs::path dir = scratch("svg");
    fs::create_directories(dir);
    {
      std::ofstream f(dir / "t.csv");
      f << "step,m_o\n0,1\n1,2\n";
    }
    CHECK(render_svg_file((dir / "t.csv").string(), {"m_o"}) == (dir / "t.svg").string());
    CHECK(fs::exists(dir / "t.svg"));
    fs::remove_all(dir);
  }
}
