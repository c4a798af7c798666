// Exercises the shared library through its C header only.
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "siamlab/siamlab.h"

namespace fs = std::filesystem;

TEST_CASE("version, status names and the preset listing") {
  CHECK(std::string(siamlab_version()).size() > 0);
  CHECK(std::string(siamlab_status_name(SIAMLAB_ERR_UNKNOWN_PRESET)) == "unknown preset");
  REQUIRE(siamlab_preset_count() > 30);
  const char *name = nullptr, *ref = nullptr, *desc = nullptr, *expect = nullptr;
  CHECK(siamlab_preset_info(0, &name, &ref, &desc, &expect) == SIAMLAB_OK);
  CHECK(name != nullptr);
  CHECK(siamlab_preset_info(siamlab_preset_count(), &name, nullptr, nullptr, nullptr) != SIAMLAB_OK);
}

TEST_CASE("run a preset, then plot its trajectory") {
  const fs::path dir = fs::temp_directory_path() / "siamlab_capi_run";
  fs::remove_all(dir);
  const char* overrides[] = {"train.steps=40", "train.warmup=10"};
  siamlab_run* run = nullptr;
  REQUIRE(siamlab_run_preset("table2-simsiam", 0, dir.c_str(), nullptr, overrides, 2, &run) == SIAMLAB_OK);
  REQUIRE(run != nullptr);
  CHECK(std::string(siamlab_run_out_dir(run)) == dir.string());
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(std::string(siamlab_run_expectation(run)).size() > 0);
  siamlab_run_free(run);

  const char* metrics[] = {"m_o", "m_r"};
  const char* written = nullptr;
  CHECK(siamlab_render_svg((dir / "trajectory.csv").c_str(), metrics, 2, nullptr, &written) == SIAMLAB_OK);
  CHECK(std::string(written) == (dir / "trajectory.svg").string());
  const char* missing[] = {"nope"};
  CHECK(siamlab_render_svg((dir / "trajectory.csv").c_str(), missing, 1, nullptr, nullptr) == SIAMLAB_ERR_MISSING_COLUMN);
  fs::remove_all(dir);
}

TEST_CASE("config file is applied before the overrides") {
  const fs::path dir = fs::temp_directory_path() / "siamlab_capi_cfg";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg = dir / "run.cfg";
  std::FILE* f = std::fopen(cfg.c_str(), "w");
  REQUIRE(f);
  std::fputs("train.steps = 500\ntrain.metric_every = 10\n", f);
  std::fclose(f);
  const char* overrides[] = {"train.steps=20", "train.warmup=5"};
  siamlab_run* run = nullptr;
  REQUIRE(siamlab_run_preset("table2-naive", 0, (dir / "out").c_str(), cfg.c_str(), overrides, 2, &run) == SIAMLAB_OK);
  siamlab_run_free(run);
  std::FILE* csv = std::fopen((dir / "out" / "trajectory.csv").c_str(), "r");
  REQUIRE(csv);
  int lines = 0;
  for (int c = std::fgetc(csv); c != EOF; c = std::fgetc(csv)) lines += c == '\n';
  std::fclose(csv);
  CHECK(lines == 3);  // header + steps 10 and 20
  fs::remove_all(dir);
}

TEST_CASE("errors come back as status codes with a message") {
  siamlab_run* run = nullptr;
  CHECK(siamlab_run_preset("nope", 0, nullptr, nullptr, nullptr, 0, &run) == SIAMLAB_ERR_UNKNOWN_PRESET);
  CHECK(run == nullptr);
  CHECK(std::string(siamlab_last_error()).find("nope") != std::string::npos);
  const char* bad[] = {"train.steps"};
  CHECK(siamlab_run_preset("table2-simsiam", 0, nullptr, nullptr, bad, 1, &run) == SIAMLAB_ERR_INVALID_OVERRIDE);
  CHECK(siamlab_run_preset(nullptr, 0, nullptr, nullptr, nullptr, 0, &run) == SIAMLAB_ERR_INVALID_ARGUMENT);
  CHECK(siamlab_run_preset("table2-simsiam", 0, nullptr, "/nonexistent.cfg", nullptr, 0, &run) == SIAMLAB_ERR_IO);
  const double values[] = {0.1};
  const uint64_t seeds[] = {0};
  CHECK(siamlab_sweep("fig6-temperature", "width", values, 1, seeds, 1, nullptr, 0, "/tmp/x.csv") ==
        SIAMLAB_ERR_INVALID_PARAMETER);
  CHECK(siamlab_sweep("fig6-temperature", "tau", values, 0, seeds, 1, nullptr, 0, "/tmp/x.csv") ==
        SIAMLAB_ERR_INVALID_PARAMETER);
  siamlab_report* report = nullptr;
  CHECK(siamlab_verify("nope", &report) == SIAMLAB_ERR_INVALID_PARAMETER);
  siamlab_run_free(nullptr);
  siamlab_report_free(nullptr);
}

TEST_CASE("sweep writes a long-format CSV") {
  const fs::path csv = fs::temp_directory_path() / "siamlab_capi_sweep.csv";
  const double values[] = {0.2, 0.5};
  const uint64_t seeds[] = {0};
  const char* overrides[] = {"train.steps=10", "train.warmup=5"};
  REQUIRE(siamlab_sweep("fig6-temperature", "tau", values, 2, seeds, 1, overrides, 2, csv.c_str()) == SIAMLAB_OK);
  std::FILE* f = std::fopen(csv.c_str(), "r");
  REQUIRE(f);
  char header[64] = {};
  REQUIRE(std::fgets(header, sizeof header, f));
  std::fclose(f);
  CHECK(std::string(header) == "value,seed,metric,step,reading\n");
  fs::remove(csv);
}

TEST_CASE("verify returns a JSON report") {
  siamlab_report* report = nullptr;
  REQUIRE(siamlab_verify("losses", &report) == SIAMLAB_OK);
  CHECK(siamlab_report_passed(report));
  CHECK(siamlab_report_failures(report) == 0);
  const std::string json = siamlab_report_json(report);
  CHECK(json.find("\"suite\": \"losses\"") != std::string::npos);
  CHECK(json.find("normalized-mse-identity") != std::string::npos);
  siamlab_report_free(report);
}
