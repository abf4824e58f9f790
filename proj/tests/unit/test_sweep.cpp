#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vqanon/errors.hpp"
#include "vqanon/experiment/sweep.hpp"

#ifndef VQANON_GOLDEN_DIR
#error "VQANON_GOLDEN_DIR must point at tests/golden"
#endif

using namespace vqanon;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config(const std::string& extra = "") {
  std::istringstream in(
      "seed = 5\n"
      "data.num_speakers = 6\n"
      "data.num_train_speakers = 6\n"
      "data.utterances_per_speaker = 4\n"
      "data.frames_per_utterance = 60\n"
      "encoder.hidden_dims = 16, 16, 16\n"
      "train.epochs = 2\n"
      "eval.enroll_frames = 60\n"
      "bootstrap.resamples = 100\n" +
      extra);
  return parse_config(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vqanon_test_sweep_" + name);
  fs::remove_all(p);
  return p;
}

std::string csv_of(const TradeoffReport& r) {
  std::ostringstream s;
  write_report_csv(r, s);
  return s.str();
}

std::string json_of(const TradeoffReport& r) {
  std::ostringstream s;
  write_report_json(r, s);
  return s.str();
}

TradeoffReport fixed_report() {
  TradeoffReport r;
  TradeoffRow base;
  base.label = "no_vq";
  base.eer = {0.0215545, 0.015625, 0.0278085, 1000};
  base.eer_group_a = 0.0123456789;
  base.eer_group_b = 0.03;
  base.utility = {0.180188, 0.168809, 0.192064, 1000};
  base.perplexity = std::nan("");
  base.seed = 1;
  TradeoffRow v16 = base;
  v16.label = "v16";
  v16.codebook_size = 16;
  v16.eer = {0.321875, 0.299141, 0.346879, 1000};
  v16.perplexity = 14.9212345;
  TradeoffRow dead = base;
  dead.label = "v64";
  dead.codebook_size = 64;
  dead.aborted = true;
  dead.diagnostic = "fit: non-finite loss in epoch 1";
  dead.eer = {std::nan(""), std::nan(""), std::nan(""), 0};
  dead.utility = dead.eer;
  dead.eer_group_a = dead.eer_group_b = std::nan("");
  r.rows = {base, v16, dead};
  return r;
}

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

void check_same_rows(const TradeoffReport& a, const TradeoffReport& b) {
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto &x = a.rows[i], &y = b.rows[i];
    CHECK(x.label == y.label);
    CHECK(x.codebook_size == y.codebook_size);
    CHECK(x.aborted == y.aborted);
    CHECK(x.seed == y.seed);
    CHECK(same(x.eer.value, y.eer.value));
    CHECK(same(x.eer.ci_low, y.eer.ci_low));
    CHECK(same(x.eer.ci_high, y.eer.ci_high));
    CHECK(same(x.eer_group_a, y.eer_group_a));
    CHECK(same(x.eer_group_b, y.eer_group_b));
    CHECK(same(x.utility.value, y.utility.value));
    CHECK(same(x.utility.ci_low, y.utility.ci_low));
    CHECK(same(x.utility.ci_high, y.utility.ci_high));
    CHECK(same(x.perplexity, y.perplexity));
  }
}

}  // namespace

TEST_CASE("report files match the frozen golden copies") {
  const TradeoffReport r = fixed_report();
  CHECK(csv_of(r) == slurp(fs::path(VQANON_GOLDEN_DIR) / "report.csv"));
  CHECK(json_of(r) == slurp(fs::path(VQANON_GOLDEN_DIR) / "report.json"));
}

TEST_CASE("csv to json round trip keeps every value") {
  std::istringstream csv_in(csv_of(fixed_report()));
  const TradeoffReport from_csv = read_report_csv(csv_in);
  std::istringstream json_in(json_of(from_csv));
  const TradeoffReport from_json = read_report_json(json_in);
  check_same_rows(from_csv, from_json);
  CHECK(csv_of(from_json) == csv_of(fixed_report()));
  CHECK(from_json.rows[2].aborted);
}

TEST_CASE("emit_report") {
  TradeoffReport one;
  one.rows.push_back(fixed_report().rows[1]);
  const fs::path dir = scratch("emit");
  const auto paths = emit_report(one, dir, ReportFormat::kBoth);
  REQUIRE(paths.size() == 2);
  const std::string csv = slurp(paths[0]);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  CHECK(emit_report(one, dir, ReportFormat::kCsv).size() == 1);
  CHECK_THROWS_AS(emit_report(TradeoffReport{}, dir, ReportFormat::kCsv), ConfigError);
  std::ofstream(dir / "blocker") << "x";
  CHECK_THROWS_AS(emit_report(one, dir / "blocker" / "sub", ReportFormat::kCsv), IoError);
  fs::remove_all(dir);
}

TEST_CASE("row count and order") {
  ExperimentConfig c = small_config("sweep.codebook_sizes = 64\nsweep.include_no_vq_baseline = false\n");
  CHECK(run_sweep(c).rows.size() == 1);

  c = small_config("sweep.codebook_sizes = 32, 8, 32\n");
  const TradeoffReport r = run_sweep(c);
  REQUIRE(r.rows.size() == 3);
  CHECK(r.rows[0].label == "no_vq");
  CHECK(std::isnan(r.rows[0].perplexity));
  CHECK(r.rows[1].codebook_size == 8);
  CHECK(r.rows[2].codebook_size == 32);
  for (const auto& row : r.rows) {
    CHECK(!row.aborted);
    CHECK(row.eer.ci_low <= row.eer.value);
    CHECK(row.eer.value <= row.eer.ci_high);
    CHECK(row.utility.ci_low <= row.utility.value);
    CHECK(row.utility.value <= row.utility.ci_high);
    CHECK(row.seed == 5);
    if (row.codebook_size) {
      CHECK(row.perplexity >= 1.0);
      CHECK(row.perplexity <= static_cast<double>(row.codebook_size));
    }
  }
}

TEST_CASE("sweeps are deterministic, serial or parallel, and rows can be re-run alone") {
  const ExperimentConfig c = small_config("sweep.codebook_sizes = 8, 16\n");
  const TradeoffReport a = run_sweep(c);
  const TradeoffReport b = run_sweep(c, {.jobs = 3});
  CHECK(csv_of(a) == csv_of(b));
  CHECK(json_of(a) == json_of(b));

  const ExperimentConfig alone = small_config("sweep.codebook_sizes = 16\nsweep.include_no_vq_baseline = false\n");
  CHECK(csv_of(TradeoffReport{{a.rows[2]}}) == csv_of(run_sweep(alone)));
}

TEST_CASE("artifacts rebuild the report and reload the models") {
  const ExperimentConfig c = small_config("sweep.codebook_sizes = 8\n");
  const fs::path dir = scratch("artifacts");
  const TradeoffReport r = run_sweep(c, {.jobs = 1, .artifacts_dir = dir});
  const TradeoffReport again = report_from_artifacts(dir);
  CHECK(csv_of(again) == csv_of(r));
  CHECK(json_of(again) == json_of(r));

  const ExperimentData data = prepare_data(c);
  const TrainedModel m = load_model(dir / "v8");
  REQUIRE(m.codebook);
  CHECK(m.codebook->size() == 8);
  BootstrapConfig b = c.bootstrap;
  b.seed = c.bootstrap_seed(8);
  const TradeoffRow row = summarize_row(8, evaluate_model(m, data), c.seed, b);
  CHECK(csv_of(TradeoffReport{{row}}) == csv_of(TradeoffReport{{r.rows[1]}}));
  CHECK(!load_model(dir / "no_vq").codebook);
  CHECK(fs::exists(dir / "v8" / "curve.csv"));
  CHECK(fs::exists(dir / "v8" / "scores.csv"));
  CHECK_THROWS_AS(report_from_artifacts(dir / "missing"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("a diverging row is kept and marked") {
  const ExperimentConfig c = small_config("sweep.codebook_sizes = 8\ntrain.learning_rate = 1e6\n");
  const TradeoffReport r = run_sweep(c);
  REQUIRE(r.rows.size() == 2);
  for (const auto& row : r.rows) {
    CHECK(row.aborted);
    CHECK(!row.diagnostic.empty());
    CHECK(std::isnan(row.eer.value));
  }
  CHECK(csv_of(r).find("v8:aborted,8,nan") != std::string::npos);
}
