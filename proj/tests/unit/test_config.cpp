#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "vqanon/errors.hpp"
#include "vqanon/experiment/config.hpp"

using namespace vqanon;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.cfg");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("a seed-only config takes every default") {
  const ExperimentConfig c = parse("seed = 7\n");
  CHECK(c.seed == 7);
  CHECK(c.train.lambda_reg == 0.25);
  CHECK(c.train.ema_decay == 0.99);
  CHECK(c.train.ema_epsilon == 1e-5);
  CHECK(c.train.learning_rate == 0.05);
  CHECK(c.bootstrap.resamples == 1000);
  CHECK(c.bootstrap.alpha == 0.05);
  CHECK(c.codebook_sizes == std::vector<std::size_t>{16, 32, 64, 128, 256});
  CHECK(c.include_no_vq_baseline);
  CHECK(c.data.num_speakers == 40);
  CHECK(c.encoder.bottleneck_dim == 16);
  CHECK(c.encoder.input_dim == c.data.feature_dim);
  CHECK(c.data.seed == c.data_seed());
}

TEST_CASE("values, comments and lists") {
  const ExperimentConfig c = parse(
      "# sweep\n"
      "seed = 3   # trailing comment\n"
      "train.lambda_reg=0.5\n"
      "sweep.codebook_sizes = 8, 4,2\n"
      "sweep.include_no_vq_baseline = false\n"
      "encoder.hidden_dims = 16, 16\n"
      "data.feature_dim = 10\n"
      "output.format = json\n"
      "output.dir = results/run one\n"
      "train.codebook_update = gradient\n");
  CHECK(c.train.lambda_reg == 0.5);
  CHECK(c.codebook_sizes == std::vector<std::size_t>{8, 4, 2});
  CHECK(!c.include_no_vq_baseline);
  CHECK(c.encoder.hidden_dims == std::vector<std::size_t>{16, 16});
  CHECK(c.encoder.input_dim == 10);
  CHECK(c.format == ReportFormat::kJson);
  CHECK(c.output_dir == "results/run one");
  CHECK(c.train.codebook_update == CodebookUpdate::kGradient);
}

TEST_CASE("errors name what is wrong") {
  CHECK(contains(error_of("train.lamda = 0.3\n"), "lamda"));
  CHECK(contains(error_of("seed 3\n"), "malformed"));
  CHECK(contains(error_of("seed = 1\nseed = 2\n"), "already set"));
  CHECK(contains(error_of("train.epochs = many\n"), "train.epochs"));
  CHECK(contains(error_of("train.vq_enabled = perhaps\n"), "train.vq_enabled"));
  CHECK(contains(error_of("train.lambda_reg = -1\n"), "train.lambda_reg"));
  CHECK(contains(error_of("train.ema_decay = 1.5\n"), "train.ema_decay"));
  CHECK(contains(error_of("bootstrap.alpha = 0\n"), "bootstrap.alpha"));
  CHECK(contains(error_of("sweep.codebook_sizes =\nsweep.include_no_vq_baseline = false\n"),
                 "sweep.codebook_sizes"));
  CHECK(contains(error_of("eval.enroll_frames = 5000\n"), "eval.enroll_frames"));
  CHECK(contains(error_of("output.format = xml\n"), "xml"));
  CHECK(contains(error_of("encoder.subsample_after = 9\n"), "encoder.subsample_after"));
  CHECK(contains(error_of("seed = 1\n= 3\n"), "test.cfg:2"));
  CHECK_THROWS_AS(parse_config(std::filesystem::path("/nonexistent/vqanon.cfg")), ConfigError);
}

TEST_CASE("dump and parse reach a fixpoint") {
  const ExperimentConfig c = parse(
      "seed = 11\ntrain.learning_rate = 0.0123456789\nsweep.codebook_sizes = 4, 9\n"
      "data.noise_sigma = 0.3\nbootstrap.resamples = 50\n");
  std::ostringstream first;
  dump_config(c, first);
  std::istringstream in(first.str());
  const ExperimentConfig back = parse_config(in);
  CHECK(back == c);
  std::ostringstream second;
  dump_config(back, second);
  CHECK(second.str() == first.str());

  // Every key appears once, in canonical order.
  std::istringstream lines(first.str());
  std::string line;
  std::size_t i = 0;
  while (std::getline(lines, line)) {
    REQUIRE(i < config_keys().size());
    CHECK(line.rfind(config_keys()[i] + " = ", 0) == 0);
    ++i;
  }
  CHECK(i == config_keys().size());
}

TEST_CASE("derived seeds") {
  ExperimentConfig a, b;
  a.seed = 1;
  b.seed = 2;
  CHECK(a.train_seed(16) != a.train_seed(64));
  CHECK(a.train_seed(16) != b.train_seed(16));
  CHECK(a.bootstrap_seed(16) != a.train_seed(16));
  CHECK(a.data_seed() == ExperimentConfig{}.data_seed());
  CHECK(parse_format(format_name(ReportFormat::kCsv)) == ReportFormat::kCsv);
}
