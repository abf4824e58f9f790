#include "vqanon/experiment/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "vqanon/errors.hpp"
#include "vqanon/io/text.hpp"

namespace vqanon {

namespace {

struct KeyHandler {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::size_t as_count(const std::string& v, const std::string& key) {
  try {
    return io::parse_count(v, key);
  } catch (const FormatError&) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

double as_real(const std::string& v, const std::string& key) {
  try {
    return io::parse_double(v, key);
  } catch (const FormatError&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

bool as_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::size_t> as_counts(const std::string& v, const std::string& key) {
  std::vector<std::size_t> out;
  if (io::trim(v).empty()) return out;
  for (const auto& part : io::split(v, ',')) out.push_back(as_count(std::string(io::trim(part)), key));
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s;
}

std::string boolean(bool b) { return b ? "true" : "false"; }

#define VQ_COUNT(KEY, FIELD)                                                       \
  KeyHandler {                                                                     \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = as_count(v, KEY); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }          \
  }
#define VQ_REAL(KEY, FIELD)                                                        \
  KeyHandler {                                                                     \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = as_real(v, KEY); }, \
        [](const ExperimentConfig& c) { return io::exact(c.FIELD); }               \
  }
#define VQ_BOOL(KEY, FIELD)                                                        \
  KeyHandler {                                                                     \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.FIELD = as_bool(v, KEY); }, \
        [](const ExperimentConfig& c) { return boolean(c.FIELD); }                 \
  }

const std::vector<KeyHandler>& handlers() {
  static const std::vector<KeyHandler> table{
      VQ_COUNT("seed", seed),
      VQ_COUNT("data.num_speakers", data.num_speakers),
      VQ_COUNT("data.num_train_speakers", data.num_train_speakers),
      VQ_COUNT("data.num_content_classes", data.num_content_classes),
      VQ_COUNT("data.feature_dim", data.feature_dim),
      VQ_COUNT("data.utterances_per_speaker", data.utterances_per_speaker),
      VQ_COUNT("data.frames_per_utterance", data.frames_per_utterance),
      VQ_REAL("data.speaker_strength", data.speaker_strength),
      VQ_REAL("data.noise_sigma", data.noise_sigma),
      VQ_REAL("data.mean_segment_length", data.mean_segment_length),
      KeyHandler{"encoder.hidden_dims",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.encoder.hidden_dims = as_counts(v, "encoder.hidden_dims");
                 },
                 [](const ExperimentConfig& c) { return join(c.encoder.hidden_dims); }},
      VQ_COUNT("encoder.bottleneck_dim", encoder.bottleneck_dim),
      VQ_COUNT("encoder.context", encoder.context),
      VQ_COUNT("encoder.subsample_factor", encoder.subsample_factor),
      VQ_COUNT("encoder.subsample_after", encoder.subsample_after),
      VQ_REAL("train.lambda_reg", train.lambda_reg),
      VQ_COUNT("train.codebook_size", train.codebook_size),
      VQ_REAL("train.learning_rate", train.learning_rate),
      VQ_COUNT("train.batch_size", train.batch_size),
      VQ_COUNT("train.epochs", train.epochs),
      VQ_BOOL("train.vq_enabled", train.vq_enabled),
      VQ_REAL("train.ema_decay", train.ema_decay),
      VQ_REAL("train.ema_epsilon", train.ema_epsilon),
      KeyHandler{"train.codebook_update",
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v == "ema") {
                     c.train.codebook_update = CodebookUpdate::kEma;
                   } else if (v == "gradient") {
                     c.train.codebook_update = CodebookUpdate::kGradient;
                   } else {
                     throw ConfigError("key 'train.codebook_update': expected ema or gradient, got '" +
                                       v + "'");
                   }
                 },
                 [](const ExperimentConfig& c) {
                   return std::string(c.train.codebook_update == CodebookUpdate::kEma ? "ema"
                                                                                       : "gradient");
                 }},
      VQ_BOOL("train.restart_dead", train.restart_dead),
      VQ_COUNT("train.restart_threshold", train.restart_threshold),
      KeyHandler{"sweep.codebook_sizes",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.codebook_sizes = as_counts(v, "sweep.codebook_sizes");
                 },
                 [](const ExperimentConfig& c) { return join(c.codebook_sizes); }},
      VQ_BOOL("sweep.include_no_vq_baseline", include_no_vq_baseline),
      VQ_COUNT("eval.enroll_frames", enroll_frames),
      VQ_COUNT("bootstrap.resamples", bootstrap.resamples),
      VQ_REAL("bootstrap.alpha", bootstrap.alpha),
      KeyHandler{"output.dir",
                 [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
                 [](const ExperimentConfig& c) { return c.output_dir.string(); }},
      KeyHandler{"output.format",
                 [](ExperimentConfig& c, const std::string& v) {
                   try {
                     c.format = parse_format(v);
                   } catch (const ConfigError&) {
                     throw ConfigError("key 'output.format': expected csv, json or both, got '" +
                                       v + "'");
                   }
                 },
                 [](const ExperimentConfig& c) { return format_name(c.format); }},
  };
  return table;
}

#undef VQ_COUNT
#undef VQ_REAL
#undef VQ_BOOL

}  // namespace

void ExperimentConfig::finalize() {
  data.seed = data_seed();
  data.validate();
  encoder.input_dim = data.feature_dim;
  encoder.num_content_classes = data.num_content_classes;
  encoder.validate();
  train.validate();
  bootstrap.validate();
  if (codebook_sizes.empty() && !include_no_vq_baseline) {
    throw ConfigError("sweep.codebook_sizes is empty and the baseline is disabled");
  }
  for (std::size_t v : codebook_sizes)
    if (v == 0) throw ConfigError("sweep.codebook_sizes entries must be >= 1");
  if (enroll_frames == 0) throw ConfigError("eval.enroll_frames must be >= 1");
  if (enroll_frames >= data.utterances_per_speaker * data.frames_per_utterance) {
    throw ConfigError("eval.enroll_frames leaves no test utterance per speaker");
  }
  if (data.num_train_speakers == 0) {
    throw ConfigError("data.num_train_speakers must be >= 1 (training and evaluation rosters are disjoint)");
  }
}

std::uint64_t ExperimentConfig::data_seed() const { return RngStream(seed).child("data").seed(); }

std::uint64_t ExperimentConfig::train_seed(std::size_t codebook_size) const {
  return RngStream(seed).child("train", codebook_size).seed();
}

std::uint64_t ExperimentConfig::bootstrap_seed(std::size_t codebook_size) const {
  return RngStream(seed).child("bootstrap", codebook_size).seed();
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  std::map<std::string, const KeyHandler*> by_key;
  for (const auto& h : handlers()) by_key[h.key] = &h;

  ExperimentConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = line;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = io::trim(body);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = source + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) {
      throw ConfigError(where + ": malformed line, expected 'key = value': '" + line + "'");
    }
    const std::string key(io::trim(body.substr(0, eq)));
    const std::string value(io::trim(body.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where + ": missing key before '='");
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError(where + ": unknown key '" + key + "'");
    if (const auto prev = seen.find(key); prev != seen.end()) {
      throw ConfigError(where + ": key '" + key + "' already set on line " +
                        std::to_string(prev->second));
    }
    seen[key] = line_no;
    it->second->set(cfg, value);
  }
  cfg.finalize();
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file '" + path.string() + "' cannot be opened");
  return parse_config(in, path.string());
}

void dump_config(const ExperimentConfig& cfg, std::ostream& out) {
  for (const auto& h : handlers()) out << h.key << " = " << h.get(cfg) << '\n';
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& h : handlers()) k.push_back(h.key);
    return k;
  }();
  return keys;
}

std::string format_name(ReportFormat f) {
  switch (f) {
    case ReportFormat::kCsv:
      return "csv";
    case ReportFormat::kJson:
      return "json";
    case ReportFormat::kBoth:
      return "both";
  }
  return "both";
}

ReportFormat parse_format(const std::string& s) {
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "json") return ReportFormat::kJson;
  if (s == "both") return ReportFormat::kBoth;
  throw ConfigError("unknown report format '" + s + "' (expected csv, json or both)");
}

}  // namespace vqanon
