#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vqanon/data/synth.hpp"
#include "vqanon/encoder/encoder.hpp"
#include "vqanon/eval/metrics.hpp"
#include "vqanon/train/trainer.hpp"

namespace vqanon {

enum class ReportFormat { kCsv, kJson, kBoth };

// Everything a sweep needs. Flat text form, one `section.key = value` per
// line, '#' starts a comment:
//
//   seed = 7
//   train.lambda_reg = 0.25
//   sweep.codebook_sizes = 16, 64, 256
struct ExperimentConfig {
  std::uint64_t seed = 1;
  DatasetSpec data;
  EncoderConfig encoder;
  TrainConfig train;
  std::vector<std::size_t> codebook_sizes{16, 32, 64, 128, 256};
  bool include_no_vq_baseline = true;
  std::size_t enroll_frames = 240;  // per speaker
  BootstrapConfig bootstrap;
  std::filesystem::path output_dir = "out";
  ReportFormat format = ReportFormat::kBoth;

  // Copies the data shape into the encoder and validates every section.
  void finalize();

  // Derived seeds. Each component draws from (seed, name, index) so a row
  // re-run alone matches the same row inside a full sweep.
  std::uint64_t data_seed() const;
  std::uint64_t train_seed(std::size_t codebook_size) const;
  std::uint64_t bootstrap_seed(std::size_t codebook_size) const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Throws ConfigError with a message naming the file, line or key at fault.
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig parse_config(const std::filesystem::path& path);

// Every key, canonical order; parse_config(dump_config(c)) == c.
void dump_config(const ExperimentConfig& cfg, std::ostream& out);

// Known keys in canonical order.
const std::vector<std::string>& config_keys();

std::string format_name(ReportFormat f);
ReportFormat parse_format(const std::string& s);

}  // namespace vqanon
