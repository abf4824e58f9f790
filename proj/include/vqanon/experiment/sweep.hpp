#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vqanon/experiment/config.hpp"

namespace vqanon {

// One row of the privacy/utility table. codebook_size is 0 for the unquantized
// baseline, whose perplexity is NaN.
struct TradeoffRow {
  std::string label;
  std::size_t codebook_size = 0;
  bool aborted = false;
  std::string diagnostic;
  MetricWithCI eer;
  double eer_group_a = 0.0;
  double eer_group_b = 0.0;
  MetricWithCI utility;
  double perplexity = 0.0;
  std::uint64_t seed = 0;
};

struct TradeoffReport {
  std::vector<TradeoffRow> rows;
};

std::string row_label(std::size_t codebook_size);  // "no_vq" or "v<V>"

// The corpus and the enroll/test protocol shared by every row.
struct ExperimentData {
  Dataset corpus;
  std::vector<FrameSequence> train;       // training roster
  Dataset evaluation;                     // evaluation roster
  EnrollTestSplit split;                  // of the evaluation roster
};

ExperimentData prepare_data(const ExperimentConfig& cfg);

// Raw per-row evaluation output, enough to rebuild a report row.
struct RowEvaluation {
  std::vector<ScoreRecord> scores;
  std::vector<UtteranceErrors> utility;
  double perplexity = 0.0;  // NaN without a codebook
};

RowEvaluation evaluate_model(const TrainedModel& model, const ExperimentData& data);

// Point values and bootstrap intervals for one row.
TradeoffRow summarize_row(std::size_t codebook_size, const RowEvaluation& eval,
                          std::uint64_t seed, const BootstrapConfig& bootstrap);

TrainConfig row_train_config(const ExperimentConfig& cfg, std::size_t codebook_size);

struct SweepOptions {
  std::size_t jobs = 1;
  // When set, models, curves, scores and per-utterance errors of every row
  // are written below this directory.
  std::optional<std::filesystem::path> artifacts_dir;
};

// Baseline first (if requested), then ascending distinct V. A row whose
// training diverges is kept, marked aborted, with NaN metrics.
TradeoffReport run_sweep(const ExperimentConfig& cfg, const SweepOptions& options = {});

void write_report_csv(const TradeoffReport& report, std::ostream& out);
void write_report_json(const TradeoffReport& report, std::ostream& out);
TradeoffReport read_report_csv(std::istream& in);
TradeoffReport read_report_json(std::istream& in);

// Writes report.csv and/or report.json into dir; returns the files written.
std::vector<std::filesystem::path> emit_report(const TradeoffReport& report,
                                               const std::filesystem::path& dir,
                                               ReportFormat format);

// Rebuilds the report from the raw artifacts a sweep left in `artifacts_dir`.
TradeoffReport report_from_artifacts(const std::filesystem::path& artifacts_dir);

void save_model(const TrainedModel& model, const std::filesystem::path& dir);
TrainedModel load_model(const std::filesystem::path& dir);

}  // namespace vqanon
