#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "vqanon/data/synth.hpp"
#include "vqanon/numerics/rng.hpp"
#include "vqanon/train/trainer.hpp"

namespace vqanon {

struct PooledEmbedding {
  std::vector<double> vector;  // unit length, or all zeros
  bool zero = false;           // mean was the zero vector
};

// Frame mean, L2-normalised. Throws EmptyInputError for zero frames.
PooledEmbedding pool_embedding(const Matrix& frames);

// Frames that leave the device: q(s) when the model has a codebook, else h(s).
Matrix released_representation(const TrainedModel& model, const Matrix& features);

struct Trial {
  std::size_t test_utterance = 0;  // index into TrialSet::test_embeddings
  std::size_t claimed_speaker = 0;
  bool is_target = false;
  SpeakerGroup test_group = SpeakerGroup::kA;
  SpeakerGroup claimed_group = SpeakerGroup::kA;
};

struct TrialSet {
  std::vector<std::size_t> enrolled_speakers;
  std::vector<PooledEmbedding> enroll_embeddings;  // parallel to enrolled_speakers
  std::vector<std::size_t> test_utterance_ids;
  std::vector<PooledEmbedding> test_embeddings;
  std::vector<Trial> trials;

  const PooledEmbedding& enrollment(std::size_t speaker) const;
};

// Enrollment embedding = pool of each speaker's concatenated enrollment
// frames. Every (test utterance, enrolled speaker) pair is one trial, a target
// iff the speakers match. Throws ProtocolError for a test speaker without
// enrollment or overlapping enroll/test utterances.
TrialSet build_trials(const TrainedModel& model, const Dataset& roster,
                      std::span<const FrameSequence> enroll,
                      std::span<const FrameSequence> test);

// Same protocol from precomputed per-utterance released frames.
TrialSet build_trials_from_frames(const Dataset& roster,
                                  std::span<const FrameSequence> enroll,
                                  std::span<const Matrix> enroll_frames,
                                  std::span<const FrameSequence> test,
                                  std::span<const Matrix> test_frames);

struct TrialScores {
  std::vector<double> scores;  // parallel to TrialSet::trials
  std::size_t zero_embedding_trials = 0;

  std::vector<double> target_scores(const TrialSet& ts) const;
  std::vector<double> impostor_scores(const TrialSet& ts) const;
};

// Cosine similarity per trial; 0 (and counted) when either side is zero.
TrialScores score_trials(const TrialSet& ts);

// Rate where false rejection equals false acceptance. Operating points are
// "accept iff score >= threshold" for every distinct score plus +inf; the
// crossing of FRR - FAR between adjacent points is linearly interpolated.
double compute_eer(std::span<const double> target_scores,
                   std::span<const double> impostor_scores);

struct MetricWithCI {
  double value = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t num_resamples = 0;
};

struct BootstrapConfig {
  std::size_t resamples = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 1;

  void validate() const;

  friend bool operator==(const BootstrapConfig&, const BootstrapConfig&) = default;
};

// Linear-interpolated quantile of sorted values (q in [0, 1]).
double percentile(std::span<const double> sorted, double q);

// Percentile interval [alpha/2, 1 - alpha/2] over `resamples` statistics. The
// interval is widened to include `value` when the resampling distribution
// does not straddle it.
MetricWithCI percentile_interval(double value, std::vector<double> stats,
                                 double alpha);

// Resample b draws sample_size indices uniformly with replacement from a
// child stream (seed, "bootstrap", b); the metric sees those indices.
MetricWithCI bootstrap_ci(
    std::size_t sample_size,
    const std::function<double(std::span<const std::size_t>)>& metric,
    const BootstrapConfig& cfg);

// Trial-level bootstrap of the EER. Targets and impostors are resampled
// separately within each child stream (targets first) so every resample keeps
// both classes.
MetricWithCI bootstrap_eer(std::span<const double> target_scores,
                           std::span<const double> impostor_scores,
                           const BootstrapConfig& cfg);

struct UtteranceErrors {
  std::size_t utterance_id = 0;
  std::size_t errors = 0;
  std::size_t frames = 0;
};

// Argmax head class (lowest index on ties) vs the bottleneck-rate label.
std::vector<UtteranceErrors> utility_errors(const TrainedModel& model,
                                            std::span<const FrameSequence> seqs);

// Pooled frame error rate over all utterances.
double utility_error(std::span<const UtteranceErrors> per_utterance);
double utility_error(const TrainedModel& model, std::span<const FrameSequence> seqs);

// Utterance-level bootstrap of the pooled frame error.
MetricWithCI bootstrap_utility(std::span<const UtteranceErrors> per_utterance,
                               const BootstrapConfig& cfg);

// 'A' or 'B' when test and claimed speakers share that group, 'X' otherwise.
char trial_group(const Trial& t);

struct ScoreRecord {
  std::size_t trial_id = 0;
  std::size_t claimed_speaker = 0;
  bool is_target = false;
  char group = 'X';
  double score = 0.0;

  friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

std::vector<ScoreRecord> score_records(const TrialSet& ts, const TrialScores& scores);

// EER over all records.
double pooled_eer(std::span<const ScoreRecord> records);

// EER over the within-group trials of `group` ('A' or 'B'). NaN when that
// group has no target or no impostor trial.
double group_eer(std::span<const ScoreRecord> records, char group);

MetricWithCI bootstrap_eer(std::span<const ScoreRecord> records,
                           const BootstrapConfig& cfg);

// trial_id,claimed_speaker,is_target,group,score
void write_scores_csv(std::span<const ScoreRecord> records, std::ostream& out);
std::vector<ScoreRecord> read_scores_csv(std::istream& in);

void write_utility_csv(std::span<const UtteranceErrors> rows, std::ostream& out);
std::vector<UtteranceErrors> read_utility_csv(std::istream& in);

}  // namespace vqanon
