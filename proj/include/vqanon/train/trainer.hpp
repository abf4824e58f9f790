#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "vqanon/data/synth.hpp"
#include "vqanon/encoder/encoder.hpp"
#include "vqanon/vq/codebook.hpp"

namespace vqanon {

enum class CodebookUpdate { kEma, kGradient };

struct TrainConfig {
  double lambda_reg = 0.25;
  std::size_t codebook_size = 64;
  double learning_rate = 0.05;
  std::size_t batch_size = 8;  // utterances
  std::size_t epochs = 30;
  bool vq_enabled = true;
  std::uint64_t seed = 1;
  double ema_decay = Codebook::kDefaultDecay;
  double ema_epsilon = Codebook::kDefaultSmoothing;
  CodebookUpdate codebook_update = CodebookUpdate::kEma;
  bool restart_dead = true;
  std::size_t restart_threshold = 50;  // batches
  // Test hook: run the quantized code path with an identity quantizer and the
  // auxiliary losses pinned to zero.
  bool identity_quantizer = false;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double utility_loss = 0.0;
  double vq_loss = 0.0;
  double reg_loss = 0.0;
  double combined_loss = 0.0;
  double perplexity = 0.0;  // 0 when no codebook is in use
};

struct TrainedModel {
  EncoderConfig encoder;
  EncoderParams params;
  std::optional<Codebook> codebook;  // present iff VQ was enabled
  std::vector<EpochRecord> curve;
};

struct UtilityLoss {
  double loss = 0.0;
  Matrix grad;  // d loss / d logits
};

// Mean negative log-softmax of the true class over frames; gradient is
// (softmax - onehot) / J. Throws LabelError for labels >= P.
UtilityLoss utility_loss(const Matrix& logits, std::span<const std::size_t> labels);

// l_utility + l_vq + lambda_reg * l_reg. Throws NumericError on non-finite
// input and ConfigError for negative lambda_reg.
double combined_loss(double l_utility, double l_vq, double l_reg, double lambda_reg);

// Content labels at bottleneck rate: every subsample_factor-th frame label.
std::vector<std::size_t> subsample_labels(std::span<const std::size_t> labels,
                                          std::size_t factor);

struct StepLosses {
  double utility = 0.0;
  double vq = 0.0;
  double reg = 0.0;
  double combined = 0.0;
  std::vector<std::size_t> indices;  // batch assignments, empty without VQ
};

// One SGD step on encoder and head over d(L_utility + lambda L_reg)/dparams,
// then the codebook update (EMA, or the gradient ablation) and dead-prototype
// restarts. `restart_rng` only feeds restarts.
StepLosses train_step(std::span<const FrameSequence> batch, TrainedModel& model,
                      const TrainConfig& cfg, RngStream& restart_rng);

// Fresh parameters from the seed, codebook initialised from warm-up
// bottleneck frames, then `epochs` passes of seeded shuffled mini-batches.
// Throws NumericError if the loss stops being finite.
TrainedModel fit(std::span<const FrameSequence> utterances,
                 const EncoderConfig& encoder, const TrainConfig& cfg);

void write_curve_csv(std::span<const EpochRecord> curve, std::ostream& out);

}  // namespace vqanon
