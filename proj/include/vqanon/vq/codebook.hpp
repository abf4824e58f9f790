#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "vqanon/numerics/matrix.hpp"
#include "vqanon/numerics/rng.hpp"

namespace vqanon {

// J x D bottleneck frames h(s), one row per subsampled time step.
using BottleneckSequence = Matrix;

// Learnable dictionary of V prototypes in R^D plus the exponential moving
// average state that maintains them.
//
// With EMA active, prototype i equals ema_sums[i] / smoothed_count(i) after
// every ema_update. The optimizer never writes prototypes on that path.
class Codebook {
 public:
  static constexpr double kDefaultDecay = 0.99;
  static constexpr double kDefaultSmoothing = 1e-5;

  // EMA state starts at counts = 1, sums = prototypes.
  explicit Codebook(Matrix prototypes, double decay = kDefaultDecay,
                    double smoothing = kDefaultSmoothing);

  // Restores a full snapshot; validates shapes and ranges.
  Codebook(Matrix prototypes, std::vector<double> ema_counts, Matrix ema_sums,
           double decay, double smoothing);

  std::size_t size() const { return prototypes_.rows(); }
  std::size_t dim() const { return prototypes_.cols(); }
  double decay() const { return decay_; }
  double smoothing() const { return smoothing_; }

  const Matrix& prototypes() const { return prototypes_; }
  std::span<const double> prototype(std::size_t i) const { return prototypes_.row(i); }
  std::span<const double> squared_norms() const { return norms_; }
  std::span<const double> ema_counts() const { return ema_counts_; }
  const Matrix& ema_sums() const { return ema_sums_; }
  // Batches since each prototype was last selected.
  std::span<const std::size_t> staleness() const { return staleness_; }

  // Laplace-smoothed count (N_i + eps) / (sum N + V eps) * sum N.
  double smoothed_count(std::size_t i) const;

  // Gradient-path ablation only: prototypes -= step * grad.
  void apply_gradient(const Matrix& grad, double step);

  // Compares dictionary and EMA state; staleness bookkeeping is ignored.
  friend bool operator==(const Codebook& a, const Codebook& b) {
    return a.prototypes_ == b.prototypes_ && a.ema_counts_ == b.ema_counts_ &&
           a.ema_sums_ == b.ema_sums_ && a.decay_ == b.decay_ &&
           a.smoothing_ == b.smoothing_;
  }

 private:
  friend void ema_update(Codebook&, const BottleneckSequence&,
                         std::span<const std::size_t>);
  friend std::vector<std::size_t> restart_dead_prototypes(
      Codebook&, const BottleneckSequence&, std::span<const std::size_t>,
      RngStream&, std::size_t);
  friend Codebook load_codebook(std::istream&);

  void refresh_norms();
  void refresh_norm(std::size_t i);

  Matrix prototypes_;
  std::vector<double> ema_counts_;
  Matrix ema_sums_;
  double decay_;
  double smoothing_;
  std::vector<double> norms_;
  std::vector<std::size_t> staleness_;
};

struct QuantizationResult {
  std::vector<std::size_t> indices;
  Matrix quantized;
  double codebook_loss = 0.0;
  double commitment_loss = 0.0;
};

// Nearest prototype per frame in squared Euclidean distance, lowest index on
// ties. Candidates are screened with ||h||^2 - 2 h.e + ||e||^2 and the
// near-minimal ones re-ranked by the direct difference form, so the result is
// the same argmin a naive scan produces.
QuantizationResult quantize(const BottleneckSequence& h, const Codebook& cb);

// (1/J) sum_j ||h_j - q_j||^2. Value of the codebook term; its gradient flows
// to prototypes only.
double codebook_loss(const BottleneckSequence& h, const Matrix& q);

// d codebook_loss / d e_i = (2/J) sum_{j: idx_j = i} (e_i - h_j).
Matrix codebook_loss_prototype_grad(const BottleneckSequence& h,
                                    std::span<const std::size_t> indices,
                                    const Codebook& cb);

// Same value as codebook_loss; gradient flows to h only.
double commitment_loss(const BottleneckSequence& h, const Matrix& q);

// (2/J)(h_j - q_j).
Matrix commitment_loss_grad(const BottleneckSequence& h, const Matrix& q);

// Straight-through estimator: dL/dh is taken to be dL/dq.
inline Matrix ste_backward(const Matrix& grad_wrt_q) { return grad_wrt_q; }

// N_i <- g N_i + (1-g) n_i ; m_i <- g m_i + (1-g) sum_{j: idx_j=i} h_j ;
// e_i <- m_i / smoothed_count(i). decay == 1 is an exact no-op.
void ema_update(Codebook& cb, const BottleneckSequence& h,
                std::span<const std::size_t> indices);

// V distinct rows of samples, drawn without replacement.
Codebook init_codebook(const Matrix& samples, std::size_t codebook_size,
                       RngStream& rng, double decay = Codebook::kDefaultDecay,
                       double smoothing = Codebook::kDefaultSmoothing);

// Updates staleness from this batch's assignments, then replaces every
// prototype unselected for stale_threshold consecutive batches with a
// distinct random frame of h (EMA state reset to N = 1, m = frame).
// Returns the replaced prototype ids.
std::vector<std::size_t> restart_dead_prototypes(
    Codebook& cb, const BottleneckSequence& h,
    std::span<const std::size_t> indices, RngStream& rng,
    std::size_t stale_threshold);

// Convenience form that computes the assignments with quantize().
std::vector<std::size_t> restart_dead_prototypes(Codebook& cb,
                                                 const BottleneckSequence& h,
                                                 RngStream& rng,
                                                 std::size_t stale_threshold);

// exp(entropy) of the empirical usage distribution, in [1, V].
double codebook_perplexity(std::span<const std::size_t> indices,
                           std::size_t codebook_size);

void save_codebook(const Codebook& cb, std::ostream& out);
Codebook load_codebook(std::istream& in);

}  // namespace vqanon
