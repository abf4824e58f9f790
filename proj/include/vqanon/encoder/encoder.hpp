#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "vqanon/numerics/matrix.hpp"
#include "vqanon/numerics/rng.hpp"
#include "vqanon/vq/codebook.hpp"

namespace vqanon {

// Stacked temporal-context layers with ReLU, strided subsampling after
// `subsample_after` of them, then a linear bottleneck projection to D dims.
// A separate affine head maps (quantized) bottleneck frames to P class logits.
struct EncoderConfig {
  std::size_t input_dim = 24;
  std::vector<std::size_t> hidden_dims{64, 64, 64};
  std::size_t bottleneck_dim = 16;
  std::size_t context = 1;  // frames of left and right context per temporal layer
  std::size_t subsample_factor = 3;
  std::size_t subsample_after = 2;  // number of temporal layers before the stride
  std::size_t num_content_classes = 20;

  // Throws ConfigError on any invariant violation.
  void validate() const;

  // Smallest input length accepted by encode().
  std::size_t min_input_frames() const { return 2 * context + 1; }

  // ceil(T / subsample_factor).
  std::size_t output_frames(std::size_t input_frames) const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct AffineLayer {
  Matrix weight;  // fan_in x fan_out
  std::vector<double> bias;

  friend bool operator==(const AffineLayer&, const AffineLayer&) = default;
};

// Temporal layers first, bottleneck projection last, head separately.
// Gradients use the same type.
struct EncoderParams {
  std::vector<AffineLayer> layers;
  AffineLayer head;

  std::size_t parameter_count() const;
  bool all_finite() const;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

using EncoderGrads = EncoderParams;

// He-style gaussian init for ReLU layers, 1/sqrt(fan_in) for the linear
// bottleneck and head; zero biases.
EncoderParams init_params(const EncoderConfig& cfg, RngStream& rng);

EncoderParams zeros_like(const EncoderParams& p);

// p += scale * g
void add_scaled(EncoderParams& p, const EncoderGrads& g, double scale);

std::vector<double> flatten(const EncoderParams& p);
// Inverse of flatten, using `shape` for layout.
EncoderParams unflatten(const EncoderParams& shape, std::span<const double> values);

// Per-layer state retained by encode() for backward().
struct LayerCache {
  std::size_t input_frames = 0;
  std::size_t context = 0;
  std::size_t subsample_factor = 1;
  std::size_t subsample_after = 0;
  std::vector<Matrix> inputs;  // spliced layer inputs (bottleneck: unspliced)
  std::vector<Matrix> pre_activations;
  std::vector<std::size_t> frames_before_subsample;
};

struct EncodeResult {
  BottleneckSequence bottleneck;
  LayerCache cache;
};

// Throws ShapeError on a feature-dim mismatch and EmptyInputError when T is
// below min_input_frames().
EncodeResult encode(const Matrix& frames, const EncoderParams& params,
                    const EncoderConfig& cfg);

// Affine per frame, no softmax.
Matrix head_logits(const Matrix& bottleneck, const EncoderParams& params);

struct BackwardOptions {
  // When false the head gradient is not routed back through the
  // straight-through path into the encoder (test hook).
  bool through_head = true;
};

// Exact gradients of a scalar loss given its upstream gradients:
//   grad_bottleneck  dL/dh from terms that see h directly (commitment)
//   grad_logits      dL/dlogits for logits = head(head_input)
// head_input is q (or h when unquantized); its gradient reaches h through the
// straight-through estimator. Throws CacheError if the cache does not match
// params or the upstream shapes.
EncoderGrads backward(const Matrix& grad_bottleneck, const Matrix& grad_logits,
                      const Matrix& head_input, const LayerCache& cache,
                      const EncoderParams& params,
                      const BackwardOptions& options = {});

void save_params(const EncoderConfig& cfg, const EncoderParams& params,
                 std::ostream& out);

struct EncoderSnapshot {
  EncoderConfig config;
  EncoderParams params;
};

EncoderSnapshot load_params(std::istream& in);

}  // namespace vqanon
