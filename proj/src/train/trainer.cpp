#include "vqanon/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "vqanon/errors.hpp"
#include "vqanon/io/text.hpp"
#include "vqanon/simd/kernels.hpp"

namespace vqanon {

void TrainConfig::validate() const {
  if (!(lambda_reg >= 0.0) || !std::isfinite(lambda_reg)) {
    throw ConfigError("train.lambda_reg must be finite and >= 0");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train.learning_rate must be finite and >= 0");
  }
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (vq_enabled && codebook_size == 0) throw ConfigError("train.codebook_size must be >= 1");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) {
    throw ConfigError("train.ema_decay must lie in [0, 1]");
  }
  if (!(ema_epsilon > 0.0)) throw ConfigError("train.ema_epsilon must be > 0");
  if (restart_dead && restart_threshold == 0) {
    throw ConfigError("train.restart_threshold must be >= 1");
  }
}

UtilityLoss utility_loss(const Matrix& logits, std::span<const std::size_t> labels) {
  if (logits.rows() != labels.size()) {
    throw ShapeError("utility_loss: " + std::to_string(logits.rows()) + " frames vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (logits.rows() == 0) throw EmptyInputError("utility_loss: no frames");
  const std::size_t p = logits.cols();
  const double inv_j = 1.0 / static_cast<double>(logits.rows());
  UtilityLoss out{0.0, Matrix(logits.rows(), p)};
  for (std::size_t j = 0; j < logits.rows(); ++j) {
    if (labels[j] >= p) {
      throw LabelError("utility_loss: label " + std::to_string(labels[j]) +
                       " out of range for " + std::to_string(p) + " classes");
    }
    const auto z = logits.row(j);
    const double zmax = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - zmax);
    const double log_denom = std::log(denom);
    out.loss += (zmax + log_denom - z[labels[j]]) * inv_j;
    auto g = out.grad.row(j);
    for (std::size_t c = 0; c < p; ++c) g[c] = std::exp(z[c] - zmax - log_denom) * inv_j;
    g[labels[j]] -= inv_j;
  }
  return out;
}

double combined_loss(double l_utility, double l_vq, double l_reg, double lambda_reg) {
  if (!std::isfinite(l_utility) || !std::isfinite(l_vq) || !std::isfinite(l_reg) ||
      !std::isfinite(lambda_reg)) {
    throw NumericError("combined_loss: non-finite component");
  }
  if (lambda_reg < 0.0) throw ConfigError("combined_loss: lambda_reg must be >= 0");
  return l_utility + l_vq + lambda_reg * l_reg;
}

std::vector<std::size_t> subsample_labels(std::span<const std::size_t> labels,
                                          std::size_t factor) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < labels.size(); t += factor) out.push_back(labels[t]);
  return out;
}

StepLosses train_step(std::span<const FrameSequence> batch, TrainedModel& model,
                      const TrainConfig& cfg, RngStream& restart_rng) {
  if (batch.empty()) throw EmptyInputError("train_step: empty batch");
  const bool quantized = cfg.vq_enabled && !cfg.identity_quantizer;
  if (quantized && !model.codebook) {
    throw ConfigError("train_step: VQ enabled but the model has no codebook");
  }
  const EncoderConfig& ecfg = model.encoder;

  std::size_t total_frames = 0;
  for (const auto& u : batch) total_frames += ecfg.output_frames(u.frames());

  StepLosses losses;
  EncoderGrads grads = zeros_like(model.params);
  std::vector<Matrix> batch_h;
  std::optional<Matrix> proto_grad;
  if (quantized && cfg.codebook_update == CodebookUpdate::kGradient) {
    proto_grad = Matrix(model.codebook->size(), model.codebook->dim());
  }

  for (const auto& u : batch) {
    EncodeResult enc = encode(u.features, model.params, ecfg);
    const auto labels = subsample_labels(u.labels, ecfg.subsample_factor);
    const double weight = static_cast<double>(enc.bottleneck.rows()) /
                          static_cast<double>(total_frames);

    Matrix head_input;
    Matrix grad_b;
    if (quantized) {
      QuantizationResult qr = quantize(enc.bottleneck, *model.codebook);
      losses.vq += weight * qr.codebook_loss;
      losses.reg += weight * qr.commitment_loss;
      grad_b = commitment_loss_grad(enc.bottleneck, qr.quantized);
      for (auto& v : grad_b.values()) v *= weight * cfg.lambda_reg;
      if (proto_grad) {
        const Matrix g = codebook_loss_prototype_grad(enc.bottleneck, qr.indices,
                                                      *model.codebook);
        simd::active().axpy(weight, g.values().data(), proto_grad->values().data(),
                            g.size());
      }
      losses.indices.insert(losses.indices.end(), qr.indices.begin(), qr.indices.end());
      head_input = std::move(qr.quantized);
    } else if (cfg.vq_enabled) {
      // identity quantizer: q = h, both auxiliary terms exactly zero
      head_input = enc.bottleneck;
      grad_b = Matrix(enc.bottleneck.rows(), enc.bottleneck.cols());
    } else {
      head_input = enc.bottleneck;
    }

    const Matrix logits = head_logits(head_input, model.params);
    UtilityLoss ul = utility_loss(logits, labels);
    losses.utility += weight * ul.loss;
    for (auto& v : ul.grad.values()) v *= weight;

    const EncoderGrads g = backward(grad_b, ul.grad, head_input, enc.cache, model.params);
    add_scaled(grads, g, 1.0);
    if (quantized) batch_h.push_back(std::move(enc.bottleneck));
  }
  losses.combined = combined_loss(losses.utility, losses.vq, losses.reg, cfg.lambda_reg);

  add_scaled(model.params, grads, -cfg.learning_rate);
  if (!model.params.all_finite()) throw NumericError("train_step: parameters diverged");

  if (quantized) {
    const Matrix h = vstack(batch_h);
    Codebook& cb = *model.codebook;
    if (proto_grad) {
      cb.apply_gradient(*proto_grad, cfg.learning_rate);
    } else {
      ema_update(cb, h, losses.indices);
    }
    if (cfg.restart_dead) {
      restart_dead_prototypes(cb, h, losses.indices, restart_rng, cfg.restart_threshold);
    }
  }
  return losses;
}

TrainedModel fit(std::span<const FrameSequence> utterances, const EncoderConfig& encoder,
                 const TrainConfig& cfg) {
  cfg.validate();
  encoder.validate();
  if (utterances.empty()) throw EmptyInputError("fit: no training utterances");

  const RngStream root(cfg.seed);
  RngStream init_rng = root.child("init");
  RngStream restart_rng = root.child("restart");

  TrainedModel model;
  model.encoder = encoder;
  model.params = init_params(encoder, init_rng);

  std::vector<std::size_t> order(utterances.size());
  std::iota(order.begin(), order.end(), 0);
  auto epoch_order = [&](std::size_t epoch) {
    std::vector<std::size_t> o = order;
    RngStream shuffle_rng = root.child("shuffle", epoch);
    shuffle(o, shuffle_rng);
    return o;
  };

  if (cfg.vq_enabled && !cfg.identity_quantizer) {
    // Warm-up forward over whole batches of the first epoch's order until
    // there are enough bottleneck frames to sample V distinct prototypes.
    const auto first = epoch_order(0);
    std::vector<Matrix> frames;
    std::size_t rows = 0;
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (rows >= cfg.codebook_size && i % cfg.batch_size == 0) break;
      Matrix h = encode(utterances[first[i]].features, model.params, encoder).bottleneck;
      rows += h.rows();
      frames.push_back(std::move(h));
    }
    RngStream cb_rng = root.child("codebook");
    model.codebook = init_codebook(vstack(frames), cfg.codebook_size, cb_rng,
                                   cfg.ema_decay, cfg.ema_epsilon);
  }

  std::vector<FrameSequence> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto o = epoch_order(epoch);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    std::vector<std::size_t> used;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < o.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(o.size(), start + cfg.batch_size); ++i)
        batch.push_back(utterances[o[i]]);
      StepLosses s = train_step(batch, model, cfg, restart_rng);
      rec.utility_loss += s.utility;
      rec.vq_loss += s.vq;
      rec.reg_loss += s.reg;
      rec.combined_loss += s.combined;
      used.insert(used.end(), s.indices.begin(), s.indices.end());
      ++steps;
    }
    const double n = static_cast<double>(steps);
    rec.utility_loss /= n;
    rec.vq_loss /= n;
    rec.reg_loss /= n;
    rec.combined_loss /= n;
    if (!used.empty()) rec.perplexity = codebook_perplexity(used, cfg.codebook_size);
    if (!std::isfinite(rec.combined_loss)) {
      throw NumericError("fit: non-finite loss in epoch " + std::to_string(rec.epoch));
    }
    model.curve.push_back(rec);
  }
  return model;
}

void write_curve_csv(std::span<const EpochRecord> curve, std::ostream& out) {
  out << "epoch,utility_loss,vq_loss,reg_loss,combined_loss,perplexity\n";
  for (const auto& r : curve) {
    out << r.epoch << ',' << io::sig6(r.utility_loss) << ',' << io::sig6(r.vq_loss) << ','
        << io::sig6(r.reg_loss) << ',' << io::sig6(r.combined_loss) << ','
        << io::sig6(r.perplexity) << '\n';
  }
  if (!out) throw IoError("failed writing training curve");
}

}  // namespace vqanon
