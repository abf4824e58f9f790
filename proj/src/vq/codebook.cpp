#include "vqanon/vq/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "vqanon/errors.hpp"
#include "vqanon/io/text.hpp"
#include "vqanon/simd/kernels.hpp"

namespace vqanon {

namespace {

void check_decay(double decay, double smoothing) {
  if (!(decay >= 0.0 && decay <= 1.0)) {
    throw ConfigError("codebook decay must lie in [0, 1], got " + io::exact(decay));
  }
  if (!(smoothing > 0.0)) {
    throw ConfigError("codebook smoothing must be > 0, got " + io::exact(smoothing));
  }
}

void check_pair(const BottleneckSequence& h, const Matrix& q, const char* op) {
  if (h.rows() != q.rows() || h.cols() != q.cols()) {
    throw ShapeError(std::string(op) + ": h and q shapes differ");
  }
  if (h.rows() == 0) throw EmptyInputError(std::string(op) + ": empty sequence");
}

}  // namespace

Codebook::Codebook(Matrix prototypes, double decay, double smoothing)
    : prototypes_(std::move(prototypes)),
      ema_counts_(prototypes_.rows(), 1.0),
      ema_sums_(prototypes_),
      decay_(decay),
      smoothing_(smoothing),
      staleness_(prototypes_.rows(), 0) {
  check_decay(decay_, smoothing_);
  if (prototypes_.rows() == 0 || prototypes_.cols() == 0) {
    throw EmptyInputError("codebook needs at least one prototype of dimension >= 1");
  }
  if (!prototypes_.all_finite()) throw NumericError("codebook: non-finite prototype");
  refresh_norms();
}

Codebook::Codebook(Matrix prototypes, std::vector<double> ema_counts,
                   Matrix ema_sums, double decay, double smoothing)
    : prototypes_(std::move(prototypes)),
      ema_counts_(std::move(ema_counts)),
      ema_sums_(std::move(ema_sums)),
      decay_(decay),
      smoothing_(smoothing),
      staleness_(prototypes_.rows(), 0) {
  check_decay(decay_, smoothing_);
  if (prototypes_.rows() == 0 || prototypes_.cols() == 0) {
    throw EmptyInputError("codebook needs at least one prototype of dimension >= 1");
  }
  if (ema_counts_.size() != size() || ema_sums_.rows() != size() ||
      ema_sums_.cols() != dim()) {
    throw ShapeError("codebook: EMA state shape does not match prototypes");
  }
  for (double n : ema_counts_) {
    if (!(n >= 0.0) || !std::isfinite(n)) {
      throw NumericError("codebook: EMA counts must be finite and >= 0");
    }
  }
  if (!prototypes_.all_finite() || !ema_sums_.all_finite()) {
    throw NumericError("codebook: non-finite state");
  }
  refresh_norms();
}

double Codebook::smoothed_count(std::size_t i) const {
  const double total = std::accumulate(ema_counts_.begin(), ema_counts_.end(), 0.0);
  const double v = static_cast<double>(size());
  return (ema_counts_[i] + smoothing_) / (total + v * smoothing_) * total;
}

void Codebook::apply_gradient(const Matrix& grad, double step) {
  if (grad.rows() != size() || grad.cols() != dim()) {
    throw ShapeError("codebook gradient shape mismatch");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    simd::active().axpy(-step, grad.row(i).data(), prototypes_.row(i).data(), dim());
  }
  if (!prototypes_.all_finite()) throw NumericError("codebook gradient step diverged");
  refresh_norms();
}

void Codebook::refresh_norms() {
  norms_.resize(size());
  for (std::size_t i = 0; i < size(); ++i) refresh_norm(i);
}

void Codebook::refresh_norm(std::size_t i) {
  const double* e = prototypes_.row(i).data();
  norms_[i] = simd::active().dot(e, e, dim());
}

QuantizationResult quantize(const BottleneckSequence& h, const Codebook& cb) {
  if (h.rows() == 0) throw EmptyInputError("quantize: empty sequence");
  if (h.cols() != cb.dim()) {
    throw ShapeError("quantize: frame dim " + std::to_string(h.cols()) +
                     " != codebook dim " + std::to_string(cb.dim()));
  }
  const auto& k = simd::active();
  const auto& exact = simd::scalar_kernels();
  const std::size_t v = cb.size();
  const std::size_t d = cb.dim();
  const auto norms = cb.squared_norms();
  const double max_norm = *std::max_element(norms.begin(), norms.end());

  QuantizationResult res;
  res.indices.resize(h.rows());
  res.quantized = Matrix(h.rows(), d);
  std::vector<double> scores(v);
  for (std::size_t j = 0; j < h.rows(); ++j) {
    const double* hj = h.row(j).data();
    const double hn = k.dot(hj, hj, d);
    k.dot_rows(hj, cb.prototypes().values().data(), v, d, d, scores.data());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < v; ++i) {
      scores[i] = hn - 2.0 * scores[i] + norms[i];
      best = std::min(best, scores[i]);
    }
    // Expansion error is a few ulps of (hn + norm); anything within this band
    // gets re-ranked with the direct form.
    const double band = 1e-9 * (hn + max_norm) + std::numeric_limits<double>::min();
    std::size_t arg = 0;
    double arg_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < v; ++i) {
      if (scores[i] > best + band) continue;
      const double dist = exact.squared_distance(hj, cb.prototype(i).data(), d);
      if (dist < arg_dist) {
        arg_dist = dist;
        arg = i;
      }
    }
    res.indices[j] = arg;
    std::copy(cb.prototype(arg).begin(), cb.prototype(arg).end(),
              res.quantized.row(j).begin());
  }
  res.codebook_loss = codebook_loss(h, res.quantized);
  res.commitment_loss = res.codebook_loss;
  return res;
}

double codebook_loss(const BottleneckSequence& h, const Matrix& q) {
  check_pair(h, q, "codebook_loss");
  const auto& k = simd::active();
  double total = 0.0;
  for (std::size_t j = 0; j < h.rows(); ++j)
    total += k.squared_distance(h.row(j).data(), q.row(j).data(), h.cols());
  return total / static_cast<double>(h.rows());
}

double commitment_loss(const BottleneckSequence& h, const Matrix& q) {
  check_pair(h, q, "commitment_loss");
  return codebook_loss(h, q);
}

Matrix codebook_loss_prototype_grad(const BottleneckSequence& h,
                                    std::span<const std::size_t> indices,
                                    const Codebook& cb) {
  if (h.rows() == 0) throw EmptyInputError("codebook_loss_prototype_grad: empty");
  if (indices.size() != h.rows() || h.cols() != cb.dim()) {
    throw ShapeError("codebook_loss_prototype_grad: shape mismatch");
  }
  Matrix grad(cb.size(), cb.dim());
  const double scale = 2.0 / static_cast<double>(h.rows());
  for (std::size_t j = 0; j < h.rows(); ++j) {
    const std::size_t i = indices[j];
    if (i >= cb.size()) throw ShapeError("prototype index out of range");
    for (std::size_t c = 0; c < cb.dim(); ++c)
      grad(i, c) += scale * (cb.prototypes()(i, c) - h(j, c));
  }
  return grad;
}

Matrix commitment_loss_grad(const BottleneckSequence& h, const Matrix& q) {
  check_pair(h, q, "commitment_loss_grad");
  Matrix grad(h.rows(), h.cols());
  const double scale = 2.0 / static_cast<double>(h.rows());
  for (std::size_t i = 0; i < h.size(); ++i)
    grad.values()[i] = scale * (h.values()[i] - q.values()[i]);
  return grad;
}

void ema_update(Codebook& cb, const BottleneckSequence& h,
                std::span<const std::size_t> indices) {
  if (h.cols() != cb.dim()) throw ShapeError("ema_update: dimension mismatch");
  if (indices.size() != h.rows()) throw ShapeError("ema_update: index count mismatch");
  for (std::size_t i : indices) {
    if (i >= cb.size()) throw ShapeError("ema_update: prototype index out of range");
  }
  const double g = cb.decay_;
  if (g == 1.0) return;

  const std::size_t v = cb.size();
  const std::size_t d = cb.dim();
  std::vector<double> counts(v, 0.0);
  Matrix sums(v, d);
  for (std::size_t j = 0; j < h.rows(); ++j) {
    counts[indices[j]] += 1.0;
    simd::active().axpy(1.0, h.row(j).data(), sums.row(indices[j]).data(), d);
  }
  for (std::size_t i = 0; i < v; ++i) {
    cb.ema_counts_[i] = g * cb.ema_counts_[i] + (1.0 - g) * counts[i];
    for (std::size_t c = 0; c < d; ++c)
      cb.ema_sums_(i, c) = g * cb.ema_sums_(i, c) + (1.0 - g) * sums(i, c);
  }
  const double total =
      std::accumulate(cb.ema_counts_.begin(), cb.ema_counts_.end(), 0.0);
  const double denom = total + static_cast<double>(v) * cb.smoothing_;
  for (std::size_t i = 0; i < v; ++i) {
    const double smoothed = (cb.ema_counts_[i] + cb.smoothing_) / denom * total;
    if (!(smoothed > 0.0)) continue;  // everything decayed away; keep e_i
    for (std::size_t c = 0; c < d; ++c)
      cb.prototypes_(i, c) = cb.ema_sums_(i, c) / smoothed;
  }
  if (!cb.prototypes_.all_finite()) throw NumericError("ema_update produced non-finite prototypes");
  cb.refresh_norms();
}

Codebook init_codebook(const Matrix& samples, std::size_t codebook_size,
                       RngStream& rng, double decay, double smoothing) {
  if (codebook_size == 0) throw ConfigError("init_codebook: V must be >= 1");
  if (samples.rows() < codebook_size) {
    throw EmptyInputError("init_codebook: " + std::to_string(samples.rows()) +
                          " samples are insufficient for V=" +
                          std::to_string(codebook_size));
  }
  // Partial Fisher-Yates over row ids.
  std::vector<std::size_t> ids(samples.rows());
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t i = 0; i < codebook_size; ++i) {
    const std::size_t j = i + rng.index(ids.size() - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(codebook_size);
  return Codebook(select_rows(samples, ids), decay, smoothing);
}

std::vector<std::size_t> restart_dead_prototypes(
    Codebook& cb, const BottleneckSequence& h,
    std::span<const std::size_t> indices, RngStream& rng,
    std::size_t stale_threshold) {
  if (stale_threshold == 0) throw ConfigError("restart: stale_threshold must be >= 1");
  if (indices.size() != h.rows()) throw ShapeError("restart: index count mismatch");
  if (h.rows() > 0 && h.cols() != cb.dim()) throw ShapeError("restart: dimension mismatch");

  std::vector<bool> used(cb.size(), false);
  for (std::size_t i : indices) {
    if (i >= cb.size()) throw ShapeError("restart: prototype index out of range");
    used[i] = true;
  }
  std::vector<std::size_t> dead;
  for (std::size_t i = 0; i < cb.size(); ++i) {
    cb.staleness_[i] = used[i] ? 0 : cb.staleness_[i] + 1;
    if (cb.staleness_[i] >= stale_threshold) dead.push_back(i);
  }
  if (dead.empty() || h.rows() == 0) return {};

  std::vector<std::size_t> frames(h.rows());
  std::iota(frames.begin(), frames.end(), 0);
  std::vector<std::size_t> replaced;
  for (std::size_t n = 0; n < dead.size() && n < frames.size(); ++n) {
    const std::size_t pick = n + rng.index(frames.size() - n);
    std::swap(frames[n], frames[pick]);
    const std::size_t i = dead[n];
    const auto src = h.row(frames[n]);
    std::copy(src.begin(), src.end(), cb.prototypes_.row(i).begin());
    std::copy(src.begin(), src.end(), cb.ema_sums_.row(i).begin());
    cb.ema_counts_[i] = 1.0;
    cb.staleness_[i] = 0;
    cb.refresh_norm(i);
    replaced.push_back(i);
  }
  return replaced;
}

std::vector<std::size_t> restart_dead_prototypes(Codebook& cb,
                                                 const BottleneckSequence& h,
                                                 RngStream& rng,
                                                 std::size_t stale_threshold) {
  const auto assignment = quantize(h, cb);
  return restart_dead_prototypes(cb, h, assignment.indices, rng, stale_threshold);
}

double codebook_perplexity(std::span<const std::size_t> indices,
                           std::size_t codebook_size) {
  if (indices.empty()) throw EmptyInputError("codebook_perplexity: no indices");
  std::vector<std::size_t> hist(codebook_size, 0);
  for (std::size_t i : indices) {
    if (i >= codebook_size) throw ShapeError("codebook_perplexity: index out of range");
    ++hist[i];
  }
  const double n = static_cast<double>(indices.size());
  double entropy = 0.0;
  for (std::size_t c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    entropy -= p * std::log(p);
  }
  return std::clamp(std::exp(entropy), 1.0, static_cast<double>(codebook_size));
}

void save_codebook(const Codebook& cb, std::ostream& out) {
  out << "vqanon-codebook 1\n";
  out << "size " << cb.size() << ' ' << cb.dim() << '\n';
  out << "decay " << io::exact(cb.decay()) << '\n';
  out << "smoothing " << io::exact(cb.smoothing()) << '\n';
  auto write_row = [&](const char* key, std::span<const double> row) {
    out << key;
    for (double x : row) out << ' ' << io::exact(x);
    out << '\n';
  };
  for (std::size_t i = 0; i < cb.size(); ++i) write_row("prototype", cb.prototype(i));
  write_row("counts", cb.ema_counts());
  for (std::size_t i = 0; i < cb.size(); ++i) write_row("sum", cb.ema_sums().row(i));
  out << "staleness";
  for (std::size_t s : cb.staleness()) out << ' ' << s;
  out << '\n';
  if (!out) throw IoError("failed writing codebook");
}

Codebook load_codebook(std::istream& in) {
  io::expect_line(in, "vqanon-codebook 1");
  const auto size = io::expect_record(in, "size");
  if (size.size() != 2) throw FormatError("codebook: malformed size record");
  const std::size_t v = io::parse_count(size[0], "codebook size");
  const std::size_t d = io::parse_count(size[1], "codebook dim");
  const auto one = [&](const char* key) {
    const auto t = io::expect_record(in, key);
    if (t.size() != 1) throw FormatError(std::string("codebook: malformed ") + key);
    return io::parse_double(t[0], key);
  };
  const double decay = one("decay");
  const double smoothing = one("smoothing");
  const auto read_row = [&](const char* key, std::size_t n) {
    const auto t = io::expect_record(in, key);
    if (t.size() != n) throw FormatError(std::string("codebook: wrong length for ") + key);
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) row[i] = io::parse_double(t[i], key);
    return row;
  };
  std::vector<double> protos;
  for (std::size_t i = 0; i < v; ++i) {
    const auto row = read_row("prototype", d);
    protos.insert(protos.end(), row.begin(), row.end());
  }
  auto counts = read_row("counts", v);
  std::vector<double> sums;
  for (std::size_t i = 0; i < v; ++i) {
    const auto row = read_row("sum", d);
    sums.insert(sums.end(), row.begin(), row.end());
  }
  const auto stale = io::expect_record(in, "staleness");
  if (stale.size() != v) throw FormatError("codebook: wrong staleness length");
  Codebook cb(Matrix(v, d, std::move(protos)), std::move(counts),
              Matrix(v, d, std::move(sums)), decay, smoothing);
  for (std::size_t i = 0; i < v; ++i)
    cb.staleness_[i] = io::parse_count(stale[i], "staleness");
  return cb;
}

}  // namespace vqanon
