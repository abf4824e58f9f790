#include "vqanon/encoder/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "vqanon/errors.hpp"
#include "vqanon/io/text.hpp"
#include "vqanon/simd/kernels.hpp"

namespace vqanon {

namespace {

std::size_t clamp_index(std::ptrdiff_t t, std::size_t n) {
  if (t < 0) return 0;
  if (static_cast<std::size_t>(t) >= n) return n - 1;
  return static_cast<std::size_t>(t);
}

// Row t holds [x[t-c], ..., x[t+c]] with replicated edges.
Matrix splice(const Matrix& x, std::size_t context) {
  const std::size_t width = 2 * context + 1;
  const std::size_t d = x.cols();
  Matrix out(x.rows(), width * d);
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto dst = out.row(t);
    for (std::size_t o = 0; o < width; ++o) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + o) -
                                 static_cast<std::ptrdiff_t>(context);
      const auto row = x.row(clamp_index(src, x.rows()));
      std::copy(row.begin(), row.end(), dst.begin() + o * d);
    }
  }
  return out;
}

Matrix unsplice(const Matrix& grad, std::size_t context, std::size_t d) {
  const std::size_t width = 2 * context + 1;
  Matrix out(grad.rows(), d);
  const auto& k = simd::active();
  for (std::size_t t = 0; t < grad.rows(); ++t) {
    for (std::size_t o = 0; o < width; ++o) {
      const std::ptrdiff_t dst = static_cast<std::ptrdiff_t>(t + o) -
                                 static_cast<std::ptrdiff_t>(context);
      k.axpy(1.0, grad.row(t).data() + o * d,
             out.row(clamp_index(dst, grad.rows())).data(), d);
    }
  }
  return out;
}

Matrix stride_rows(const Matrix& x, std::size_t factor) {
  const std::size_t n = (x.rows() + factor - 1) / factor;
  Matrix out(n, x.cols());
  for (std::size_t j = 0; j < n; ++j) {
    const auto row = x.row(j * factor);
    std::copy(row.begin(), row.end(), out.row(j).begin());
  }
  return out;
}

Matrix unstride_rows(const Matrix& g, std::size_t factor, std::size_t frames) {
  Matrix out(frames, g.cols());
  for (std::size_t j = 0; j < g.rows(); ++j) {
    const auto row = g.row(j);
    std::copy(row.begin(), row.end(), out.row(j * factor).begin());
  }
  return out;
}

Matrix affine(const Matrix& x, const AffineLayer& layer) {
  Matrix z = matmul(x, layer.weight);
  for (std::size_t t = 0; t < z.rows(); ++t) {
    auto row = z.row(t);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias[c];
  }
  return z;
}

void affine_grads(const Matrix& input, const Matrix& grad_out, AffineLayer& dst) {
  dst.weight = matmul_at_b(input, grad_out);
  dst.bias.assign(grad_out.cols(), 0.0);
  for (std::size_t t = 0; t < grad_out.rows(); ++t)
    simd::active().axpy(1.0, grad_out.row(t).data(), dst.bias.data(), grad_out.cols());
}

AffineLayer random_layer(std::size_t fan_in, std::size_t fan_out, double gain,
                         RngStream& rng) {
  const double scale = std::sqrt(gain / static_cast<double>(fan_in));
  auto w = rng.gaussian(fan_in * fan_out);
  for (auto& v : w) v *= scale;
  return {Matrix(fan_in, fan_out, std::move(w)), std::vector<double>(fan_out, 0.0)};
}

bool finite(const AffineLayer& l) {
  return l.weight.all_finite() &&
         std::all_of(l.bias.begin(), l.bias.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

void EncoderConfig::validate() const {
  auto positive = [](std::size_t v, const char* key) {
    if (v == 0) throw ConfigError(std::string("encoder.") + key + " must be >= 1");
  };
  positive(input_dim, "input_dim");
  positive(bottleneck_dim, "bottleneck_dim");
  positive(subsample_factor, "subsample_factor");
  positive(num_content_classes, "num_content_classes");
  for (std::size_t h : hidden_dims) positive(h, "hidden_dims");
  if (subsample_after > hidden_dims.size()) {
    throw ConfigError("encoder.subsample_after exceeds the number of hidden layers");
  }
}

std::size_t EncoderConfig::output_frames(std::size_t input_frames) const {
  return (input_frames + subsample_factor - 1) / subsample_factor;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = head.weight.size() + head.bias.size();
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

bool EncoderParams::all_finite() const {
  return finite(head) && std::all_of(layers.begin(), layers.end(), finite);
}

EncoderParams init_params(const EncoderConfig& cfg, RngStream& rng) {
  cfg.validate();
  EncoderParams p;
  const std::size_t width = 2 * cfg.context + 1;
  std::size_t fan_in = cfg.input_dim;
  for (std::size_t h : cfg.hidden_dims) {
    p.layers.push_back(random_layer(width * fan_in, h, 2.0, rng));
    fan_in = h;
  }
  p.layers.push_back(random_layer(fan_in, cfg.bottleneck_dim, 1.0, rng));
  p.head = random_layer(cfg.bottleneck_dim, cfg.num_content_classes, 1.0, rng);
  return p;
}

EncoderParams zeros_like(const EncoderParams& p) {
  EncoderParams z;
  for (const auto& l : p.layers)
    z.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()),
                        std::vector<double>(l.bias.size(), 0.0)});
  z.head = {Matrix(p.head.weight.rows(), p.head.weight.cols()),
            std::vector<double>(p.head.bias.size(), 0.0)};
  return z;
}

void add_scaled(EncoderParams& p, const EncoderGrads& g, double scale) {
  if (p.layers.size() != g.layers.size()) throw ShapeError("add_scaled: layer count mismatch");
  const auto& k = simd::active();
  auto step = [&](AffineLayer& dst, const AffineLayer& src) {
    if (dst.weight.rows() != src.weight.rows() || dst.weight.cols() != src.weight.cols() ||
        dst.bias.size() != src.bias.size()) {
      throw ShapeError("add_scaled: layer shape mismatch");
    }
    k.axpy(scale, src.weight.values().data(), dst.weight.values().data(), dst.weight.size());
    k.axpy(scale, src.bias.data(), dst.bias.data(), dst.bias.size());
  };
  for (std::size_t l = 0; l < p.layers.size(); ++l) step(p.layers[l], g.layers[l]);
  step(p.head, g.head);
}

std::vector<double> flatten(const EncoderParams& p) {
  std::vector<double> out;
  out.reserve(p.parameter_count());
  auto push = [&](const AffineLayer& l) {
    out.insert(out.end(), l.weight.data().begin(), l.weight.data().end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  };
  for (const auto& l : p.layers) push(l);
  push(p.head);
  return out;
}

EncoderParams unflatten(const EncoderParams& shape, std::span<const double> values) {
  if (values.size() != shape.parameter_count()) {
    throw ShapeError("unflatten: expected " + std::to_string(shape.parameter_count()) +
                     " values, got " + std::to_string(values.size()));
  }
  EncoderParams p = shape;
  std::size_t pos = 0;
  auto pull = [&](AffineLayer& l) {
    for (auto& v : l.weight.values()) v = values[pos++];
    for (auto& v : l.bias) v = values[pos++];
  };
  for (auto& l : p.layers) pull(l);
  pull(p.head);
  return p;
}

EncodeResult encode(const Matrix& frames, const EncoderParams& params,
                    const EncoderConfig& cfg) {
  if (frames.cols() != cfg.input_dim) {
    throw ShapeError("encode: input dim " + std::to_string(frames.cols()) +
                     " != configured " + std::to_string(cfg.input_dim));
  }
  if (frames.rows() < cfg.min_input_frames()) {
    throw EmptyInputError("encode: " + std::to_string(frames.rows()) +
                          " frames is shorter than the context window of " +
                          std::to_string(cfg.min_input_frames()));
  }
  const std::size_t n_hidden = cfg.hidden_dims.size();
  if (params.layers.size() != n_hidden + 1) {
    throw ShapeError("encode: parameters do not match the configured depth");
  }

  EncodeResult res;
  LayerCache& cache = res.cache;
  cache.input_frames = frames.rows();
  cache.context = cfg.context;
  cache.subsample_factor = cfg.subsample_factor;
  cache.subsample_after = cfg.subsample_after;

  Matrix x = frames;
  for (std::size_t l = 0; l <= n_hidden; ++l) {
    if (l == cfg.subsample_after) {
      cache.frames_before_subsample.push_back(x.rows());
      if (cfg.subsample_factor > 1) x = stride_rows(x, cfg.subsample_factor);
    }
    const AffineLayer& layer = params.layers[l];
    Matrix in = l < n_hidden ? splice(x, cfg.context) : x;
    if (in.cols() != layer.weight.rows()) {
      throw ShapeError("encode: layer " + std::to_string(l) + " expects fan-in " +
                       std::to_string(layer.weight.rows()) + ", got " +
                       std::to_string(in.cols()));
    }
    Matrix z = affine(in, layer);
    cache.inputs.push_back(std::move(in));
    if (l < n_hidden) {
      x = z;
      for (auto& v : x.values()) v = v > 0.0 ? v : 0.0;
      cache.pre_activations.push_back(std::move(z));
    } else {
      res.bottleneck = z;
      cache.pre_activations.push_back(std::move(z));
    }
  }
  return res;
}

Matrix head_logits(const Matrix& bottleneck, const EncoderParams& params) {
  if (bottleneck.cols() != params.head.weight.rows()) {
    throw ShapeError("head_logits: bottleneck dim " + std::to_string(bottleneck.cols()) +
                     " != head fan-in " + std::to_string(params.head.weight.rows()));
  }
  return affine(bottleneck, params.head);
}

EncoderGrads backward(const Matrix& grad_bottleneck, const Matrix& grad_logits,
                      const Matrix& head_input, const LayerCache& cache,
                      const EncoderParams& params, const BackwardOptions& options) {
  const std::size_t n_layers = params.layers.size();
  if (cache.inputs.size() != n_layers || cache.pre_activations.size() != n_layers ||
      cache.frames_before_subsample.size() != 1) {
    throw CacheError("backward: cache does not come from a forward pass of these parameters");
  }
  for (std::size_t l = 0; l < n_layers; ++l) {
    if (cache.inputs[l].cols() != params.layers[l].weight.rows() ||
        cache.pre_activations[l].cols() != params.layers[l].weight.cols()) {
      throw CacheError("backward: cache layer " + std::to_string(l) +
                       " has stale shapes");
    }
  }
  const std::size_t frames = cache.pre_activations.back().rows();
  const std::size_t dim = cache.pre_activations.back().cols();
  const bool has_b = !grad_bottleneck.empty();
  const bool has_l = !grad_logits.empty();
  if (has_b && (grad_bottleneck.rows() != frames || grad_bottleneck.cols() != dim)) {
    throw CacheError("backward: bottleneck gradient does not match the cached pass");
  }
  if (has_l && (grad_logits.rows() != frames ||
                grad_logits.cols() != params.head.weight.cols() ||
                head_input.rows() != frames || head_input.cols() != dim)) {
    throw CacheError("backward: head gradient does not match the cached pass");
  }

  EncoderGrads grads = zeros_like(params);
  Matrix g = has_b ? grad_bottleneck : Matrix(frames, dim);
  if (has_l) {
    affine_grads(head_input, grad_logits, grads.head);
    if (options.through_head) {
      const Matrix grad_q = matmul_a_bt(grad_logits, params.head.weight);
      const Matrix grad_h = ste_backward(grad_q);
      simd::active().axpy(1.0, grad_h.values().data(), g.values().data(), g.size());
    }
  }

  for (std::size_t l = n_layers; l-- > 0;) {
    const AffineLayer& layer = params.layers[l];
    const bool is_bottleneck = l + 1 == n_layers;
    if (!is_bottleneck) {
      const Matrix& z = cache.pre_activations[l];
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!(z.values()[i] > 0.0)) g.values()[i] = 0.0;
    }
    affine_grads(cache.inputs[l], g, grads.layers[l]);
    if (l == 0) break;
    Matrix dx = matmul_a_bt(g, layer.weight);
    if (!is_bottleneck) dx = unsplice(dx, cache.context, dx.cols() / (2 * cache.context + 1));
    if (l == cache.subsample_after && cache.subsample_factor > 1) {
      dx = unstride_rows(dx, cache.subsample_factor, cache.frames_before_subsample.front());
    }
    g = std::move(dx);
  }
  return grads;
}

void save_params(const EncoderConfig& cfg, const EncoderParams& params,
                 std::ostream& out) {
  out << "vqanon-encoder 1\n";
  out << "input_dim " << cfg.input_dim << '\n';
  out << "hidden_dims";
  for (std::size_t h : cfg.hidden_dims) out << ' ' << h;
  out << '\n';
  out << "bottleneck_dim " << cfg.bottleneck_dim << '\n';
  out << "context " << cfg.context << '\n';
  out << "subsample_factor " << cfg.subsample_factor << '\n';
  out << "subsample_after " << cfg.subsample_after << '\n';
  out << "num_content_classes " << cfg.num_content_classes << '\n';
  auto write_layer = [&](const char* key, const AffineLayer& l) {
    out << key << ' ' << l.weight.rows() << ' ' << l.weight.cols() << '\n';
    for (std::size_t r = 0; r < l.weight.rows(); ++r) {
      out << 'w';
      for (double v : l.weight.row(r)) out << ' ' << io::exact(v);
      out << '\n';
    }
    out << 'b';
    for (double v : l.bias) out << ' ' << io::exact(v);
    out << '\n';
  };
  for (const auto& l : params.layers) write_layer("layer", l);
  write_layer("head", params.head);
  if (!out) throw IoError("failed writing encoder parameters");
}

EncoderSnapshot load_params(std::istream& in) {
  io::expect_line(in, "vqanon-encoder 1");
  auto count = [&](const char* key) {
    const auto t = io::expect_record(in, key);
    if (t.size() != 1) throw FormatError(std::string("encoder: malformed ") + key);
    return io::parse_count(t[0], key);
  };
  EncoderSnapshot snap;
  EncoderConfig& cfg = snap.config;
  cfg.input_dim = count("input_dim");
  cfg.hidden_dims.clear();
  for (const auto& t : io::expect_record(in, "hidden_dims"))
    cfg.hidden_dims.push_back(io::parse_count(t, "hidden_dims"));
  cfg.bottleneck_dim = count("bottleneck_dim");
  cfg.context = count("context");
  cfg.subsample_factor = count("subsample_factor");
  cfg.subsample_after = count("subsample_after");
  cfg.num_content_classes = count("num_content_classes");
  cfg.validate();

  auto read_layer = [&](const char* key) {
    const auto dims = io::expect_record(in, key);
    if (dims.size() != 2) throw FormatError("encoder: malformed layer header");
    const std::size_t rows = io::parse_count(dims[0], "rows");
    const std::size_t cols = io::parse_count(dims[1], "cols");
    std::vector<double> w;
    w.reserve(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto t = io::expect_record(in, "w");
      if (t.size() != cols) throw FormatError("encoder: weight row has wrong length");
      for (const auto& s : t) w.push_back(io::parse_double(s, "weight"));
    }
    const auto b = io::expect_record(in, "b");
    if (b.size() != cols) throw FormatError("encoder: bias has wrong length");
    AffineLayer layer{Matrix(rows, cols, std::move(w)), {}};
    for (const auto& s : b) layer.bias.push_back(io::parse_double(s, "bias"));
    return layer;
  };
  for (std::size_t l = 0; l <= cfg.hidden_dims.size(); ++l)
    snap.params.layers.push_back(read_layer("layer"));
  snap.params.head = read_layer("head");

  RngStream probe(0);
  const EncoderParams expected = init_params(cfg, probe);
  for (std::size_t l = 0; l < expected.layers.size(); ++l) {
    if (expected.layers[l].weight.rows() != snap.params.layers[l].weight.rows() ||
        expected.layers[l].weight.cols() != snap.params.layers[l].weight.cols()) {
      throw FormatError("encoder: layer " + std::to_string(l) +
                        " shape does not match the stored configuration");
    }
  }
  if (expected.head.weight.rows() != snap.params.head.weight.rows() ||
      expected.head.weight.cols() != snap.params.head.weight.cols()) {
    throw FormatError("encoder: head shape does not match the stored configuration");
  }
  return snap;
}

}  // namespace vqanon
