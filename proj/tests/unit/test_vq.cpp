#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "../support/oracles.hpp"
#include "vqanon/errors.hpp"
#include "vqanon/numerics/finite_diff.hpp"
#include "vqanon/simd/kernels.hpp"
#include "vqanon/vq/codebook.hpp"

using namespace vqanon;

namespace {

Matrix random_matrix(RngStream& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Matrix m(r, c);
  for (auto& x : m.values()) x = scale * rng.gaussian();
  return m;
}

std::vector<std::size_t> assignments(const Matrix& h, const Matrix& protos) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < h.rows(); ++j) idx.push_back(oracle::brute_argmin(h.row(j), protos));
  return idx;
}

}  // namespace

TEST_CASE("quantize small cases") {
  const Codebook cb(Matrix{{0, 0}, {1, 1}});
  auto r = quantize(Matrix{{1, 1}}, cb);
  CHECK(r.indices == std::vector<std::size_t>{1});
  CHECK(r.quantized == Matrix{{1, 1}});
  CHECK(r.codebook_loss == 0.0);
  CHECK(r.commitment_loss == 0.0);

  r = quantize(Matrix{{0.5, 0.5}}, cb);
  CHECK(r.indices == std::vector<std::size_t>{0});

  CHECK_THROWS_AS(quantize(Matrix(0, 2), cb), EmptyInputError);
  CHECK_THROWS_AS(quantize(Matrix(1, 3), cb), ShapeError);
}

TEST_CASE("quantize matches brute force under both kernel tables") {
  const simd::Level before = simd::active().level;
  for (simd::Level level : {simd::Level::kScalar, simd::detected_level()}) {
    simd::set_level(level);
    RngStream rng(17);
    for (int rep = 0; rep < 50; ++rep) {
      const std::size_t d = 1 + rng.index(16);
      const std::size_t v = 1 + rng.index(32);
      const Matrix h = random_matrix(rng, 64, d);
      const Codebook cb(random_matrix(rng, v, d));
      const auto r = quantize(h, cb);
      CHECK(r.indices == assignments(h, cb.prototypes()));
      for (std::size_t j = 0; j < h.rows(); ++j) {
        const double dq = oracle::direct_sq_distance(h.row(j), r.quantized.row(j));
        for (std::size_t i = 0; i < v; ++i)
          CHECK(dq <= oracle::direct_sq_distance(h.row(j), cb.prototype(i)));
      }
    }
  }
  simd::set_level(before);
}

TEST_CASE("quantize ties and duplicates resolve to the lowest index") {
  // Integer grids make exact ties common.
  RngStream rng(5);
  for (int rep = 0; rep < 200; ++rep) {
    Matrix protos(6, 3), h(10, 3);
    for (auto& x : protos.values()) x = static_cast<double>(rng.index(3));
    for (auto& x : h.values()) x = static_cast<double>(rng.index(3)) * 0.5;
    const Codebook cb(protos);
    CHECK(quantize(h, cb).indices == assignments(h, protos));
  }
}

TEST_CASE("quantize is idempotent on prototypes") {
  RngStream rng(6);
  const Codebook cb(random_matrix(rng, 12, 5));
  const auto q = quantize(random_matrix(rng, 40, 5), cb).quantized;
  CHECK(quantize(q, cb).quantized == q);
}

TEST_CASE("codebook and commitment losses") {
  CHECK(codebook_loss(Matrix{{1, 2}}, Matrix{{1, 2}}) == 0.0);
  CHECK(codebook_loss(Matrix{{1, 0}}, Matrix{{0, 0}}) == 1.0);
  CHECK(commitment_loss(Matrix{{1, 0}, {0, 1}}, Matrix{{0, 0}, {0, 0}}) == 1.0);
  CHECK(commitment_loss_grad(Matrix{{1, 2}}, Matrix{{1, 2}}) == Matrix{{0, 0}});
  CHECK_THROWS_AS(codebook_loss(Matrix(2, 2), Matrix(2, 3)), ShapeError);
  CHECK_THROWS_AS(commitment_loss_grad(Matrix(2, 2), Matrix(3, 2)), ShapeError);

  RngStream rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix h = random_matrix(rng, 7, 4);
    const Matrix q = random_matrix(rng, 7, 4);
    CHECK(std::abs(codebook_loss(h, q) - oracle::mean_sq_norm(h, q)) < 1e-12);
    CHECK(codebook_loss(h, q) == commitment_loss(h, q));
  }
}

TEST_CASE("loss gradients match finite differences") {
  RngStream rng(22);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix h = random_matrix(rng, 9, 3);
    const Codebook cb(random_matrix(rng, 4, 3));
    const auto idx = quantize(h, cb).indices;

    // Prototype gradient with assignments held fixed.
    const Matrix g = codebook_loss_prototype_grad(h, idx, cb);
    const ScalarFunction f_e = [&](std::span<const double> e) {
      const Matrix protos(4, 3, std::vector<double>(e.begin(), e.end()));
      return codebook_loss(h, select_rows(protos, idx));
    };
    CHECK(max_relative_error(finite_diff_grad(f_e, cb.prototypes().values(), 1e-4),
                             g.values()) < 1e-6);

    const Matrix q = select_rows(cb.prototypes(), idx);
    const ScalarFunction f_h = [&](std::span<const double> x) {
      return commitment_loss(Matrix(9, 3, std::vector<double>(x.begin(), x.end())), q);
    };
    CHECK(max_relative_error(finite_diff_grad(f_h, h.values(), 1e-4),
                             commitment_loss_grad(h, q).values()) < 1e-6);
  }
}

TEST_CASE("straight-through backward is the identity") {
  RngStream rng(1);
  const Matrix g = random_matrix(rng, 5, 4);
  CHECK(ste_backward(g) == g);
  CHECK(ste_backward(ste_backward(g)) == ste_backward(g));
  CHECK(ste_backward(Matrix(3, 2)) == Matrix(3, 2));
}

TEST_CASE("ema: full decay leaves the state alone") {
  RngStream rng(2);
  Codebook cb(random_matrix(rng, 4, 3), 1.0);
  const Codebook before = cb;
  const Matrix h = random_matrix(rng, 10, 3);
  ema_update(cb, h, quantize(h, cb).indices);
  CHECK(cb == before);
  CHECK_THROWS_AS(Codebook(Matrix(2, 2), 1.5), ConfigError);
  CHECK_THROWS_AS(Codebook(Matrix(2, 2), -0.1), ConfigError);
}

TEST_CASE("ema: zero decay jumps to the batch mean") {
  RngStream rng(3);
  Codebook cb(random_matrix(rng, 3, 2), 0.0, 1e-5);
  const Matrix h = random_matrix(rng, 8, 2);
  const std::vector<std::size_t> idx(8, 0);
  ema_update(cb, h, idx);
  for (std::size_t d = 0; d < 2; ++d) {
    double mean = 0.0;
    for (std::size_t j = 0; j < 8; ++j) mean += h(j, d) / 8.0;
    CHECK(std::abs(cb.prototype(0)[d] - mean) < 1e-3);
  }
}

TEST_CASE("ema: two updates equal the unrolled recursion") {
  RngStream rng(4);
  const double g = 0.9, eps = 1e-5;
  const std::size_t v = 3, d = 2;
  const Matrix init = random_matrix(rng, v, d);
  Codebook cb(init, g, eps);
  const Matrix h1 = random_matrix(rng, 6, d), h2 = random_matrix(rng, 5, d);
  const std::vector<std::size_t> i1{0, 0, 1, 2, 1, 0}, i2{2, 2, 0, 1, 2};
  ema_update(cb, h1, i1);
  ema_update(cb, h2, i2);

  std::vector<double> n(v);
  Matrix m(v, d);
  double total = 0.0;
  for (std::size_t i = 0; i < v; ++i) {
    double c1 = 0, c2 = 0;
    std::vector<double> s1(d, 0.0), s2(d, 0.0);
    for (std::size_t j = 0; j < i1.size(); ++j)
      if (i1[j] == i) {
        c1 += 1;
        for (std::size_t k = 0; k < d; ++k) s1[k] += h1(j, k);
      }
    for (std::size_t j = 0; j < i2.size(); ++j)
      if (i2[j] == i) {
        c2 += 1;
        for (std::size_t k = 0; k < d; ++k) s2[k] += h2(j, k);
      }
    n[i] = g * g * 1.0 + g * (1 - g) * c1 + (1 - g) * c2;
    for (std::size_t k = 0; k < d; ++k)
      m(i, k) = g * g * init(i, k) + g * (1 - g) * s1[k] + (1 - g) * s2[k];
    total += n[i];
  }
  for (std::size_t i = 0; i < v; ++i) {
    CHECK(std::abs(cb.ema_counts()[i] - n[i]) < 1e-12);
    const double smoothed = (n[i] + eps) / (total + v * eps) * total;
    for (std::size_t k = 0; k < d; ++k) {
      CHECK(std::abs(cb.ema_sums()(i, k) - m(i, k)) < 1e-12);
      CHECK(std::abs(cb.prototype(i)[k] - m(i, k) / smoothed) < 1e-12);
    }
  }
}

TEST_CASE("init_codebook samples distinct rows") {
  RngStream data_rng(7);
  const Matrix samples = random_matrix(data_rng, 1000, 4);
  RngStream a(1), b(1);
  const Codebook cb = init_codebook(samples, 16, a);
  CHECK(cb == init_codebook(samples, 16, b));
  std::set<std::size_t> rows;
  for (std::size_t i = 0; i < 16; ++i) {
    bool found = false;
    for (std::size_t r = 0; r < samples.rows() && !found; ++r) {
      if (std::equal(cb.prototype(i).begin(), cb.prototype(i).end(), samples.row(r).begin())) {
        rows.insert(r);
        found = true;
      }
    }
    CHECK(found);
  }
  CHECK(rows.size() == 16);
  for (double c : cb.ema_counts()) CHECK(c == 1.0);

  const Matrix small = random_matrix(data_rng, 5, 2);
  RngStream c(3);
  const Codebook perm = init_codebook(small, 5, c);
  std::multiset<double> want(small.data().begin(), small.data().end());
  std::multiset<double> got(perm.prototypes().data().begin(), perm.prototypes().data().end());
  CHECK(want == got);
  CHECK_THROWS_AS(init_codebook(small, 6, c), EmptyInputError);
}

TEST_CASE("dead prototypes are restarted from batch frames") {
  RngStream rng(9);
  Matrix protos{{0, 0}, {10, 0}, {0, 10}, {100, 100}};
  Codebook cb(protos);
  Matrix h(12, 2);
  for (std::size_t j = 0; j < 12; ++j) {
    h(j, 0) = (j % 3 == 1 ? 10.0 : 0.0) + 0.1 * rng.gaussian();
    h(j, 1) = (j % 3 == 2 ? 10.0 : 0.0) + 0.1 * rng.gaussian();
  }
  for (int b = 0; b < 2; ++b) CHECK(restart_dead_prototypes(cb, h, rng, 3).empty());
  const auto replaced = restart_dead_prototypes(cb, h, rng, 3);
  REQUIRE(replaced == std::vector<std::size_t>{3});
  bool from_batch = false;
  for (std::size_t j = 0; j < h.rows(); ++j)
    from_batch |= std::equal(h.row(j).begin(), h.row(j).end(), cb.prototype(3).begin());
  CHECK(from_batch);
  CHECK(cb.ema_counts()[3] == 1.0);
  const auto idx = quantize(h, cb).indices;
  CHECK(std::find(idx.begin(), idx.end(), 3u) != idx.end());

  // Nothing changes while every prototype keeps getting picked.
  Codebook busy(Matrix{{0, 0}, {10, 0}, {0, 10}});
  const Codebook snapshot = busy;
  for (int b = 0; b < 10; ++b) CHECK(restart_dead_prototypes(busy, h, rng, 2).empty());
  CHECK(busy == snapshot);
}

TEST_CASE("perplexity") {
  std::vector<std::size_t> uniform;
  for (std::size_t i = 0; i < 64; ++i) uniform.push_back(i % 8);
  CHECK(std::abs(codebook_perplexity(uniform, 8) - 8.0) < 1e-9);
  const std::vector<std::size_t> one(10, 3);
  CHECK(codebook_perplexity(one, 8) == 1.0);
  CHECK_THROWS_AS(codebook_perplexity({}, 8), EmptyInputError);

  RngStream rng(10);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<std::size_t> idx;
    const std::size_t v = 2 + rng.index(30);
    for (std::size_t j = 0; j < 500; ++j) idx.push_back(rng.index(v) * rng.index(2));
    const double p = codebook_perplexity(idx, v);
    CHECK(std::abs(p - oracle::perplexity(idx, v)) < 1e-12);
    CHECK(p >= 1.0);
    CHECK(p <= static_cast<double>(v));
  }
}

TEST_CASE("codebook snapshot round trip") {
  RngStream rng(11);
  Codebook cb(random_matrix(rng, 5, 3), 0.95, 1e-4);
  const Matrix h = random_matrix(rng, 20, 3);
  ema_update(cb, h, quantize(h, cb).indices);
  std::stringstream ss;
  save_codebook(cb, ss);
  const Codebook back = load_codebook(ss);
  CHECK(back == cb);
  CHECK(std::equal(back.staleness().begin(), back.staleness().end(), cb.staleness().begin()));
  std::stringstream bad("vqanon-codebook 1\nsize 2\n");
  CHECK_THROWS_AS(load_codebook(bad), FormatError);
}
