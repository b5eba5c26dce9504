#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "patchforge/codec.hpp"
#include "patchforge/error.hpp"
#include "patchforge/transformer.hpp"
#include "synthetic.hpp"

namespace pf = patchforge;

namespace {

pf::Transformer<float> to_float(const pf::Transformer<double>& m) {
  pf::Transformer<float> f(m.config());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const auto& src = m.parameters()[i].value.storage();
    auto& dst = f.parameters()[i].value.storage();
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = static_cast<float>(src[j]);
  }
  return f;
}

std::vector<int> random_ids(pf::Rng& rng, std::size_t n, int vocab) {
  std::vector<int> ids(n);
  for (auto& id : ids) id = pf::kNumSpecial + static_cast<int>(rng.below(vocab - pf::kNumSpecial));
  return ids;
}

pf::TrainingBatch batch_of(std::vector<pf::Example> ex) { return pf::TrainingBatch::from(ex); }

}  // namespace

TEST_CASE("zero output projection gives uniform distributions") {
  auto m = pftest::micro_model(12, 8, 1, 3);
  for (auto& x : m.parameter("output.weight").value.storage()) x = 0;
  for (auto& x : m.parameter("output.bias").value.storage()) x = 0;
  const std::vector<int> src = {5, 6, 2};
  const std::vector<int> tgt = {1, 7, 8, 9};
  const auto p = pf::forward(m, src, tgt);
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j) CHECK(p(i, j) == doctest::Approx(1.0 / 12));
}

TEST_CASE("forward agrees with a straight-line recomputation") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    // Two real tokens next to the reserved ids.
    const auto m = pftest::micro_model(pf::kNumSpecial + 2, 4, 1, seed);
    const std::vector<int> src = {4, 5, 5, 2};
    const std::vector<int> tgt = {1, 5, 4};
    const auto got = pf::forward(m, src, tgt);
    const auto want = pftest::reference_forward(m, src, tgt);
    for (std::size_t i = 0; i < got.rows(); ++i)
      for (std::size_t j = 0; j < got.cols(); ++j) CHECK(got(i, j) == doctest::Approx(want[i][j]).epsilon(1e-12));
  }
  const auto deep = pftest::micro_model(10, 8, 2, 9);
  const auto got = pf::forward(deep, std::vector<int>{4, 9, 7, 2}, std::vector<int>{1, 8, 6});
  const auto want = pftest::reference_forward(deep, {4, 9, 7, 2}, {1, 8, 6});
  for (std::size_t i = 0; i < got.rows(); ++i)
    for (std::size_t j = 0; j < got.cols(); ++j) CHECK(got(i, j) == doctest::Approx(want[i][j]).epsilon(1e-12));
}

TEST_CASE("rows are distributions") {
  const auto m = to_float(pftest::micro_model(20, 16, 2, 4));
  pf::Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto src = random_ids(rng, 1 + rng.below(10), 20);
    auto tgt = random_ids(rng, 1 + rng.below(10), 20);
    tgt[0] = pf::kBosId;
    const auto p = pf::forward(m, src, tgt);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < p.cols(); ++j) s += p(i, j);
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("outputs never depend on later target positions") {
  const auto m = to_float(pftest::micro_model(16, 8, 2, 6));
  pf::Rng rng(2);
  for (int probe = 0; probe < 100; ++probe) {
    const auto src = random_ids(rng, 1 + rng.below(8), 16);
    auto tgt = random_ids(rng, 2 + rng.below(8), 16);
    tgt[0] = pf::kBosId;
    const std::size_t j = 1 + rng.below(tgt.size() - 1);
    auto changed = tgt;
    changed[j] = pf::kNumSpecial + static_cast<int>((changed[j] - pf::kNumSpecial + 1) % 12);
    const auto a = pf::forward_log_probs(m, src, tgt);
    const auto b = pf::forward_log_probs(m, src, changed);
    for (std::size_t i = 0; i < j; ++i)
      for (std::size_t c = 0; c < a.cols(); ++c) REQUIRE(a(i, c) == b(i, c));
  }
}

TEST_CASE("incremental decoding matches the full pass bit for bit") {
  const auto m = to_float(pftest::micro_model(16, 8, 2, 8));
  const std::vector<int> src = {4, 9, 11, 2};
  const std::vector<int> tgt = {1, 7, 5, 13, 6};
  const auto full = pf::forward_log_probs(m, src, tgt);
  pf::IncrementalDecoder<float> dec(m, src);
  auto state = dec.start();
  for (std::size_t i = 0; i < tgt.size(); ++i) {
    const auto row = dec.step(state, tgt[i]);
    for (std::size_t c = 0; c < row.size(); ++c) REQUIRE(row[c] == full(i, c));
  }
}

TEST_CASE("finite differences agree with analytic gradients") {
  auto m = pftest::micro_model(16, 8, 1, 12);
  const auto batch = batch_of({{{4, 5, 6}, {7, 8}}, {{9, 10}, {11, 12, 13}}});
  pf::loss_and_gradients(m, batch);
  std::vector<pf::Matrix<double>> analytic;
  for (const auto& p : m.parameters()) analytic.push_back(p.grad);
  const double eps = 1e-4;
  pf::Rng rng(3);
  for (std::size_t k = 0; k < m.parameters().size(); ++k) {
    auto& values = m.parameters()[k].value.storage();
    // A handful of entries per tensor; the acceptance suite checks them all.
    for (int probe = 0; probe < 4; ++probe) {
      const std::size_t i = rng.below(values.size());
      const double keep = values[i];
      values[i] = keep + eps;
      const double up = pf::evaluate_loss(m, batch).loss;
      values[i] = keep - eps;
      const double down = pf::evaluate_loss(m, batch).loss;
      values[i] = keep;
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic[k].storage()[i];
      INFO(m.parameters()[k].name << "[" << i << "]");
      CHECK(std::abs(a - numeric) <= 1e-3 * std::max({std::abs(a), std::abs(numeric), 1e-4}));
    }
  }
}

TEST_CASE("per-example losses do not depend on batch company") {
  const auto m = to_float(pftest::micro_model(16, 8, 2, 14));
  const pf::Example a{{4, 5, 6, 7, 8}, {9, 10}};
  const pf::Example b{{11}, {12, 13, 14, 15}};
  const auto both = pf::evaluate_loss(m, batch_of({a, b}));
  const auto only_a = pf::evaluate_loss(m, batch_of({a}));
  const auto only_b = pf::evaluate_loss(m, batch_of({b}));
  CHECK(std::abs(both.per_example_nll[0] - only_a.per_example_nll[0]) < 1e-6);
  CHECK(std::abs(both.per_example_nll[1] - only_b.per_example_nll[0]) < 1e-6);
  CHECK(both.tokens == only_a.tokens + only_b.tokens);
}

TEST_CASE("pad content is masked") {
  const auto m = to_float(pftest::micro_model(16, 8, 1, 15));
  auto batch = batch_of({{{4, 5}, {6}}, {{7}, {8, 9, 10, 11}}});
  const double before = pf::evaluate_loss(m, batch).loss;
  for (std::size_t i = 0; i < batch.target_out.size(); ++i)
    if (!batch.target_mask[i]) {
      batch.target_out[i] = 12;
      batch.target_in[i] = 13;
    }
  for (std::size_t i = 0; i < batch.source.size(); ++i)
    if (!batch.source_mask[i]) batch.source[i] = 14;
  CHECK(pf::evaluate_loss(m, batch).loss == before);
}

TEST_CASE("a certain prediction costs nothing") {
  auto m = pftest::micro_model(8, 8, 1, 16);
  for (auto& x : m.parameter("output.weight").value.storage()) x = 0;
  auto& bias = m.parameter("output.bias").value;
  for (auto& x : bias.storage()) x = 0;
  bias(0, pf::kEosId) = 1e4;
  CHECK(pf::evaluate_loss(m, batch_of({{{4, 5}, {}}})).loss == 0.0);
}

TEST_CASE("bad ids and non-finite weights") {
  auto m = pftest::micro_model(8, 8, 1, 17);
  CHECK_THROWS_AS(pf::forward(m, std::vector<int>{4, 8}, std::vector<int>{1}), pf::DataError);
  CHECK_THROWS_AS(pf::forward(m, std::vector<int>{4}, std::vector<int>{-1}), pf::DataError);
  // After the ReLU, so the NaN cannot be clipped away.
  m.parameter("encoder.0.ff.b2").value(0, 0) = std::nan("");
  try {
    pf::forward(m, std::vector<int>{4, 2}, std::vector<int>{1});
    FAIL("expected an error");
  } catch (const pf::InvariantError& e) {
    CHECK(std::string(e.what()).find("encoder layer 0") != std::string::npos);
  }
}

TEST_CASE("config validation") {
  pf::ModelConfig c;
  c.vocab_size = 10;
  c.d_model = 10;
  c.n_heads = 4;
  CHECK_THROWS_AS(c.validate(), pf::ConfigError);
  c.d_model = 8;
  c.d_ff = 16;
  CHECK_NOTHROW(c.validate());
  c.vocab_size = 4;
  CHECK_THROWS_AS(c.validate(), pf::ConfigError);
}
