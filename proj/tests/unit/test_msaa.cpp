#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "osmid/core/rng.hpp"
#include "osmid/fusion/msaa.hpp"

using namespace osmid;
using namespace osmid::fusion;

namespace {
Tensor randn(std::vector<int> shape, uint64_t seed) {
  return normal_tensor(std::move(shape), seed);
}
}  // namespace

TEST_CASE("identity-initialized head on the unified scale is a no-op") {
  nn::ParamStore ps;
  MsaaFusion m = MsaaFusion::make(ps, "m", 1, 4, 4, 1);
  m.heads()[0].init_identity();
  ad::Tape tape;
  Tensor in = randn({8, 8, 4}, 1);
  auto aligned = m.project_and_align(tape, {ad::constant(tape, in)}, {4}, 32, 32);
  for (int64_t i = 0; i < in.numel(); ++i)
    CHECK(aligned[0].value()[i] == doctest::Approx(in[i]).epsilon(1e-6));
}

TEST_CASE("channel mismatch across levels is rejected") {
  nn::ParamStore ps;
  MsaaFusion m = MsaaFusion::make(ps, "m", 2, 4, 4, 1);
  ad::Tape tape;
  std::vector<ad::Var> levels = {ad::constant(tape, randn({8, 8, 4}, 2)),
                                 ad::constant(tape, randn({16, 16, 5}, 3))};
  CHECK_THROWS_AS(m.project_and_align(tape, levels, {4, 2}, 32, 32),
                  std::invalid_argument);
}

TEST_CASE("aggregate: softmax weights and convex combination") {
  nn::ParamStore ps;
  MsaaFusion m = MsaaFusion::make(ps, "m", 2, 3, 4, 4);
  ad::Tape tape;
  Tensor a = randn({4, 4, 3}, 4), b = randn({4, 4, 3}, 5);
  // w = (0,0) -> elementwise mean
  auto [fused, beta] = m.aggregate(tape, {ad::constant(tape, a), ad::constant(tape, b)});
  CHECK(beta.value()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(beta.value()[1] == doctest::Approx(0.5).epsilon(1e-12));
  for (int64_t i = 0; i < a.numel(); ++i)
    CHECK(fused.value()[i] == doctest::Approx(0.5 * (a[i] + b[i])).epsilon(1e-12));

  // w = (ln2, 0) -> beta = (2/3, 1/3)
  m.scale_logits().value[0] = std::log(2.0);
  ad::Tape tape2;
  auto [f2, beta2] = m.aggregate(tape2, {ad::constant(tape2, a), ad::constant(tape2, b)});
  CHECK(beta2.value()[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  CHECK(beta2.value()[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("aggregate rejects empty input") {
  nn::ParamStore ps;
  MsaaFusion m = MsaaFusion::make(ps, "m", 2, 3, 4, 5);
  ad::Tape tape;
  CHECK_THROWS_AS(m.aggregate(tape, {}), std::invalid_argument);
}

TEST_CASE("beta sums to one and stays positive under extreme logits") {
  nn::ParamStore ps;
  MsaaFusion m = MsaaFusion::make(ps, "m", 3, 2, 4, 6);
  for (double extreme : {-50.0, 0.0, 50.0}) {
    m.scale_logits().value[0] = extreme;
    m.scale_logits().value[1] = -extreme;
    m.scale_logits().value[2] = extreme / 2;
    ad::Tape tape;
    std::vector<ad::Var> maps = {ad::constant(tape, randn({2, 2, 2}, 7)),
                                 ad::constant(tape, randn({2, 2, 2}, 8)),
                                 ad::constant(tape, randn({2, 2, 2}, 9))};
    auto [fused, beta] = m.aggregate(tape, maps);
    double sum = 0;
    for (int i = 0; i < 3; ++i) {
      CHECK(beta.value()[i] > 0.0);
      sum += beta.value()[i];
    }
    CHECK(std::fabs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("softmax shift invariance of beta") {
  nn::ParamStore ps;
  MsaaFusion m = MsaaFusion::make(ps, "m", 3, 2, 4, 10);
  m.scale_logits().value = Tensor({3}, {0.3, -1.2, 2.0});
  ad::Tape t1;
  std::vector<ad::Var> maps1 = {ad::constant(t1, randn({2, 2, 2}, 11)),
                                ad::constant(t1, randn({2, 2, 2}, 12)),
                                ad::constant(t1, randn({2, 2, 2}, 13))};
  auto [f1, b1] = m.aggregate(t1, maps1);
  std::vector<double> base = b1.value().data;

  for (double c : {-3.0, 7.5}) {
    nn::ParamStore ps2;
    MsaaFusion m2 = MsaaFusion::make(ps2, "m", 3, 2, 4, 10);
    m2.scale_logits().value = Tensor({3}, {0.3 + c, -1.2 + c, 2.0 + c});
    ad::Tape t2;
    std::vector<ad::Var> maps2 = {ad::constant(t2, randn({2, 2, 2}, 11)),
                                  ad::constant(t2, randn({2, 2, 2}, 12)),
                                  ad::constant(t2, randn({2, 2, 2}, 13))};
    auto [f2, b2] = m2.aggregate(t2, maps2);
    for (int i = 0; i < 3; ++i) CHECK(std::fabs(b2.value()[i] - base[static_cast<size_t>(i)]) < 1e-9);
  }
}

TEST_CASE("aggregate is linear in each aligned map for fixed w") {
  nn::ParamStore ps;
  MsaaFusion m = MsaaFusion::make(ps, "m", 2, 2, 4, 14);
  m.scale_logits().value = Tensor({2}, {0.7, -0.2});
  Tensor a = randn({3, 3, 2}, 15), b = randn({3, 3, 2}, 16), d = randn({3, 3, 2}, 17);
  auto fuse = [&](const Tensor& x, const Tensor& y) {
    ad::Tape t;
    auto [f, beta] = m.aggregate(t, {ad::constant(t, x), ad::constant(t, y)});
    return f.value();
  };
  Tensor f_a = fuse(a, b);
  Tensor ad_plus = a;
  for (int64_t i = 0; i < a.numel(); ++i) ad_plus[i] = a[i] + 2.0 * d[i];
  Tensor f_ad = fuse(ad_plus, b);
  Tensor f_d = fuse(d, Tensor::zeros({3, 3, 2}));
  for (int64_t i = 0; i < a.numel(); ++i)
    CHECK(f_ad[i] == doctest::Approx(f_a[i] + 2.0 * f_d[i]).epsilon(1e-9));
}

TEST_CASE("fused-map gradient wrt scale logits matches finite differences") {
  nn::ParamStore ps;
  MsaaFusion m = MsaaFusion::make(ps, "m", 3, 2, 4, 18);
  std::vector<Tensor> maps = {randn({3, 3, 2}, 19), randn({3, 3, 2}, 20),
                              randn({3, 3, 2}, 21)};
  Tensor probe = randn({3, 3, 2}, 22);

  auto fn = [&](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) {
    m.scale_logits().value = xs[0];
    ad::Tape tape;
    std::vector<ad::Var> lv;
    for (const auto& mp : maps) lv.push_back(ad::constant(tape, mp));
    auto [fused, beta] = m.aggregate(tape, lv);
    ad::Var loss = ad::mean_all(ad::mul(fused, ad::constant(tape, probe)));
    const double v = loss.scalar();
    if (grads) {
      tape.backward(loss);
      grads->assign(1, tape.grad_buf(tape.binding(&m.scale_logits()).id));
    }
    return v;
  };
  auto res = osmid::testing::check_gradients(fn, {Tensor({3}, {0.5, -0.3, 0.1})}, 1e-4);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("cbam: shape, gate range, constant-input symmetry") {
  nn::ParamStore ps;
  CbamRefine cb = CbamRefine::make(ps, "c", 8, 4, 23);
  ad::Tape tape;
  Tensor in = randn({6, 5, 8}, 24);
  auto g = cb.refine(tape, ad::constant(tape, in));
  CHECK(g.out.shape() == std::vector<int>{6, 5, 8});
  for (double v : g.channel_gate.value().data) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  for (double v : g.spatial_gate.value().data) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }

  // constant per channel -> spatially constant spatial-attention map
  Tensor cpc({6, 5, 8});
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 5; ++x)
      for (int c = 0; c < 8; ++c) cpc.at3(y, x, c) = 0.1 * c - 0.3;
  ad::Tape tape2;
  auto g2 = cb.refine(tape2, ad::constant(tape2, cpc));
  const double first = g2.spatial_gate.value()[0];
  for (double v : g2.spatial_gate.value().data)
    CHECK(v == doctest::Approx(first).epsilon(1e-9));
}

TEST_CASE("end-to-end msaa+cbam gradient matches finite differences") {
  nn::ParamStore ps;
  MsaaFusion m = MsaaFusion::make(ps, "m", 3, 4, 2, 25);
  CbamRefine cb = CbamRefine::make(ps, "c", 4, 2, 26);
  std::vector<Tensor> levels = {randn({2, 2, 4}, 27), randn({4, 4, 4}, 28),
                                randn({8, 8, 4}, 29)};
  Tensor probe = randn({4, 4, 4}, 30);

  // differentiate wrt scale logits and the first head's kernel jointly
  auto fn = [&](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) {
    m.scale_logits().value = xs[0];
    m.heads()[0].w->value = xs[1];
    ad::Tape tape;
    std::vector<ad::Var> lv;
    for (const auto& mp : levels) lv.push_back(ad::constant(tape, mp));
    auto aligned = m.project_and_align(tape, lv, {4, 2, 1}, 8, 8);
    auto [fused, beta] = m.aggregate(tape, aligned);
    auto gates = cb.refine(tape, fused);
    ad::Var loss = ad::mean_all(ad::mul(gates.out, ad::constant(tape, probe)));
    const double v = loss.scalar();
    if (grads) {
      tape.backward(loss);
      grads->clear();
      grads->push_back(tape.grad_buf(tape.binding(&m.scale_logits()).id));
      grads->push_back(tape.grad_buf(tape.binding(m.heads()[0].w).id));
    }
    return v;
  };
  Tensor w0({3}, {0.2, -0.1, 0.4});
  Tensor k0 = m.heads()[0].w->value;
  auto res = osmid::testing::check_gradients(fn, {w0, k0}, 1e-4);
  CHECK(res.max_rel_err < 1e-3);
}
