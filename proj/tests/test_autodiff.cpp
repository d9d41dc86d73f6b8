#include <doctest.h>

#include "ctrgan/autodiff.hpp"
#include "ctrgan/gradcheck.hpp"
#include "ctrgan/random.hpp"

using namespace ctrgan;
using ad::Var;

namespace {

Tensord randn(Rng& rng, std::vector<int> shape, double scale = 1.0) {
  Tensord t(shape);
  for (Eigen::Index i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return t;
}

// Checks one composed graph against finite differences.
template <typename BuildFn>
void check(const std::vector<std::vector<int>>& param_shapes, BuildFn build,
           double tol = 2e-6, uint64_t seed = 11) {
  Rng rng(seed);
  Tape<double> tape;
  std::vector<Var<double>> params;
  for (const auto& s : param_shapes) params.push_back(tape.parameter(randn(rng, s, 0.7)));
  auto rep = grad_check<double>(tape, params,
                                [&](Tape<double>& t) { return build(t, params); },
                                1e-4);
  CAPTURE(rep.worst_param);
  CAPTURE(rep.worst_index);
  CAPTURE(rep.worst_analytic);
  CAPTURE(rep.worst_numeric);
  CHECK(rep.max_rel_err <= tol);
  CHECK(rep.checked > 0);
}

}  // namespace

TEST_CASE("tape: persistent parameters survive reset, transient nodes do not") {
  Tape<double> tp;
  auto p = tp.parameter(Tensord::constant({2, 2}, 1.5));
  auto x = tp.input(Tensord::constant({2, 2}, 2.0));
  auto y = ad::mul(tp, p, x);
  CHECK(tp.size() == 3);
  CHECK(tp.value(y)[0] == doctest::Approx(3.0));
  tp.reset();
  CHECK(tp.size() == 1);
  CHECK(tp.value(p)[0] == doctest::Approx(1.5));
}

TEST_CASE("tape: backward accumulates into shared subgraphs") {
  // loss = mean(p*x) + mean(p*x) must give twice the single-use gradient.
  Tape<double> tp;
  auto p = tp.parameter(Tensord::constant({3}, 2.0));
  auto x = tp.input(Tensord::constant({3}, 5.0));
  auto prod = ad::mul(tp, p, x);
  auto loss = ad::add(tp, ad::mean_all(tp, prod), ad::mean_all(tp, prod));
  tp.backward(loss);
  for (int i = 0; i < 3; ++i)
    CHECK(tp.grad(p)[i] == doctest::Approx(2.0 * 5.0 / 3.0));
}

TEST_CASE("gradcheck: elementwise and activation ops") {
  check({{3, 4}, {3, 4}}, [](Tape<double>& t, const std::vector<Var<double>>& p) {
    auto s = ad::add(t, ad::mul(t, p[0], p[1]), ad::sub(t, p[0], p[1]));
    auto a = ad::leaky_relu(t, s, 0.2);
    auto b = ad::sigmoid(t, ad::scale(t, a, 0.7));
    auto c = ad::tanh_op(t, b);
    return ad::mean_all(t, c);
  });
}

TEST_CASE("gradcheck: matmul, transpose, linear") {
  check({{3, 4}, {4, 5}, {5}}, [](Tape<double>& t, const std::vector<Var<double>>& p) {
    auto y = ad::linear(t, p[0], p[1], p[2]);
    auto z = ad::matmul(t, ad::transpose2d(t, y), y);
    return ad::mean_all(t, z);
  });
}

TEST_CASE("gradcheck: softmax rows") {
  check({{4, 6}}, [](Tape<double>& t, const std::vector<Var<double>>& p) {
    auto y = ad::softmax_rows(t, p[0]);
    // weight rows asymmetrically so the Jacobian is fully exercised
    auto w = t.input(Tensord::constant({4, 6}, 1.0));
    for (Eigen::Index i = 0; i < 24; ++i) t.value_mut(w)[i] = 0.1 * double(i);
    return ad::mean_all(t, ad::mul(t, y, w));
  });
}

TEST_CASE("gradcheck: layernorm rows") {
  check({{5, 7}, {7}, {7}}, [](Tape<double>& t, const std::vector<Var<double>>& p) {
    auto y = ad::layernorm_rows(t, p[0], p[1], p[2]);
    auto s = ad::sigmoid(t, y);
    return ad::mean_all(t, s);
  }, 5e-6);
}

TEST_CASE("gradcheck: reshape, slices, concats") {
  check({{4, 6}, {2, 6}}, [](Tape<double>& t, const std::vector<Var<double>>& p) {
    auto top = ad::slice_rows(t, p[0], 0, 2);
    auto merged = ad::concat_rows<double>(t, {top, p[1]});
    auto left = ad::slice_cols(t, merged, 0, 3);
    auto right = ad::slice_cols(t, merged, 3, 3);
    auto wide = ad::concat_cols<double>(t, {right, left});
    auto flat = ad::reshape(t, wide, {2, 12});
    return ad::mean_all(t, ad::mul(t, flat, flat));
  });
}

TEST_CASE("gradcheck: conv2d with stride and padding") {
  check({{3, 2, 3, 3}, {3}, {2, 6, 6}},
        [](Tape<double>& t, const std::vector<Var<double>>& p) {
          auto y = ad::conv2d(t, p[2], p[0], p[1], 2, 1);
          return ad::mean_all(t, ad::mul(t, y, y));
        });
}

TEST_CASE("gradcheck: maxpool and upsample") {
  check({{2, 6, 6}}, [](Tape<double>& t, const std::vector<Var<double>>& p) {
    auto y = ad::maxpool2d(t, p[0], 2, 2);
    auto u = ad::upsample2d(t, y, 2);
    return ad::mse_to_const(t, u, 0.25);
  });
}

TEST_CASE("gradcheck: losses") {
  check({{3, 5}, {3, 5}}, [](Tape<double>& t, const std::vector<Var<double>>& p) {
    auto l1 = ad::l1_loss(t, p[0], p[1]);
    auto l2 = ad::mse_loss(t, p[0], p[1]);
    auto lc = ad::mse_to_const(t, p[0], 0.5);
    auto s = ad::sum_all(t, ad::mul(t, p[0], p[1]));
    return ad::weighted_sum<double>(t, {l1, l2, lc, s}, {0.3, 1.2, 0.8, 0.01});
  });
}

TEST_CASE("gradcheck: bce_with_logits") {
  check({{3, 3}}, [](Tape<double>& t, const std::vector<Var<double>>& p) {
    auto a = ad::bce_with_logits(t, p[0], 1.0);
    auto b = ad::bce_with_logits(t, p[0], 0.0);
    return ad::add(t, a, b);
  });
}

TEST_CASE("conv2d shapes follow the stride arithmetic") {
  Tape<float> tp;
  auto w = tp.parameter(Tensorf::zeros({8, 4, 3, 3}));
  auto b = tp.parameter(Tensorf::zeros({8}));
  auto x = tp.input(Tensorf::zeros({4, 64, 64}));
  auto y = ad::conv2d(tp, x, w, b, 2, 1);
  CHECK(tp.value(y).shape() == std::vector<int>{8, 32, 32});
  auto pooled = ad::maxpool2d(tp, y, 4, 4);
  CHECK(tp.value(pooled).shape() == std::vector<int>{8, 8, 8});
}

TEST_CASE("softmax rows are distributions") {
  Rng rng(3);
  Tape<double> tp;
  auto x = tp.input(randn(rng, {6, 9}, 2.0));
  auto y = ad::softmax_rows(tp, x);
  const auto m = tp.value(y).mat(6, 9);
  for (int i = 0; i < 6; ++i) {
    CHECK(m.row(i).minCoeff() >= 0.0);
    CHECK(m.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
}
