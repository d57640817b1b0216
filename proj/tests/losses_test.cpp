#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "rgan/gradcheck.hpp"
#include "rgan/losses.hpp"
#include "rgan/nn.hpp"

#include <random>

using namespace rgan;
using T = Tensor<double>;

namespace {

T randu(Shape shape, unsigned seed) {
  T t(std::move(shape));
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (long i = 0; i < t.size(); ++i) t.val()[i] = d(rng);
  return t;
}

MapFn<double> identity_fn() {
  return [](const T& x) { return add_scalar(x, 0.0); };
}

TripletBatch<double> triplet(T a, T b, T c) {
  return TripletBatch<double>{std::move(a), std::move(b), std::move(c)};
}

}  // namespace

TEST_CASE("regression loss hand values") {
  auto x = randu({2, 3}, 1);
  CHECK(regression_loss(x, x).item() == 0.0);
  CHECK(regression_loss(T::from({2}, {1, 0}), T::from({2}, {2, 1})).item() ==
        doctest::Approx(1.0));
  // homogeneity: scaling the residual by c scales the loss by c^2
  auto a = randu({4}, 2), b = randu({4}, 3);
  auto scaled = add(b, scale(sub(a, b), 3.0));
  CHECK(regression_loss(scaled, b).item() ==
        doctest::Approx(9.0 * regression_loss(a, b).item()));
}

TEST_CASE("adversarial loss hand values") {
  SUBCASE("least squares, perfect discriminator -> 0") {
    MapFn<double> d = [](const T& x) { return x; };  // logits = input
    auto loss = adversarial_loss(d, T::full({1, 1, 1, 1}, 1.0), T::zeros({1, 1, 1, 1}),
                                 AdvMode::LeastSquares, AdvSide::Discriminator);
    CHECK(loss.item() == doctest::Approx(0.0));
  }
  SUBCASE("log mode at sigmoid 0.5 -> 2 ln 2") {
    MapFn<double> d = [](const T& x) { return T::zeros(x.shape()); };
    auto loss = adversarial_loss(d, T::full({1, 1, 1, 1}, 0.3), T::full({1, 1, 1, 1}, 0.7),
                                 AdvMode::Log, AdvSide::Discriminator);
    CHECK(loss.item() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
  }
  SUBCASE("least squares generator side at D(fake)=0.5 -> 0.25") {
    MapFn<double> d = [](const T& x) { return T::full({1, 1, 1, 1}, 0.5); };
    auto loss = adversarial_loss(d, T(), T::full({1, 1, 1, 1}, 0.0), AdvMode::LeastSquares,
                                 AdvSide::Generator);
    CHECK(loss.item() == doctest::Approx(0.25));
  }
  SUBCASE("empty batch rejected") {
    MapFn<double> d = [](const T& x) { return x; };
    CHECK_THROWS_AS(adversarial_loss(d, T(), T(), AdvMode::LeastSquares, AdvSide::Generator),
                    std::invalid_argument);
  }
}

TEST_CASE("cycle loss hand values") {
  auto x = T::from({2}, {0.1, 0.2});
  CHECK(cycle_loss<double>(identity_fn(), identity_fn(), x).item() == 0.0);

  MapFn<double> dbl = [](const T& v) { return scale(v, 2.0); };
  MapFn<double> half = [](const T& v) { return scale(v, 0.5); };
  CHECK(cycle_loss<double>(half, dbl, x).item() == doctest::Approx(0.0));

  MapFn<double> plus1 = [](const T& v) { return add_scalar(v, 1.0); };
  CHECK(cycle_loss<double>(identity_fn(), plus1, x).item() == doctest::Approx(1.0));
}

TEST_CASE("recurrent loss hand values") {
  PredictFn<double> second = [](const T&, const T& b) { return add_scalar(b, 0.0); };
  auto c = T::full({1, 1, 1, 2}, 0.3);
  CHECK(recurrent_loss<double>(second, triplet(c, c, c)).item() == 0.0);

  PredictFn<double> zero = [](const T& a, const T&) { return T::zeros(a.shape()); };
  auto tr = triplet(T::zeros({2}), T::zeros({2}), T::full({2}, 1.0));
  CHECK(recurrent_loss<double>(zero, tr).item() == doctest::Approx(1.0));
}

TEST_CASE("recycle loss hand values") {
  PredictFn<double> mean2 = [](const T& a, const T& b) { return scale(add(a, b), 0.5); };
  // single-pixel frames (0, 0, 1), identity generators, P = mean of inputs
  auto tr = triplet(T::zeros({1}), T::zeros({1}), T::full({1}, 1.0));
  CHECK(recycle_loss<double>(identity_fn(), identity_fn(), mean2, tr).item() ==
        doctest::Approx(1.0));

  PredictFn<double> second = [](const T&, const T& b) { return add_scalar(b, 0.0); };
  auto c = T::full({3}, -0.4);
  CHECK(recycle_loss<double>(identity_fn(), identity_fn(), second, triplet(c, c, c)).item() ==
        0.0);
}

TEST_CASE("recycle loss with identity generators equals recurrent loss") {
  std::mt19937 rng(77);
  PredictFn<double> blend = [](const T& a, const T& b) {
    return add(scale(a, 0.3), scale(b, 0.6));
  };
  for (int i = 0; i < 10; ++i) {
    auto tr = triplet(randu({2, 1, 3, 3}, 900 + i), randu({2, 1, 3, 3}, 950 + i),
                      randu({2, 1, 3, 3}, 990 + i));
    const double r1 = recycle_loss<double>(identity_fn(), identity_fn(), blend, tr).item();
    const double r2 = recurrent_loss<double>(blend, tr).item();
    CHECK(std::abs(r1 - r2) < 1e-12);
  }
}

namespace {

TranslationModel<double> toy_model(double gx_scale, double gy_scale) {
  TranslationModel<double> m;
  m.g_x = [=](const T& v) { return scale(v, gx_scale); };
  m.g_y = [=](const T& v) { return scale(v, gy_scale); };
  m.d_x = [](const T& v) { return mean(v); };
  m.d_y = [](const T& v) { return mean(v); };
  m.p_x = [](const T&, const T& b) { return add_scalar(b, 0.0); };
  m.p_y = [](const T&, const T& b) { return add_scalar(b, 0.0); };
  return m;
}

}  // namespace

TEST_CASE("total objective composition") {
  auto bx = triplet(randu({1, 1, 2, 2}, 41), randu({1, 1, 2, 2}, 42), randu({1, 1, 2, 2}, 43));
  auto by = triplet(randu({1, 1, 2, 2}, 44), randu({1, 1, 2, 2}, 45), randu({1, 1, 2, 2}, 46));
  auto m = toy_model(0.9, 1.2);

  SUBCASE("zero weights leave only the adversarial terms") {
    LossWeights w;
    w.lambda_rx = w.lambda_ry = w.lambda_tau_x = w.lambda_tau_y = 0.0;
    LossReport r;
    total_objective(m, bx, by, w, false, AdvMode::LeastSquares, &r);
    CHECK(r.total == doctest::Approx(r.adv_x + r.adv_y).epsilon(1e-12));
  }

  SUBCASE("report total equals an independent weighted recomputation") {
    LossWeights w;
    w.lambda_rx = 3.0;
    w.lambda_ry = 5.0;
    w.lambda_tau_x = 7.0;
    w.lambda_tau_y = 11.0;
    w.lambda_cx = 13.0;
    w.lambda_cy = 17.0;
    LossReport r;
    total_objective(m, bx, by, w, true, AdvMode::LeastSquares, &r);
    const double recompute = r.adv_x + r.adv_y + w.lambda_rx * r.recycle_x +
                             w.lambda_ry * r.recycle_y + w.lambda_tau_x * r.recurrent_x +
                             w.lambda_tau_y * r.recurrent_y + w.lambda_cx * r.cycle_x +
                             w.lambda_cy * r.cycle_y;
    CHECK(std::abs(r.total - recompute) < 1e-12);
  }

  SUBCASE("all component losses zero gives total zero") {
    // identity everything and constant streams
    auto m0 = toy_model(1.0, 1.0);
    m0.d_x = [](const T& v) { return T::full({1}, 1.0); };  // LS generator optimum
    m0.d_y = [](const T& v) { return T::full({1}, 1.0); };
    auto c = T::full({1, 1, 2, 2}, 0.25);
    auto tr = triplet(c, c, c);
    LossReport r;
    total_objective(m0, tr, tr, LossWeights{}, true, AdvMode::LeastSquares, &r);
    CHECK(r.total == doctest::Approx(0.0));
  }

  SUBCASE("domain swap symmetry") {
    LossWeights w;
    w.lambda_rx = 2.0;
    w.lambda_ry = 4.0;
    w.lambda_tau_x = 6.0;
    w.lambda_tau_y = 8.0;
    LossReport r1;
    total_objective(m, bx, by, w, false, AdvMode::LeastSquares, &r1);

    TranslationModel<double> swapped;
    swapped.g_x = m.g_y;
    swapped.g_y = m.g_x;
    swapped.d_x = m.d_y;
    swapped.d_y = m.d_x;
    swapped.p_x = m.p_y;
    swapped.p_y = m.p_x;
    LossWeights ws;
    ws.lambda_rx = w.lambda_ry;
    ws.lambda_ry = w.lambda_rx;
    ws.lambda_tau_x = w.lambda_tau_y;
    ws.lambda_tau_y = w.lambda_tau_x;
    LossReport r2;
    total_objective(swapped, by, bx, ws, false, AdvMode::LeastSquares, &r2);
    CHECK(r1.total == doctest::Approx(r2.total).epsilon(1e-12));
  }
}

TEST_CASE("losses are nonnegative in least-squares mode") {
  std::mt19937 rng(3);
  for (int i = 0; i < 5; ++i) {
    auto bx = triplet(randu({1, 1, 2, 2}, 600 + i), randu({1, 1, 2, 2}, 610 + i),
                      randu({1, 1, 2, 2}, 620 + i));
    auto by = triplet(randu({1, 1, 2, 2}, 630 + i), randu({1, 1, 2, 2}, 640 + i),
                      randu({1, 1, 2, 2}, 650 + i));
    LossReport r;
    total_objective(toy_model(0.5 + 0.1 * i, 1.3 - 0.1 * i), bx, by, LossWeights{}, true,
                    AdvMode::LeastSquares, &r);
    for (double v : {r.adv_x, r.adv_y, r.recycle_x, r.recycle_y, r.recurrent_x, r.recurrent_y,
                     r.cycle_x, r.cycle_y, r.total})
      CHECK(v >= 0.0);
  }
}

TEST_CASE("loss gradients through small networks pass the finite-difference oracle") {
  GeneratorConfig gc;
  gc.input_channels = 1;
  gc.base_width = 2;
  gc.n_residual_blocks = 1;
  gc.image_size = 8;
  auto gx = init_generator<double>(gc, 1);
  auto gy = init_generator<double>(gc, 2);
  PredictorConfig pc;
  pc.frame_channels = 1;
  pc.base_width = 2;
  pc.image_size = 8;
  auto py = init_predictor<double>(pc, 3);
  auto tr = triplet(randu({1, 1, 8, 8}, 71), randu({1, 1, 8, 8}, 72), randu({1, 1, 8, 8}, 73));

  auto loss_for = [&](NetworkParams<double>& net, const std::string& pname) {
    return [&, pname](const T& point) {
      auto saved = net.at(pname);
      net.at(pname) = point;
      MapFn<double> fx = [&](const T& v) { return generator_forward(gx, gc, v); };
      MapFn<double> fy = [&](const T& v) { return generator_forward(gy, gc, v); };
      PredictFn<double> fp = [&](const T& a, const T& b) {
        return predictor_forward(py, pc, a, b);
      };
      auto out = recycle_loss(fx, fy, fp, tr);
      net.at(pname) = saved;
      return out;
    };
  };

  for (auto& [net, pname] : std::vector<std::pair<NetworkParams<double>*, std::string>>{
           {&gx, "d1.k"}, {&gy, "c0.k"}, {&gy, "r0a.g"}, {&py, "e1.k"}, {&py, "u0.b"}}) {
    INFO(pname);
    std::function<T(const T&)> f = loss_for(*net, pname);
    CHECK(finite_difference_check<double>(f, net->at(pname).clone(), 1e-5) < 1e-4);
  }
}
