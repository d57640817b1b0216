#pragma once

// Self-contained numerical verification suite, all at 64-bit precision:
// finite-difference gradient checks for every primitive and each network
// family, conv/conv-transpose adjointness, loss zero-identities, and the
// discriminator receptive-field probe. Each check reports a name and the
// measured value so failures are directly actionable.

#include "rgan/eval.hpp"
#include "rgan/gradcheck.hpp"

#include <iomanip>

namespace rgan {

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0;      // measured error / probe value
  double threshold = 0;  // bound it was held to
};

struct VerifyOptions {
  bool corrupt_gradient = false;  // test hook: inject one wrong backward
};

namespace detail {

inline Tensor<double> random_point(Shape shape, unsigned seed, double scale = 0.5) {
  Tensor<double> t(std::move(shape));
  std::mt19937 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  for (long i = 0; i < t.size(); ++i) t.val()[i] = dist(rng);
  return t;
}

}  // namespace detail

inline std::vector<CheckResult> run_verification(const VerifyOptions& opts = {}) {
  using T = Tensor<double>;
  std::vector<CheckResult> results;
  auto grad_check_eps = [&](const std::string& name, const std::function<T(const T&)>& f,
                            const T& point, double eps) {
    const double err = finite_difference_check<double>(f, point, eps);
    results.push_back({"grad/" + name, err < 1e-4, err, 1e-4});
  };
  auto grad_check = [&](const std::string& name, const std::function<T(const T&)>& f,
                        const T& point) { grad_check_eps(name, f, point, 1e-5); };
  // deep compositions have large third derivatives, so the central-difference
  // truncation term dominates; a smaller step keeps it well under the bound
  auto grad_check_net = [&](const std::string& name, const std::function<T(const T&)>& f,
                            const T& point) { grad_check_eps(name, f, point, 1e-6); };

  // ---- primitives ----
  auto p1 = detail::random_point({2, 3}, 101);
  auto p2 = detail::random_point({2, 3}, 102);
  grad_check("add", [&](const T& x) { return sum(add(x, p2)); }, p1);
  grad_check("sub", [&](const T& x) { return sum(sub(p2, x)); }, p1);
  grad_check("mul", [&](const T& x) { return sum(mul(x, p2)); }, p1);
  grad_check("scale", [&](const T& x) { return sum(scale(x, 1.7)); }, p1);
  grad_check("add_scalar", [&](const T& x) { return sum(add_scalar(x, 0.3)); }, p1);
  grad_check("relu", [&](const T& x) { return sum(relu(x)); },
             detail::random_point({3, 4}, 103));
  grad_check("leaky_relu", [&](const T& x) { return sum(leaky_relu(x, 0.2)); },
             detail::random_point({3, 4}, 104));
  grad_check("tanh", [&](const T& x) { return sum(tanh(x)); }, p1);
  grad_check("sigmoid", [&](const T& x) { return sum(sigmoid(x)); }, p1);
  grad_check("log_clamped",
             [&](const T& x) { return sum(log_clamped(sigmoid(x))); }, p1);
  grad_check("mean", [&](const T& x) { return mean(mul(x, x)); }, p1);
  grad_check("mse", [&](const T& x) { return mse(x, p2); }, p1);
  grad_check("concat_channels", [&](const T& x) {
    auto other = T::full({1, 2, 2, 2}, 0.25);
    return sum(mul(concat_channels(x, other), concat_channels(other, x)));
  }, detail::random_point({1, 2, 2, 2}, 105));
  grad_check("resize_nearest", [&](const T& x) {
    return sum(mul(resize(x, 4, 4, ResizeMode::Nearest),
                   resize(x, 4, 4, ResizeMode::Nearest)));
  }, detail::random_point({1, 2, 2, 2}, 106));
  grad_check("resize_bilinear", [&](const T& x) {
    return sum(mul(resize(x, 3, 5, ResizeMode::Bilinear),
                   resize(x, 3, 5, ResizeMode::Bilinear)));
  }, detail::random_point({1, 2, 2, 2}, 107));
  {
    auto gain = T::full({2}, 1.3);
    auto bias = T::full({2}, -0.2);
    auto partner = detail::random_point({1, 2, 3, 3}, 109);
    grad_check("instance_norm", [&](const T& x) {
      return sum(mul(instance_norm(x, gain, bias), partner));
    }, detail::random_point({1, 2, 3, 3}, 108));
  }
  {
    auto k = detail::random_point({2, 3, 3, 3}, 110);
    auto b = detail::random_point({2}, 111);
    auto x0 = detail::random_point({1, 3, 5, 5}, 112);
    grad_check("conv2d_input",
               [&](const T& x) { return sum(mul(conv2d(x, k, b, 1, 1), conv2d(x, k, b, 1, 1))); },
               x0);
    grad_check("conv2d_kernel",
               [&](const T& kk) { return mean(mul(conv2d(x0, kk, b, 2, 1), conv2d(x0, kk, b, 2, 1))); },
               k);
    grad_check("conv2d_bias", [&](const T& bb) { return mean(mul(conv2d(x0, k, bb, 1, 1), conv2d(x0, k, bb, 1, 1))); }, b);
  }
  {
    auto k = detail::random_point({3, 2, 4, 4}, 113);
    auto b = detail::random_point({2}, 114);
    auto x0 = detail::random_point({1, 3, 3, 3}, 115);
    grad_check("conv_transpose2d_input", [&](const T& x) {
      return mean(mul(conv_transpose2d(x, k, b, 2, 1), conv_transpose2d(x, k, b, 2, 1)));
    }, x0);
    grad_check("conv_transpose2d_kernel", [&](const T& kk) {
      return mean(mul(conv_transpose2d(x0, kk, b, 2, 1), conv_transpose2d(x0, kk, b, 2, 1)));
    }, k);
  }

  // ---- network families, end to end ----
  {
    GeneratorConfig gc;
    gc.base_width = 2;
    gc.n_residual_blocks = 1;
    gc.image_size = 8;
    auto params = init_generator<double>(gc, 7);
    auto x0 = detail::random_point({1, 3, 8, 8}, 116);
    grad_check_net("generator_input", [&](const T& x) {
      auto o = generator_forward(params, gc, x);
      return mean(mul(o, o));
    }, x0);
    auto probe = [&](const char* pname) {
      grad_check_net(std::string("generator_param_") + pname, [&, pname](const T& w) {
        T saved = params.at(pname);
        params.at(pname) = w;
        auto o = generator_forward(params, gc, x0);
        params.at(pname) = saved;
        return mean(mul(o, o));
      }, params.at(pname).clone());
    };
    probe("c0.k");
    probe("r0a.k");
    probe("u1.k");
    probe("out.b");
  }
  {
    DiscriminatorConfig dc;
    dc.base_width = 2;
    dc.n_stride2_layers = 2;
    auto params = init_discriminator<double>(dc, 8);
    auto x0 = detail::random_point({1, 3, 16, 16}, 117);
    grad_check_net("discriminator_input", [&](const T& x) {
      auto o = discriminator_forward(params, dc, x);
      return mean(mul(o, o));
    }, x0);
    grad_check_net("discriminator_param_l0.k", [&](const T& ww) {
      T saved = params.at("l0.k");
      params.at("l0.k") = ww;
      auto o = discriminator_forward(params, dc, x0);
      params.at("l0.k") = saved;
      return mean(mul(o, o));
    }, params.at("l0.k").clone());
  }
  {
    PredictorConfig pc;
    pc.base_width = 2;
    pc.image_size = 8;
    auto params = init_predictor<double>(pc, 9);
    auto a = detail::random_point({1, 3, 8, 8}, 118);
    auto b = detail::random_point({1, 3, 8, 8}, 119);
    grad_check_net("predictor_input", [&](const T& x) {
      auto o = predictor_forward(params, pc, x, b);
      return mean(mul(o, o));
    }, a);
    grad_check_net("predictor_param_e0.k", [&](const T& ww) {
      T saved = params.at("e0.k");
      params.at("e0.k") = ww;
      auto o = predictor_forward(params, pc, a, b);
      params.at("e0.k") = saved;
      return mean(mul(o, o));
    }, params.at("e0.k").clone());
  }

  // ---- conv / conv-transpose adjointness ----
  {
    double worst = 0;
    const int cases[][7] = {
        {1, 2, 6, 6, 3, 1, 1}, {2, 3, 8, 8, 4, 2, 1}, {1, 1, 5, 5, 3, 2, 0},
        {1, 2, 8, 8, 2, 2, 0}, {2, 2, 7, 7, 3, 1, 0}};
    int idx = 0;
    for (const auto& c : cases) {
      const int n = c[0], ch = c[1], h = c[2], w = c[3], k = c[4], s = c[5], p = c[6];
      const int f = 3;
      auto x = detail::random_point({n, ch, h, w}, 200 + idx);
      auto kern = detail::random_point({f, ch, k, k}, 300 + idx);
      auto zb_f = T::zeros({f});
      auto zb_c = T::zeros({ch});
      auto y_shape = conv2d(x, kern, zb_f, s, p).shape();
      auto y = detail::random_point(y_shape, 400 + idx);
      const double lhs = (conv2d(x, kern, zb_f, s, p).val() * y.val()).sum();
      const double rhs = (x.val() * conv_transpose2d(y, kern, zb_c, s, p).val()).sum();
      const double scale_ref = std::max({std::abs(lhs), std::abs(rhs), 1.0});
      worst = std::max(worst, std::abs(lhs - rhs) / scale_ref);
      ++idx;
    }
    results.push_back({"adjointness/conv_pairs", worst < 1e-10, worst, 1e-10});
  }

  // ---- loss zero-identities ----
  {
    auto x = detail::random_point({2, 3, 4, 4}, 500);
    MapFn<double> id = [](const T& v) { return v; };
    MapFn<double> twice = [](const T& v) { return scale(v, 2.0); };
    MapFn<double> half = [](const T& v) { return scale(v, 0.5); };
    const double cyc_inv = cycle_loss(half, twice, x).item();
    results.push_back({"loss/cycle_zero_for_inverse_pair", cyc_inv == 0.0, cyc_inv, 0.0});

    TripletBatch<double> trip{detail::random_point({2, 3, 4, 4}, 501),
                              detail::random_point({2, 3, 4, 4}, 502),
                              detail::random_point({2, 3, 4, 4}, 503)};
    PredictFn<double> perfect = [&](const T&, const T&) { return trip.next; };
    const double rec_zero = recycle_loss(id, id, perfect, trip).item();
    results.push_back({"loss/recycle_zero_for_perfect_predictor", rec_zero == 0.0, rec_zero, 0.0});

    PredictFn<double> blend = [](const T& a, const T& b) {
      return add(scale(a, 0.4), scale(b, 0.6));
    };
    const double diff = std::abs(recycle_loss(id, id, blend, trip).item() -
                                 recurrent_loss(blend, trip).item());
    results.push_back({"loss/recycle_equals_recurrent_under_identity", diff < 1e-12, diff, 1e-12});

    // linearity: doubling all weights doubles the weighted (non-adversarial) part
    TranslationModel<double> m;
    m.g_x = twice;
    m.g_y = half;
    m.d_x = m.d_y = [](const T& v) { return mean(v); };
    m.p_x = m.p_y = blend;
    TripletBatch<double> ty{detail::random_point({2, 3, 4, 4}, 504),
                            detail::random_point({2, 3, 4, 4}, 505),
                            detail::random_point({2, 3, 4, 4}, 506)};
    LossWeights w1, w2, w0;
    w2.lambda_rx *= 2; w2.lambda_ry *= 2; w2.lambda_tau_x *= 2; w2.lambda_tau_y *= 2;
    w2.lambda_cx *= 2; w2.lambda_cy *= 2;
    w0.lambda_rx = w0.lambda_ry = w0.lambda_tau_x = w0.lambda_tau_y = 0;
    w0.lambda_cx = w0.lambda_cy = 0;
    const double t1 = total_objective(m, trip, ty, w1, true, AdvMode::LeastSquares).item();
    const double t2 = total_objective(m, trip, ty, w2, true, AdvMode::LeastSquares).item();
    const double t0 = total_objective(m, trip, ty, w0, true, AdvMode::LeastSquares).item();
    const double lin_err = std::abs((t2 - t0) - 2.0 * (t1 - t0)) /
                           std::max(std::abs(t2 - t0), 1.0);
    results.push_back({"loss/total_linear_in_weights", lin_err < 1e-12, lin_err, 1e-12});
  }

  // ---- receptive-field probe ----
  {
    DiscriminatorConfig dc;  // default 3-layer configuration
    const int rf = discriminator_receptive_field(dc);
    results.push_back({"probe/receptive_field", rf == 70, static_cast<double>(rf), 70.0});
  }

  // ---- optional negative hook: a backward pass that is deliberately wrong ----
  if (opts.corrupt_gradient) {
    auto point = detail::random_point({2, 2}, 600);
    std::function<T(const T&)> bad = [](const T& x) {
      T out = sum(mul(x, x));
      if (Tape<double>::current() && out.requires_grad()) {
        Tensor<double> xc = x;
        Tape<double>::current()->record([xc]() mutable {
          xc.grad() += 0.5;  // injected error
        });
      }
      return out;
    };
    const double err = finite_difference_check<double>(bad, point, 1e-5);
    results.push_back({"grad/corrupt_hook", err < 1e-4, err, 1e-4});
  }

  return results;
}

inline bool all_passed(const std::vector<CheckResult>& rs) {
  for (const auto& r : rs)
    if (!r.passed) return false;
  return true;
}

inline void print_verification(const std::vector<CheckResult>& rs, std::ostream& os) {
  for (const auto& r : rs)
    os << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(46) << r.name
       << " value=" << std::setprecision(6) << r.value << " bound=" << r.threshold << "\n";
  os << (all_passed(rs) ? "verification: all checks passed"
                        : "verification: FAILURES present")
     << " (" << rs.size() << " checks)\n";
}

}  // namespace rgan
