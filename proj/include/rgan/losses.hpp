#pragma once

// Objective terms for unpaired stream-to-stream translation: adversarial,
// cycle, recurrent (next-frame), recycle (translate-predict-translate-back),
// and their weighted combination. Everything is a pure differentiable
// function of callables, so networks and test doubles plug in alike.

#include "rgan/tensor.hpp"

#include <functional>

namespace rgan {

template <typename S>
using MapFn = std::function<Tensor<S>(const Tensor<S>&)>;
template <typename S>
using PredictFn = std::function<Tensor<S>(const Tensor<S>&, const Tensor<S>&)>;

enum class AdvMode { Log, LeastSquares };
enum class AdvSide { Discriminator, Generator };

struct LossWeights {
  double lambda_rx = 10.0;
  double lambda_ry = 10.0;
  double lambda_tau_x = 10.0;
  double lambda_tau_y = 10.0;
  double lambda_cx = 10.0;  // cycle terms, active only in the combined setting
  double lambda_cy = 10.0;

  void validate() const {
    for (double v : {lambda_rx, lambda_ry, lambda_tau_x, lambda_tau_y, lambda_cx, lambda_cy})
      if (!(v >= 0.0) || !std::isfinite(v))
        throw std::invalid_argument("loss weights must be finite and nonnegative");
  }
};

struct LossReport {
  double adv_x = 0, adv_y = 0;
  double recycle_x = 0, recycle_y = 0;
  double recurrent_x = 0, recurrent_y = 0;
  double cycle_x = 0, cycle_y = 0;
  double d_loss_x = 0, d_loss_y = 0;  // discriminator-phase losses, filled by the trainer
  bool include_cycle = false;
  double total = 0;

  static const char* csv_header() {
    return "step,adv_x,adv_y,recycle_x,recycle_y,recurrent_x,recurrent_y,cycle_x,cycle_y,"
           "d_x,d_y,total";
  }

  std::string csv_row(long step) const {
    std::ostringstream os;
    os.precision(17);
    os << step << ',' << adv_x << ',' << adv_y << ',' << recycle_x << ',' << recycle_y << ','
       << recurrent_x << ',' << recurrent_y << ',' << cycle_x << ',' << cycle_y << ','
       << d_loss_x << ',' << d_loss_y << ',' << total;
    return os.str();
  }
};

// consecutive frames of one stream, batched as [N,C,H,W] each
template <typename S>
struct TripletBatch {
  Tensor<S> prev, curr, next;

  void validate() const {
    if (!prev.defined() || !curr.defined() || !next.defined())
      throw std::invalid_argument("triplet batch is empty");
    if (prev.shape() != curr.shape() || curr.shape() != next.shape())
      throw std::invalid_argument("triplet frames disagree in shape");
  }
};

template <typename S>
Tensor<S> regression_loss(const Tensor<S>& pred, const Tensor<S>& target) {
  return mse(pred, target);
}

template <typename S>
Tensor<S> adversarial_loss(const MapFn<S>& discriminator, const Tensor<S>& reals,
                           const Tensor<S>& fakes, AdvMode mode, AdvSide side) {
  if (!fakes.defined() || fakes.size() == 0)
    throw std::invalid_argument("adversarial_loss: empty fake batch");
  if (side == AdvSide::Discriminator && (!reals.defined() || reals.size() == 0))
    throw std::invalid_argument("adversarial_loss: empty real batch");

  if (mode == AdvMode::LeastSquares) {
    if (side == AdvSide::Discriminator) {
      auto dr = discriminator(reals);
      auto df = discriminator(fakes);
      auto lr = mse(dr, Tensor<S>::full(dr.shape(), S(1)));
      auto lf = mse(df, Tensor<S>::zeros(df.shape()));
      return add(lr, lf);
    }
    auto df = discriminator(fakes);
    return mse(df, Tensor<S>::full(df.shape(), S(1)));
  }

  // log mode, Eq.-style minimax written as a minimized quantity; logits are
  // squashed through a sigmoid and patch-averaged
  if (side == AdvSide::Discriminator) {
    auto pr = sigmoid(discriminator(reals));
    auto pf = sigmoid(discriminator(fakes));
    auto lr = scale(mean(log_clamped(pr)), S(-1));
    auto one_minus = add_scalar(scale(pf, S(-1)), S(1));
    auto lf = scale(mean(log_clamped(one_minus)), S(-1));
    return add(lr, lf);
  }
  auto pf = sigmoid(discriminator(fakes));
  auto one_minus = add_scalar(scale(pf, S(-1)), S(1));
  return mean(log_clamped(one_minus));
}

template <typename S>
Tensor<S> cycle_loss(const MapFn<S>& g_back, const MapFn<S>& g_fwd, const Tensor<S>& batch) {
  if (!batch.defined() || batch.size() == 0)
    throw std::invalid_argument("cycle_loss: empty batch");
  return mse(batch, g_back(g_fwd(batch)));
}

template <typename S>
Tensor<S> recurrent_loss(const PredictFn<S>& predictor, const TripletBatch<S>& triplets) {
  triplets.validate();
  return mse(triplets.next, predictor(triplets.prev, triplets.curr));
}

template <typename S>
Tensor<S> recycle_loss(const MapFn<S>& g_back, const MapFn<S>& g_fwd,
                       const PredictFn<S>& predictor_other, const TripletBatch<S>& triplets) {
  triplets.validate();
  auto predicted = predictor_other(g_fwd(triplets.prev), g_fwd(triplets.curr));
  return mse(triplets.next, g_back(predicted));
}

template <typename S>
struct TranslationModel {
  MapFn<S> g_x, g_y;       // g_y: X->Y, g_x: Y->X
  MapFn<S> d_x, d_y;       // patch logits in each domain
  PredictFn<S> p_x, p_y;   // next-frame predictors per domain
};

// Generator/predictor-side combined objective:
//   adv(G_X,D_X) + adv(G_Y,D_Y)
//   + lambda_rx * recycle(G_X,G_Y,P_Y) + lambda_ry * recycle(G_Y,G_X,P_X)
//   + lambda_tx * recurrent(P_X) + lambda_ty * recurrent(P_Y)
//   [+ lambda_c * cycle terms when include_cycle]
template <typename S>
Tensor<S> total_objective(const TranslationModel<S>& m, const TripletBatch<S>& batch_x,
                          const TripletBatch<S>& batch_y, const LossWeights& w,
                          bool include_cycle, AdvMode mode, LossReport* report = nullptr) {
  w.validate();
  batch_x.validate();
  batch_y.validate();

  auto adv_x = adversarial_loss(m.d_x, batch_x.curr, m.g_x(batch_y.curr), mode,
                                AdvSide::Generator);
  auto adv_y = adversarial_loss(m.d_y, batch_y.curr, m.g_y(batch_x.curr), mode,
                                AdvSide::Generator);
  auto rec_x = recycle_loss(m.g_x, m.g_y, m.p_y, batch_x);
  auto rec_y = recycle_loss(m.g_y, m.g_x, m.p_x, batch_y);
  auto tau_x = recurrent_loss(m.p_x, batch_x);
  auto tau_y = recurrent_loss(m.p_y, batch_y);

  auto total = add(adv_x, adv_y);
  total = add(total, scale(rec_x, S(w.lambda_rx)));
  total = add(total, scale(rec_y, S(w.lambda_ry)));
  total = add(total, scale(tau_x, S(w.lambda_tau_x)));
  total = add(total, scale(tau_y, S(w.lambda_tau_y)));

  LossReport r;
  r.adv_x = static_cast<double>(adv_x.item());
  r.adv_y = static_cast<double>(adv_y.item());
  r.recycle_x = static_cast<double>(rec_x.item());
  r.recycle_y = static_cast<double>(rec_y.item());
  r.recurrent_x = static_cast<double>(tau_x.item());
  r.recurrent_y = static_cast<double>(tau_y.item());
  r.include_cycle = include_cycle;
  if (include_cycle) {
    auto cyc_x = cycle_loss(m.g_x, m.g_y, batch_x.curr);
    auto cyc_y = cycle_loss(m.g_y, m.g_x, batch_y.curr);
    total = add(total, scale(cyc_x, S(w.lambda_cx)));
    total = add(total, scale(cyc_y, S(w.lambda_cy)));
    r.cycle_x = static_cast<double>(cyc_x.item());
    r.cycle_y = static_cast<double>(cyc_y.item());
  }
  r.total = static_cast<double>(total.item());
  if (report) *report = r;
  return total;
}

}  // namespace rgan
