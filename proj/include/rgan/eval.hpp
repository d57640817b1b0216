#pragma once

// Read-only evaluation: framewise and temporally smoothed inference,
// confusion-matrix segmentation metrics, an oracle segmenter standing in for
// a pretrained parser, the exact ground-truth translation error, and a
// pixel-dispersion probe for mode collapse.

#include "rgan/train.hpp"

namespace rgan {

namespace detail {

template <typename S>
Tensor<S> as_batch(const Tensor<S>& frame) {
  Shape s = frame.shape();
  if (s.size() != 3)
    throw std::invalid_argument("expected a [C,H,W] frame, got " + shape_str(s));
  Tensor<S> out({1, s[0], s[1], s[2]});
  out.val() = frame.val();
  return out;
}

template <typename S>
Tensor<S> as_frame(const Tensor<S>& batch) {
  const Shape& s = batch.shape();
  Tensor<S> out({s[1], s[2], s[3]});
  out.val() = batch.val();
  return out;
}

}  // namespace detail

// y_t = G(x_t) for every frame; the callable maps one [C,H,W] frame
template <typename S>
VideoStream<S> infer_framewise(const MapFn<S>& g, const VideoStream<S>& stream) {
  stream.validate();
  NoGrad<S> off;
  VideoStream<S> out;
  out.domain_tag = stream.domain_tag;
  out.stream_id = stream.stream_id;
  out.frames.reserve(stream.frames.size());
  for (const auto& f : stream.frames) out.frames.push_back(g(f));
  return out;
}

template <typename S>
VideoStream<S> infer_framewise(const NetworkParams<S>& g, const GeneratorConfig& cfg,
                               const VideoStream<S>& stream) {
  MapFn<S> fg = [&](const Tensor<S>& f) {
    return detail::as_frame(generator_forward(g, cfg, detail::as_batch(f)));
  };
  return infer_framewise(fg, stream);
}

// y_t = (G(x_t) + P(G(x_{t-2}), G(x_{t-1}))) / 2 for t >= 2; the first two
// frames fall back to framewise output.
template <typename S>
VideoStream<S> infer_smoothed(const MapFn<S>& g, const PredictFn<S>& p,
                              const VideoStream<S>& stream) {
  if (stream.length() < 3)
    throw std::invalid_argument("smoothed inference needs at least 3 frames");
  VideoStream<S> out = infer_framewise(g, stream);
  NoGrad<S> off;
  std::vector<Tensor<S>> framewise = out.frames;  // shared nodes, read-only
  for (int t = 2; t < out.length(); ++t) {
    auto predicted = p(framewise[t - 2], framewise[t - 1]);
    out.frames[t] = scale(add(framewise[t], predicted), S(0.5));
  }
  return out;
}

template <typename S>
VideoStream<S> infer_smoothed(const NetworkParams<S>& g, const GeneratorConfig& gcfg,
                              const NetworkParams<S>& p, const PredictorConfig& pcfg,
                              const VideoStream<S>& stream) {
  MapFn<S> fg = [&](const Tensor<S>& f) {
    return detail::as_frame(generator_forward(g, gcfg, detail::as_batch(f)));
  };
  PredictFn<S> fp = [&](const Tensor<S>& a, const Tensor<S>& b) {
    return detail::as_frame(
        predictor_forward(p, pcfg, detail::as_batch(a), detail::as_batch(b)));
  };
  return infer_smoothed(fg, fp, stream);
}

// ---- segmentation metrics from a pooled confusion matrix ----

struct SegMetrics {
  double mean_pixel_accuracy = 0;
  double average_class_accuracy = 0;
  double mean_iou = 0;
  std::vector<double> class_accuracy;  // NaN for classes absent from gt
  std::vector<double> class_iou;
  std::vector<bool> class_present;
};

inline SegMetrics seg_metrics(const std::vector<LabelMap>& pred,
                              const std::vector<LabelMap>& gt, int n_classes) {
  if (n_classes <= 0) throw std::invalid_argument("n_classes must be positive");
  if (pred.size() != gt.size())
    throw std::invalid_argument("prediction/ground-truth frame counts differ");
  const int k = n_classes;
  std::vector<long> confusion(static_cast<size_t>(k) * k, 0);  // [gt][pred]
  long total = 0;
  for (size_t f = 0; f < gt.size(); ++f) {
    if (pred[f].size() != gt[f].size())
      throw std::invalid_argument("prediction/ground-truth shapes differ at frame " +
                                  std::to_string(f));
    for (size_t i = 0; i < gt[f].size(); ++i) {
      if (gt[f][i] >= k || pred[f][i] >= k)
        throw std::invalid_argument("class id exceeds n_classes");
      ++confusion[static_cast<size_t>(gt[f][i]) * k + pred[f][i]];
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("no pixels to evaluate");

  SegMetrics m;
  m.class_accuracy.assign(k, std::numeric_limits<double>::quiet_NaN());
  m.class_iou.assign(k, std::numeric_limits<double>::quiet_NaN());
  m.class_present.assign(k, false);
  long diag = 0;
  double acc_sum = 0, iou_sum = 0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    long row = 0, col = 0;
    for (int j = 0; j < k; ++j) {
      row += confusion[static_cast<size_t>(c) * k + j];
      col += confusion[static_cast<size_t>(j) * k + c];
    }
    const long cc = confusion[static_cast<size_t>(c) * k + c];
    diag += cc;
    if (row == 0) continue;  // class absent from gt: excluded from the means
    m.class_present[c] = true;
    m.class_accuracy[c] = static_cast<double>(cc) / static_cast<double>(row);
    m.class_iou[c] = static_cast<double>(cc) / static_cast<double>(row + col - cc);
    acc_sum += m.class_accuracy[c];
    iou_sum += m.class_iou[c];
    ++present;
  }
  m.mean_pixel_accuracy = static_cast<double>(diag) / static_cast<double>(total);
  m.average_class_accuracy = acc_sum / present;
  m.mean_iou = iou_sum / present;
  return m;
}

// ---- oracle segmenter: trained on real frames, qualifies at IoU >= 0.9 ----

inline constexpr double kOracleQualificationIoU = 0.9;

template <typename S>
LabelMap segmenter_predict(const NetworkParams<S>& p, const SegmenterConfig& cfg,
                           const Tensor<S>& frame) {
  NoGrad<S> off;
  auto logits = segmenter_forward(p, cfg, detail::as_batch(frame));
  const Shape& s = logits.shape();
  const int k = s[1], h = s[2], w = s[3];
  LabelMap out(static_cast<size_t>(h) * w);
  const S* d = logits.data();
  for (int i = 0; i < h * w; ++i) {
    int best = 0;
    for (int c = 1; c < k; ++c)
      if (d[c * h * w + i] > d[best * h * w + i]) best = c;
    out[static_cast<size_t>(i)] = static_cast<uint8_t>(best);
  }
  return out;
}

// Supervised training against one-hot targets with a squared-error objective;
// plenty for the synthetic task, which is nearly color-separable.
template <typename S>
NetworkParams<S> train_oracle_segmenter(const VideoStream<S>& stream, const SegmenterConfig& cfg,
                                        int steps, double lr, unsigned seed) {
  if (!stream.has_labels()) throw std::invalid_argument("oracle training needs labels");
  stream.validate();
  auto params = init_segmenter<S>(cfg, seed);
  params.set_requires_grad(true);
  AdamState<S> opt;
  std::mt19937 rng(seed ^ 0x9e3779b9u);
  std::uniform_int_distribution<int> pick(0, stream.length() - 1);
  const int h = stream.frames[0].shape()[1], w = stream.frames[0].shape()[2];
  for (int step = 0; step < steps; ++step) {
    const int t = pick(rng);
    Tensor<S> target({1, cfg.n_classes, h, w});
    for (int i = 0; i < h * w; ++i)
      target.val()[stream.labels[t][static_cast<size_t>(i)] * h * w + i] = S(1);
    Tape<S> tape;
    params.zero_grad();
    auto loss = mse(segmenter_forward(params, cfg, detail::as_batch(stream.frames[t])), target);
    tape.backward(loss);
    opt.match(params);
    for (size_t i = 0; i < params.items.size(); ++i)
      adam_update(params.items[i].second, params.items[i].first, opt.m[i], opt.v[i], lr, 0.9,
                  0.999, 1e-8, step + 1);
  }
  return params;
}

template <typename S>
double oracle_mean_iou(const NetworkParams<S>& oracle, const SegmenterConfig& cfg,
                       const std::vector<Tensor<S>>& frames,
                       const std::vector<LabelMap>& gt_labels) {
  std::vector<LabelMap> pred;
  pred.reserve(frames.size());
  for (const auto& f : frames) pred.push_back(segmenter_predict(oracle, cfg, f));
  return seg_metrics(pred, gt_labels, cfg.n_classes).mean_iou;
}

// Mean IoU of the oracle on generated frames, normalized by its IoU on the
// real frames of the same stream. The generator consumes label renderings.
template <typename S>
double oracle_image_score(const MapFn<S>& g, const VideoStream<S>& stream,
                          const NetworkParams<S>& oracle, const SegmenterConfig& cfg) {
  if (!stream.has_labels()) throw std::invalid_argument("oracle scoring needs labels");
  stream.validate();
  const double real_iou = oracle_mean_iou(oracle, cfg, stream.frames, stream.labels);
  if (real_iou < kOracleQualificationIoU)
    throw std::invalid_argument("oracle below qualification threshold: IoU " +
                                std::to_string(real_iou));
  NoGrad<S> off;
  const int h = stream.frames[0].shape()[1], w = stream.frames[0].shape()[2];
  std::vector<Tensor<S>> generated;
  generated.reserve(stream.frames.size());
  for (const auto& lm : stream.labels)
    generated.push_back(g(render_labels<S>(lm, h, w)));
  return oracle_mean_iou(oracle, cfg, generated, stream.labels) / real_iou;
}

// mean over frames of MSE between G(x_t) and the known ground-truth map of x_t
template <typename S>
double translation_mse(const MapFn<S>& g, const VideoStream<S>& stream, const GtMap& map) {
  stream.validate();
  if (stream.length() == 0) throw std::invalid_argument("empty stream");
  NoGrad<S> off;
  double acc = 0;
  for (const auto& f : stream.frames) {
    const Tensor<S> out = g(f);
    const Tensor<S> tgt = map.apply(f);
    acc += static_cast<double>((out.val() - tgt.val()).square().sum()) / out.size();
  }
  return acc / stream.length();
}

// ---- mode-collapse probe: pairwise pixel dispersion in vs out ----

struct DiversityReport {
  double input_dispersion = 0;
  double output_dispersion = 0;
  double ratio = 0;
};

template <typename S>
DiversityReport diversity_probe(const MapFn<S>& g, const VideoStream<S>& stream, int sample) {
  stream.validate();
  if (sample < 2) throw std::invalid_argument("diversity probe needs sample >= 2");
  if (sample > stream.length())
    throw std::invalid_argument("sample exceeds stream length");
  NoGrad<S> off;
  std::vector<Tensor<S>> in, out;
  for (int i = 0; i < sample; ++i) {
    const int t = static_cast<int>(static_cast<long>(i) * (stream.length() - 1) / (sample - 1));
    in.push_back(stream.frames[t]);
    out.push_back(g(stream.frames[t]));
  }
  auto dispersion = [&](const std::vector<Tensor<S>>& fs) {
    double acc = 0;
    int pairs = 0;
    for (size_t a = 0; a < fs.size(); ++a)
      for (size_t b = a + 1; b < fs.size(); ++b) {
        acc += std::sqrt(static_cast<double>((fs[a].val() - fs[b].val()).square().sum()));
        ++pairs;
      }
    return acc / pairs;
  };
  DiversityReport r;
  r.input_dispersion = dispersion(in);
  r.output_dispersion = dispersion(out);
  r.ratio = r.output_dispersion / std::max(r.input_dispersion, 1e-12);
  return r;
}

}  // namespace rgan
