#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "rgan/eval.hpp"
#include "rgan/train.hpp"
#include "rgan/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace rgan;
namespace fs = std::filesystem;

namespace {

void report(int n, const std::string& name, bool ok, const std::string& detail) {
  std::cout << "criterion " << n << " (" << name << "): " << (ok ? "PASS" : "FAIL");
  if (!detail.empty()) std::cout << " — " << detail;
  std::cout << std::endl;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

struct TmpDir {
  fs::path path;
  TmpDir() {
    path = fs::temp_directory_path() / ("rgan_accept_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
  std::string operator/(const char* name) const { return (path / name).string(); }
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// ---- shared desk-scale trend runs (criteria 3 and 4) ----

constexpr int kImg = 32;
constexpr int kFrames = 500;
constexpr int kSteps = 2000;
constexpr int kWidth = 8;        // generator/discriminator/predictor base width
constexpr double kLr = 2e-4;
constexpr double kMaxStep = 3.0; // per-frame motion bound; keeps the predictor non-trivial
constexpr int kSeeds = 3;

SyntheticSceneConfig scene_config() {
  SyntheticSceneConfig sc;
  sc.image_size = kImg;
  sc.frames = kFrames;
  sc.max_step = kMaxStep;
  sc.map.mirror = false;  // measure translation quality, not mirror discovery
  return sc;
}

TrainConfig trend_config(LossMode mode, unsigned seed) {
  TrainConfig cfg;
  cfg.steps = kSteps;
  cfg.lr = kLr;
  cfg.loss_mode = mode;
  cfg.seed = seed;
  cfg.gen.image_size = kImg;
  cfg.gen.base_width = kWidth;
  cfg.gen.n_residual_blocks = 2;
  cfg.disc.base_width = kWidth;
  cfg.disc.n_stride2_layers = 2;
  cfg.pred.image_size = kImg;
  cfg.pred.base_width = kWidth;
  return cfg;
}

using S = float;

MapFn<S> map_of(const NetworkParams<S>& p, const GeneratorConfig& cfg) {
  return [&p, cfg](const Tensor<S>& frame) {
    return detail::as_frame(generator_forward(p, cfg, detail::as_batch(frame)));
  };
}

struct TrendResults {
  // labels task, indexed [seed][mode]: cycle, recycle, combined
  double iou[kSeeds][3];
  // image task, indexed [seed][mode]: cycle, recycle. The diversity ratio is
  // probed here because the ground-truth map is an isometry, so the ideal
  // ratio is exactly 1 and undershoot reads directly as collapse.
  double mse[kSeeds][2];
  double div_ratio[kSeeds][2];
};

const TrendResults& trend_results() {
  static const TrendResults r = [] {
    TrendResults out{};
    const LossMode modes[3] = {LossMode::Cycle, LossMode::Recycle, LossMode::Combined};
    const SyntheticSceneConfig sc = scene_config();
    for (unsigned seed = 0; seed < kSeeds; ++seed) {
      auto dom = generate_synthetic_domains<S>(sc, 2 * seed + 1, 2 * seed + 2);
      VideoStream<S> held = generate_scene<S>(sc, 1000 + seed);
      std::vector<LabelMap> gt;
      for (const auto& lm : held.labels) gt.push_back(dom.gt_map.apply_labels(lm, kImg, kImg));

      // image <-> labels: domain Y is the flat-palette rendering of an
      // independent scene's label maps
      VideoStream<S> labels_y = label_stream_of(dom.stream_y);
      for (int m = 0; m < 3; ++m) {
        TrainState<S> st = init_train_state<S>(trend_config(modes[m], seed));
        fit(st, dom.stream_x, labels_y, FitPaths{}, &std::cout);
        MapFn<S> gy = map_of(st.g_y, st.cfg.gen);
        VideoStream<S> fake = infer_framewise(gy, held);
        std::vector<LabelMap> pred;
        for (const auto& f : fake.frames) pred.push_back(quantize_to_labels(f));
        out.iou[seed][m] = seg_metrics(pred, gt, sc.n_classes).mean_iou;
        std::cout << "labels seed " << seed << " " << loss_mode_name(modes[m])
                  << " iou=" << out.iou[seed][m] << std::endl;
      }

      // image <-> image: same scenes, Y stays in image space
      for (int m = 0; m < 2; ++m) {
        TrainState<S> st = init_train_state<S>(trend_config(modes[m], seed));
        fit(st, dom.stream_x, dom.stream_y, FitPaths{}, &std::cout);
        MapFn<S> gy = map_of(st.g_y, st.cfg.gen);
        out.mse[seed][m] = translation_mse(gy, held, dom.gt_map);
        out.div_ratio[seed][m] = diversity_probe(gy, held, 50).ratio;
        std::cout << "image seed " << seed << " " << loss_mode_name(modes[m])
                  << " mse=" << out.mse[seed][m] << " div=" << out.div_ratio[seed][m]
                  << std::endl;
      }
    }
    return out;
  }();
  return r;
}

double mean_over_seeds(const double (*col)[3], int m) {
  double s = 0;
  for (int i = 0; i < kSeeds; ++i) s += col[i][m];
  return s / kSeeds;
}

double mean_over_seeds2(const double (*col)[2], int m) {
  double s = 0;
  for (int i = 0; i < kSeeds; ++i) s += col[i][m];
  return s / kSeeds;
}

}  // namespace

TEST_CASE("criterion 1: gradient verification suite") {
  const auto t0 = std::chrono::steady_clock::now();
  auto checks = run_verification();
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = all_passed(checks) && secs < 300.0;
  std::string worst;
  for (const auto& c : checks)
    if (!c.passed) worst += " " + c.name;
  report(1, "gradient verification", ok,
         std::to_string(checks.size()) + " checks in " + fmt(secs) + "s" +
             (worst.empty() ? "" : ", failed:" + worst));
  CHECK(ok);
  for (const auto& c : checks) {
    INFO(c.name);
    CHECK(c.passed);
  }
}

TEST_CASE("criterion 2: loss identities and exact metric values") {
  using D = double;
  std::mt19937 rng(7);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto randn = [&](Shape shp) {
    Tensor<D> t(shp);
    for (long i = 0; i < t.size(); ++i) t.val().data()[i] = nd(rng);
    return t;
  };

  bool ok = true;

  // cycle loss vanishes for an exact inverse pair
  MapFn<D> fwd = [](const Tensor<D>& x) { return add_scalar(scale(x, 2.0), 0.5); };
  MapFn<D> back = [](const Tensor<D>& x) { return scale(add_scalar(x, -0.5), 0.5); };
  {
    NoGrad<D> ng;
    const double v = cycle_loss(back, fwd, randn({2, 3, 6, 6})).val()(0);
    ok = ok && std::abs(v) < 1e-12;
  }

  // recycle loss vanishes for identity generators plus a perfect predictor,
  // and equals the recurrent loss under identity generators
  MapFn<D> ident = [](const Tensor<D>& x) { return x; };
  TripletBatch<D> trip{randn({2, 3, 6, 6}), randn({2, 3, 6, 6}), randn({2, 3, 6, 6})};
  {
    NoGrad<D> ng;
    PredictFn<D> perfect = [&](const Tensor<D>&, const Tensor<D>&) { return trip.next; };
    ok = ok && recycle_loss(ident, ident, perfect, trip).val()(0) == 0.0;

    PredictFn<D> some = [](const Tensor<D>& a, const Tensor<D>& b) {
      return scale(add(a, b), 0.5);
    };
    const double rec = recycle_loss(ident, ident, some, trip).val()(0);
    const double tau = recurrent_loss(some, trip).val()(0);
    ok = ok && std::abs(rec - tau) < 1e-12;
  }

  // total objective is linear in the loss weights (adversarial part excluded)
  {
    NoGrad<D> ng;
    TranslationModel<D> m;
    m.g_x = m.g_y = ident;
    m.d_x = m.d_y = [](const Tensor<D>& x) { return mean(x); };
    m.p_x = m.p_y = [](const Tensor<D>& a, const Tensor<D>& b) { return scale(add(a, b), 0.5); };
    TripletBatch<D> bx{randn({1, 3, 6, 6}), randn({1, 3, 6, 6}), randn({1, 3, 6, 6})};
    TripletBatch<D> by{randn({1, 3, 6, 6}), randn({1, 3, 6, 6}), randn({1, 3, 6, 6})};
    LossWeights w1, w2;
    w2.lambda_rx *= 2; w2.lambda_ry *= 2; w2.lambda_tau_x *= 2; w2.lambda_tau_y *= 2;
    w2.lambda_cx *= 2; w2.lambda_cy *= 2;
    LossReport r1, r2;
    const double t1 = total_objective(m, bx, by, w1, true, AdvMode::LeastSquares, &r1).val()(0);
    const double t2 = total_objective(m, bx, by, w2, true, AdvMode::LeastSquares, &r2).val()(0);
    const double adv = r1.adv_x + r1.adv_y;
    ok = ok && std::abs((t2 - adv) - 2.0 * (t1 - adv)) < 1e-12;
  }

  // hand-derived segmentation metrics: 2x2, one background pixel predicted
  // as class 1 -> MP 0.75, AC 0.75, IoU (1/2 + 2/3) / 2
  SegMetrics sm = seg_metrics({{0, 1, 1, 1}}, {{0, 0, 1, 1}}, 2);
  ok = ok && std::abs(sm.mean_pixel_accuracy - 0.75) < 1e-12 &&
       std::abs(sm.average_class_accuracy - 0.75) < 1e-12 &&
       std::abs(sm.mean_iou - 0.5833333333) < 1e-4;

  report(2, "loss identities and exact metrics", ok,
         "MP=" + fmt(sm.mean_pixel_accuracy) + " AC=" + fmt(sm.average_class_accuracy) +
             " IoU=" + fmt(sm.mean_iou));
  CHECK(ok);
}

TEST_CASE("criterion 3: temporal objective beats plain cycle at desk scale") {
  const TrendResults& r = trend_results();
  const double iou_cyc = mean_over_seeds(r.iou, 0);
  const double iou_rec = mean_over_seeds(r.iou, 1);
  const double iou_comb = mean_over_seeds(r.iou, 2);
  const double mse_cyc = mean_over_seeds2(r.mse, 0);
  const double mse_rec = mean_over_seeds2(r.mse, 1);

  const bool ok = iou_rec > iou_cyc && iou_comb >= iou_cyc && mse_rec < mse_cyc;
  report(3, "trend reproduction", ok,
         "IoU cycle=" + fmt(iou_cyc) + " recycle=" + fmt(iou_rec) + " combined=" +
             fmt(iou_comb) + "; MSE cycle=" + fmt(mse_cyc) + " recycle=" + fmt(mse_rec));
  CHECK(iou_rec > iou_cyc);
  CHECK(iou_comb >= iou_cyc);
  CHECK(mse_rec < mse_cyc);
}

TEST_CASE("criterion 4: diversity probe does not collapse under the temporal objective") {
  const TrendResults& r = trend_results();
  const double div_cyc = mean_over_seeds2(r.div_ratio, 0);
  const double div_rec = mean_over_seeds2(r.div_ratio, 1);
  const bool ok = div_rec >= div_cyc;
  report(4, "mode-collapse probe", ok,
         "diversity ratio cycle=" + fmt(div_cyc) + " recycle=" + fmt(div_rec) +
             " (isometric map: ideal 1.0)");
  CHECK(ok);
}

TEST_CASE("criterion 5: determinism and persistence") {
  TmpDir tmp;
  SyntheticSceneConfig sc;
  sc.image_size = 8;
  sc.frames = 8;
  auto dom = generate_synthetic_domains<S>(sc, 1, 2);

  TrainConfig cfg;
  cfg.steps = 4;
  cfg.lr_decay_start = 2;
  cfg.gen.image_size = 8;
  cfg.gen.base_width = 2;
  cfg.gen.n_residual_blocks = 1;
  cfg.disc.base_width = 2;
  cfg.disc.n_stride2_layers = 1;
  cfg.pred.image_size = 8;
  cfg.pred.base_width = 2;

  auto run = [&](const char* tag, int steps, bool resume_from_half) {
    TrainState<S> st;
    if (resume_from_half)
      st = load_checkpoint<S>(tmp / tag);
    else
      st = init_train_state<S>(cfg);
    st.cfg.steps = steps;
    fit(st, dom.stream_x, dom.stream_y,
        FitPaths{tmp / tag, (tmp.path / (std::string(tag) + ".csv")).string()});
  };

  run("a.bin", 4, false);
  run("b.bin", 4, false);
  const bool csv_det = slurp(tmp / "a.bin.csv") == slurp(tmp / "b.bin.csv");
  const bool ckpt_det = slurp(tmp / "a.bin") == slurp(tmp / "b.bin");

  run("c.bin", 2, false);
  run("c.bin", 4, true);
  const bool resume_ok = slurp(tmp / "c.bin") == slurp(tmp / "a.bin") &&
                         slurp(tmp / "c.bin.csv") == slurp(tmp / "a.bin.csv");

  auto st = load_checkpoint<S>(tmp / "a.bin");
  save_checkpoint(st, tmp / "d.bin");
  const bool roundtrip_ok = slurp(tmp / "d.bin") == slurp(tmp / "a.bin");

  const bool ok = csv_det && ckpt_det && resume_ok && roundtrip_ok;
  report(5, "determinism and persistence", ok,
         std::string("csv ") + (csv_det ? "bitwise" : "DIFFERS") + ", resume " +
             (resume_ok ? "bitwise" : "DIFFERS") + ", round trip " +
             (roundtrip_ok ? "bitwise" : "DIFFERS"));
  CHECK(ok);
}

TEST_CASE("criterion 6: smoothed inference contract") {
  using D = double;
  SyntheticSceneConfig sc;
  sc.image_size = 16;
  sc.frames = 6;
  VideoStream<D> stream = generate_scene<D>(sc, 5);

  GeneratorConfig gcfg;
  gcfg.image_size = 16;
  gcfg.base_width = 2;
  gcfg.n_residual_blocks = 1;
  NetworkParams<D> g = init_generator<D>(gcfg, 11);

  NoGrad<D> ng;
  MapFn<D> gm = [&](const Tensor<D>& f) {
    return detail::as_frame(generator_forward(g, gcfg, detail::as_batch(f)));
  };
  VideoStream<D> fw = infer_framewise(gm, stream);

  // predictor stub that reproduces the framewise outputs in call order
  int t = 2;
  PredictFn<D> stub = [&](const Tensor<D>&, const Tensor<D>&) {
    return fw.frames[static_cast<size_t>(t++)];
  };
  VideoStream<D> sm = infer_smoothed(gm, stub, stream);

  double max_diff = 0.0;
  bool in_range = true;
  for (int i = 0; i < stream.length(); ++i) {
    max_diff = std::max(max_diff,
                        static_cast<double>((sm.frames[static_cast<size_t>(i)].val() -
                                             fw.frames[static_cast<size_t>(i)].val())
                                                .abs()
                                                .maxCoeff()));
    in_range = in_range && (sm.frames[static_cast<size_t>(i)].val().abs() <= 1.0).all();
  }
  const bool ok = max_diff < 1e-12 && in_range;
  report(6, "smoothed inference contract", ok,
         "max |smoothed - framewise| = " + fmt(max_diff) +
             (in_range ? ", outputs in [-1,1]" : ", RANGE VIOLATION"));
  CHECK(ok);
}
