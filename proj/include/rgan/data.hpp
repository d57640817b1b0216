#pragma once

// Ordered-stream data: a synthetic two-domain video generator with an exact,
// invertible cross-domain map (channel permutation + optional horizontal
// mirror), frame I/O as binary PPM/PGM, and seeded triplet sampling.

#include "rgan/losses.hpp"
#include "rgan/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>

namespace rgan {

using LabelMap = std::vector<uint8_t>;  // row-major H*W class ids

template <typename S>
struct VideoStream {
  char domain_tag = 'X';
  std::string stream_id = "0";
  std::vector<Tensor<S>> frames;   // each [C,H,W], values in [-1,1]
  std::vector<LabelMap> labels;    // empty or 1:1 with frames

  int length() const { return static_cast<int>(frames.size()); }
  bool has_labels() const { return !labels.empty(); }

  void validate() const {
    if (frames.empty()) return;
    for (const auto& f : frames)
      if (f.shape() != frames.front().shape())
        throw std::invalid_argument("stream frames disagree in shape");
    if (!labels.empty() && labels.size() != frames.size())
      throw std::invalid_argument("label maps do not align 1:1 with frames");
  }
};

// Frame-level, memoryless, exactly invertible domain map.
struct GtMap {
  std::array<int, 3> channel_perm = {1, 2, 0};  // out channel c reads in channel perm[c]
  bool mirror = true;

  GtMap inverse() const {
    GtMap inv;
    inv.mirror = mirror;
    for (int c = 0; c < 3; ++c) inv.channel_perm[static_cast<size_t>(channel_perm[c])] = c;
    return inv;
  }

  template <typename S>
  Tensor<S> apply(const Tensor<S>& frame) const {
    const Shape& s = frame.shape();
    if (s.size() != 3 || s[0] != 3)
      throw std::invalid_argument("GtMap expects a [3,H,W] frame, got " + shape_str(s));
    const int h = s[1], w = s[2];
    Tensor<S> out(s);
    for (int c = 0; c < 3; ++c) {
      const S* src = frame.data() + static_cast<long>(channel_perm[c]) * h * w;
      S* dst = out.data() + static_cast<long>(c) * h * w;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) dst[y * w + x] = src[y * w + (mirror ? w - 1 - x : x)];
    }
    return out;
  }

  LabelMap apply_labels(const LabelMap& lm, int h, int w) const {
    if (!mirror) return lm;
    LabelMap out(lm.size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out[y * w + x] = lm[y * w + (w - 1 - x)];
    return out;
  }
};

struct SyntheticSceneConfig {
  int image_size = 64;
  int n_classes = 3;          // background, object, shadow
  int frames = 500;           // stream length T
  double max_step = 1.0;      // trajectory smoothness bound, px per frame
  GtMap map;                  // descriptor of the X->Y ground-truth map

  void validate() const {
    if (frames < 3) throw std::invalid_argument("stream length must be >= 3");
    if (image_size % 4 != 0) throw std::invalid_argument("image_size must be divisible by 4");
    if (n_classes != 3) throw std::invalid_argument("synthetic scenes define 3 classes");
  }
};

namespace detail {

// Smooth bounded trajectory: sum of two slow sinusoids per axis.
struct Trajectory {
  double cx, cy, ax1, ax2, ay1, ay2, wx1, wx2, wy1, wy2, px1, px2, py1, py2;

  static Trajectory sample(std::mt19937& rng, int size, double max_step) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Trajectory t{};
    // centered, near-full-frame span: every stream's object covers the same
    // region of the frame, so position statistics match across streams
    t.cx = size / 2.0;
    t.cy = size / 2.0;
    const double amp = size / 2.0 - size / 6.0 - 2.0;
    t.ax1 = amp * (0.7 + 0.3 * u(rng));
    t.ax2 = amp * 0.2 * u(rng);
    t.ay1 = amp * (0.7 + 0.3 * u(rng));
    t.ay2 = amp * 0.2 * u(rng);
    // angular speed capped so per-frame motion stays below max_step
    const double wmax = max_step / (t.ax1 + t.ax2 + t.ay1 + t.ay2 + 1e-9);
    t.wx1 = wmax * (0.5 + 0.5 * u(rng));
    t.wx2 = wmax * (0.5 + 0.5 * u(rng));
    t.wy1 = wmax * (0.5 + 0.5 * u(rng));
    t.wy2 = wmax * (0.5 + 0.5 * u(rng));
    t.px1 = 6.283185307179586 * u(rng);
    t.px2 = 6.283185307179586 * u(rng);
    t.py1 = 6.283185307179586 * u(rng);
    t.py2 = 6.283185307179586 * u(rng);
    return t;
  }

  std::pair<double, double> at(int frame, int size) const {
    double x = cx + ax1 * std::sin(wx1 * frame + px1) + ax2 * std::sin(wx2 * frame + px2);
    double y = cy + ay1 * std::sin(wy1 * frame + py1) + ay2 * std::sin(wy2 * frame + py2);
    const double r = size / 6.0 + 1.0;
    x = std::min(std::max(x, r), size - 1.0 - r);
    y = std::min(std::max(y, r), size - 1.0 - r);
    return {x, y};
  }
};

}  // namespace detail

// One domain-X style scene: smooth textured background with a fixed
// left-to-right brightness ramp (the domains are deliberately asymmetric
// under mirroring) and a moving disc that casts a shadow.
template <typename S>
VideoStream<S> generate_scene(const SyntheticSceneConfig& cfg, unsigned seed) {
  cfg.validate();
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int sz = cfg.image_size;

  // Static background shared by every stream of the domain: a fixed texture
  // keeps the domains' appearance deterministic, so the per-stream content is
  // the trajectory alone and the true domain map stays exactly representable
  // by a translation-equivariant network.
  std::array<std::vector<double>, 3> bg;
  const double freq_a[3] = {2.0, 3.0, 4.0}, freq_b[3] = {3.0, 2.0, 5.0};
  const double phase_a[3] = {0.9, 2.1, 4.4}, phase_b[3] = {1.7, 5.0, 0.3};
  for (int c = 0; c < 3; ++c) {
    bg[static_cast<size_t>(c)].assign(static_cast<size_t>(sz) * sz, 0.0);
    for (int y = 0; y < sz; ++y)
      for (int x = 0; x < sz; ++x) {
        const double ramp = -0.35 + 0.7 * x / (sz - 1.0);
        const double tex = 0.2 * std::sin(freq_a[c] * 6.283 * x / sz + phase_a[c]) *
                           std::cos(freq_b[c] * 6.283 * y / sz + phase_b[c]);
        bg[static_cast<size_t>(c)][static_cast<size_t>(y) * sz + x] = -0.25 + ramp + tex;
      }
  }
  const std::array<double, 3> obj_color = {0.7, -0.55, 0.5};
  auto traj = detail::Trajectory::sample(rng, sz, cfg.max_step);

  VideoStream<S> stream;
  stream.frames.reserve(static_cast<size_t>(cfg.frames));
  stream.labels.reserve(static_cast<size_t>(cfg.frames));
  const double radius = sz / 6.0;
  const double shadow_dx = radius * 0.8, shadow_dy = radius * 0.8;

  for (int t = 0; t < cfg.frames; ++t) {
    auto [ox, oy] = traj.at(t, sz);
    Tensor<S> frame({3, sz, sz});
    LabelMap lm(static_cast<size_t>(sz) * sz, 0);
    for (int y = 0; y < sz; ++y)
      for (int x = 0; x < sz; ++x) {
        const double d_obj = std::hypot(x - ox, y - oy);
        const double d_sh = std::hypot(x - ox - shadow_dx, y - oy - shadow_dy);
        const long idx = static_cast<long>(y) * sz + x;
        for (int c = 0; c < 3; ++c) {
          double v = bg[static_cast<size_t>(c)][static_cast<size_t>(idx)];
          if (d_sh <= radius) v -= 0.45;
          if (d_obj <= radius) v = obj_color[static_cast<size_t>(c)];
          frame.data()[static_cast<long>(c) * sz * sz + idx] =
              static_cast<S>(std::min(std::max(v, -1.0), 1.0));
        }
        if (d_obj <= radius)
          lm[static_cast<size_t>(idx)] = 1;
        else if (d_sh <= radius)
          lm[static_cast<size_t>(idx)] = 2;
      }
    stream.frames.push_back(std::move(frame));
    stream.labels.push_back(std::move(lm));
  }
  return stream;
}

// Flat-color rendering of a label stream (the "labels" domain).
template <typename S>
Tensor<S> render_labels(const LabelMap& lm, int h, int w) {
  static const double palette[3][3] = {
      {-0.8, -0.8, -0.8}, {0.8, -0.6, -0.6}, {-0.6, -0.6, 0.8}};
  Tensor<S> frame({3, h, w});
  for (int c = 0; c < 3; ++c)
    for (long i = 0; i < static_cast<long>(h) * w; ++i)
      frame.data()[static_cast<long>(c) * h * w + i] =
          static_cast<S>(palette[lm[static_cast<size_t>(i)]][c]);
  return frame;
}

template <typename S>
LabelMap quantize_to_labels(const Tensor<S>& frame) {
  static const double palette[3][3] = {
      {-0.8, -0.8, -0.8}, {0.8, -0.6, -0.6}, {-0.6, -0.6, 0.8}};
  const int h = frame.shape()[1], w = frame.shape()[2];
  LabelMap lm(static_cast<size_t>(h) * w);
  for (long i = 0; i < static_cast<long>(h) * w; ++i) {
    double best = 1e30;
    int arg = 0;
    for (int k = 0; k < 3; ++k) {
      double d = 0;
      for (int c = 0; c < 3; ++c) {
        const double diff =
            static_cast<double>(frame.data()[static_cast<long>(c) * h * w + i]) - palette[k][c];
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        arg = k;
      }
    }
    lm[static_cast<size_t>(i)] = static_cast<uint8_t>(arg);
  }
  return lm;
}

template <typename S>
VideoStream<S> label_stream_of(const VideoStream<S>& src) {
  VideoStream<S> out;
  out.domain_tag = src.domain_tag;
  out.stream_id = src.stream_id;
  const int h = src.frames.front().shape()[1], w = src.frames.front().shape()[2];
  for (size_t i = 0; i < src.frames.size(); ++i) {
    out.frames.push_back(render_labels<S>(src.labels[i], h, w));
    out.labels.push_back(src.labels[i]);
  }
  return out;
}

template <typename S>
struct SyntheticDomains {
  VideoStream<S> stream_x;
  VideoStream<S> stream_y;
  GtMap gt_map;
};

// Unpaired ordered streams: Y is the ground-truth map applied to an
// independently generated X-style scene, so the domains are connected
// exactly without any frame-level pairing.
template <typename S>
SyntheticDomains<S> generate_synthetic_domains(const SyntheticSceneConfig& cfg, unsigned seed_x,
                                               unsigned seed_y) {
  cfg.validate();
  if (seed_x == seed_y)
    throw std::invalid_argument("seeds must differ: the streams are meant to be unpaired");
  SyntheticDomains<S> d;
  d.gt_map = cfg.map;
  d.stream_x = generate_scene<S>(cfg, seed_x);
  d.stream_x.domain_tag = 'X';

  auto base = generate_scene<S>(cfg, seed_y);
  d.stream_y.domain_tag = 'Y';
  d.stream_y.stream_id = base.stream_id;
  const int sz = cfg.image_size;
  for (int t = 0; t < base.length(); ++t) {
    d.stream_y.frames.push_back(cfg.map.apply(base.frames[static_cast<size_t>(t)]));
    d.stream_y.labels.push_back(
        cfg.map.apply_labels(base.labels[static_cast<size_t>(t)], sz, sz));
  }
  return d;
}

// ---- frame I/O: 8-bit binary PPM (images) and PGM (labels) ----

namespace detail {

inline uint8_t to_byte(double v) {
  const double mapped = (std::min(std::max(v, -1.0), 1.0) + 1.0) * 0.5 * 255.0;
  return static_cast<uint8_t>(std::lround(mapped));
}

inline void read_pnm_header(std::istream& in, const std::string& magic, const std::string& file,
                            int& w, int& h) {
  std::string m;
  int maxval = 0;
  in >> m >> w >> h >> maxval;
  if (!in || m != magic || w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("corrupt " + magic + " file: " + file);
  in.get();  // single whitespace before raster
}

}  // namespace detail

template <typename S>
void save_frame_ppm(const Tensor<S>& frame, const std::string& path) {
  const Shape& s = frame.shape();
  if (s.size() != 3 || s[0] != 3)
    throw std::invalid_argument("save_frame_ppm expects [3,H,W], got " + shape_str(s));
  const int h = s[1], w = s[2];
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<uint8_t> buf(static_cast<size_t>(h) * w * 3);
  for (long i = 0; i < static_cast<long>(h) * w; ++i)
    for (int c = 0; c < 3; ++c)
      buf[static_cast<size_t>(i) * 3 + static_cast<size_t>(c)] =
          detail::to_byte(static_cast<double>(frame.data()[static_cast<long>(c) * h * w + i]));
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

template <typename S>
Tensor<S> load_frame_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  int w = 0, h = 0;
  detail::read_pnm_header(in, "P6", path, w, h);
  std::vector<uint8_t> buf(static_cast<size_t>(h) * w * 3);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw std::runtime_error("corrupt P6 file: " + path);
  Tensor<S> frame({3, h, w});
  for (long i = 0; i < static_cast<long>(h) * w; ++i)
    for (int c = 0; c < 3; ++c)
      frame.data()[static_cast<long>(c) * h * w + i] = static_cast<S>(
          buf[static_cast<size_t>(i) * 3 + static_cast<size_t>(c)] / 255.0 * 2.0 - 1.0);
  return frame;
}

inline void save_labels_pgm(const LabelMap& lm, int h, int w, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P5\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(lm.data()), static_cast<std::streamsize>(lm.size()));
}

inline LabelMap load_labels_pgm(const std::string& path, int* out_h = nullptr,
                                int* out_w = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  int w = 0, h = 0;
  detail::read_pnm_header(in, "P5", path, w, h);
  LabelMap lm(static_cast<size_t>(h) * w);
  in.read(reinterpret_cast<char*>(lm.data()), static_cast<std::streamsize>(lm.size()));
  if (in.gcount() != static_cast<std::streamsize>(lm.size()))
    throw std::runtime_error("corrupt P5 file: " + path);
  if (out_h) *out_h = h;
  if (out_w) *out_w = w;
  return lm;
}

namespace detail {

inline std::string frame_name(int idx) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d.ppm", idx);
  return buf;
}
inline std::string label_name(int idx) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "label_%06d.pgm", idx);
  return buf;
}

}  // namespace detail

template <typename S>
void save_stream(const VideoStream<S>& stream, const std::string& directory) {
  std::filesystem::create_directories(directory);
  for (int t = 0; t < stream.length(); ++t) {
    save_frame_ppm(stream.frames[static_cast<size_t>(t)],
                   directory + "/" + detail::frame_name(t));
    if (stream.has_labels()) {
      const Shape& s = stream.frames[static_cast<size_t>(t)].shape();
      save_labels_pgm(stream.labels[static_cast<size_t>(t)], s[1], s[2],
                      directory + "/" + detail::label_name(t));
    }
  }
}

template <typename S>
VideoStream<S> load_stream(const std::string& directory) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(directory)) throw std::runtime_error("no such directory: " + directory);
  int max_idx = -1;
  for (const auto& e : fs::directory_iterator(directory)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("frame_", 0) == 0)
      max_idx = std::max(max_idx, std::atoi(name.substr(6, 6).c_str()));
  }
  if (max_idx < 0) throw std::runtime_error("no frames found in " + directory);
  VideoStream<S> stream;
  stream.stream_id = fs::path(directory).filename().string();
  for (int t = 0; t <= max_idx; ++t) {
    const std::string fpath = directory + "/" + detail::frame_name(t);
    if (!fs::exists(fpath))
      throw std::runtime_error("missing frame index " + std::to_string(t) + " in " + directory);
    stream.frames.push_back(load_frame_ppm<S>(fpath));
    const std::string lpath = directory + "/" + detail::label_name(t);
    if (fs::exists(lpath)) stream.labels.push_back(load_labels_pgm(lpath));
  }
  if (!stream.labels.empty() && stream.labels.size() != stream.frames.size())
    throw std::runtime_error("label files do not align with frames in " + directory);
  return stream;
}

// ---- minibatch sampling ----

template <typename S>
Tensor<S> stack_frames(const std::vector<const Tensor<S>*>& frames) {
  const Shape& fs = frames.front()->shape();
  Tensor<S> out({static_cast<int>(frames.size()), fs[0], fs[1], fs[2]});
  const long stride = frames.front()->size();
  for (size_t i = 0; i < frames.size(); ++i)
    out.val().segment(static_cast<long>(i) * stride, stride) = frames[i]->val();
  return out;
}

// Uniform valid center indices t in [1, T-2]; deterministic given the rng state.
template <typename S>
TripletBatch<S> sample_triplets(const VideoStream<S>& stream, int batch_size,
                                std::mt19937& rng) {
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (stream.length() < 3) throw std::invalid_argument("stream shorter than 3 frames");
  std::uniform_int_distribution<int> pick(1, stream.length() - 2);
  std::vector<const Tensor<S>*> prev, curr, next;
  for (int i = 0; i < batch_size; ++i) {
    const int t = pick(rng);
    prev.push_back(&stream.frames[static_cast<size_t>(t - 1)]);
    curr.push_back(&stream.frames[static_cast<size_t>(t)]);
    next.push_back(&stream.frames[static_cast<size_t>(t + 1)]);
  }
  return TripletBatch<S>{stack_frames(prev), stack_frames(curr), stack_frames(next)};
}

}  // namespace rgan
