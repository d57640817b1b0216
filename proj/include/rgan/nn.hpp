#pragma once

// The three network families: residual-block translation generator,
// patch discriminator, and U-Net (used for both the temporal predictor and
// the oracle segmenter). Forward passes are pure functions of the parameter
// set and the input.

#include "rgan/conv.hpp"
#include "rgan/tensor.hpp"

#include <algorithm>
#include <random>

namespace rgan {

template <typename S>
struct NetworkParams {
  std::vector<std::pair<std::string, Tensor<S>>> items;

  Tensor<S>& add(const std::string& name, Tensor<S> t) {
    if (has(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    items.emplace_back(name, std::move(t));
    return items.back().second;
  }
  bool has(const std::string& name) const {
    for (auto& [n, t] : items)
      if (n == name) return true;
    return false;
  }
  Tensor<S>& at(const std::string& name) {
    for (auto& [n, t] : items)
      if (n == name) return t;
    throw std::invalid_argument("unknown parameter: " + name);
  }
  const Tensor<S>& at(const std::string& name) const {
    return const_cast<NetworkParams*>(this)->at(name);
  }
  long param_count() const {
    long n = 0;
    for (auto& [name, t] : items) n += t.size();
    return n;
  }
  void set_requires_grad(bool rg) {
    for (auto& [name, t] : items) t.set_requires_grad(rg);
  }
  void zero_grad() {
    for (auto& [name, t] : items) t.zero_grad();
  }
};

// Shared init convention: conv kernels ~ Normal(0, 0.02), biases 0,
// norm gains 1, norm biases 0. Values are drawn as doubles and narrowed so
// float and double builds of one config see the same stream.
template <typename S>
void fill_normal(Tensor<S>& t, std::mt19937& rng, double sd = 0.02) {
  std::normal_distribution<double> d(0.0, sd);
  for (long i = 0; i < t.size(); ++i) t.val()[i] = static_cast<S>(d(rng));
}

namespace detail {

template <typename S>
void add_conv(NetworkParams<S>& p, const std::string& name, int out_c, int in_c, int k,
              std::mt19937& rng, bool norm) {
  Tensor<S> kernel({out_c, in_c, k, k});
  fill_normal(kernel, rng);
  p.add(name + ".k", std::move(kernel));
  p.add(name + ".b", Tensor<S>::zeros({out_c}));
  if (norm) {
    p.add(name + ".g", Tensor<S>::full({out_c}, S(1)));
    p.add(name + ".be", Tensor<S>::zeros({out_c}));
  }
}

// transposed conv kernel layout is [in_c, out_c, k, k]
template <typename S>
void add_tconv(NetworkParams<S>& p, const std::string& name, int in_c, int out_c, int k,
               std::mt19937& rng, bool norm) {
  Tensor<S> kernel({in_c, out_c, k, k});
  fill_normal(kernel, rng);
  p.add(name + ".k", std::move(kernel));
  p.add(name + ".b", Tensor<S>::zeros({out_c}));
  if (norm) {
    p.add(name + ".g", Tensor<S>::full({out_c}, S(1)));
    p.add(name + ".be", Tensor<S>::zeros({out_c}));
  }
}

template <typename S>
Tensor<S> conv_in(const NetworkParams<S>& p, const std::string& name, const Tensor<S>& x,
                  int stride, int pad) {
  auto y = conv2d(x, p.at(name + ".k"), p.at(name + ".b"), stride, pad);
  return instance_norm(y, p.at(name + ".g"), p.at(name + ".be"));
}

template <typename S>
Tensor<S> tconv_in(const NetworkParams<S>& p, const std::string& name, const Tensor<S>& x,
                   int stride, int pad) {
  auto y = conv_transpose2d(x, p.at(name + ".k"), p.at(name + ".b"), stride, pad);
  return instance_norm(y, p.at(name + ".g"), p.at(name + ".be"));
}

}  // namespace detail

// ---- generator: c7s1 -> 2x stride-2 down -> residual blocks -> 2x up -> c7s1, tanh

struct GeneratorConfig {
  int input_channels = 3;
  int base_width = 64;
  int n_residual_blocks = 6;
  int image_size = 64;

  void validate() const {
    if (image_size % 4 != 0)
      throw std::invalid_argument("generator image_size must be divisible by 4");
    if (n_residual_blocks < 0)
      throw std::invalid_argument("n_residual_blocks must be >= 0");
    if (input_channels <= 0 || base_width <= 0)
      throw std::invalid_argument("generator channels must be positive");
  }
};

template <typename S>
NetworkParams<S> init_generator(const GeneratorConfig& cfg, unsigned seed) {
  cfg.validate();
  std::mt19937 rng(seed);
  NetworkParams<S> p;
  const int w = cfg.base_width;
  detail::add_conv(p, "c0", w, cfg.input_channels, 7, rng, true);
  detail::add_conv(p, "d1", 2 * w, w, 3, rng, true);
  detail::add_conv(p, "d2", 4 * w, 2 * w, 3, rng, true);
  for (int i = 0; i < cfg.n_residual_blocks; ++i) {
    detail::add_conv(p, "r" + std::to_string(i) + "a", 4 * w, 4 * w, 3, rng, true);
    detail::add_conv(p, "r" + std::to_string(i) + "b", 4 * w, 4 * w, 3, rng, true);
  }
  detail::add_tconv(p, "u1", 4 * w, 2 * w, 4, rng, true);
  detail::add_tconv(p, "u2", 2 * w, w, 4, rng, true);
  detail::add_conv(p, "out", cfg.input_channels, w, 7, rng, false);
  return p;
}

template <typename S>
Tensor<S> generator_forward(const NetworkParams<S>& p, const GeneratorConfig& cfg,
                            const Tensor<S>& image) {
  const Shape& s = image.shape();
  if (s.size() != 4 || s[1] != cfg.input_channels || s[2] != cfg.image_size ||
      s[3] != cfg.image_size)
    throw std::invalid_argument("generator: input " + shape_str(s) + " does not match config (" +
                                std::to_string(cfg.input_channels) + " channels, size " +
                                std::to_string(cfg.image_size) + ")");
  auto h = relu(detail::conv_in(p, "c0", image, 1, 3));
  h = relu(detail::conv_in(p, "d1", h, 2, 1));
  h = relu(detail::conv_in(p, "d2", h, 2, 1));
  for (int i = 0; i < cfg.n_residual_blocks; ++i) {
    const std::string r = "r" + std::to_string(i);
    auto t = relu(detail::conv_in(p, r + "a", h, 1, 1));
    t = detail::conv_in(p, r + "b", t, 1, 1);
    h = add(h, t);
  }
  h = relu(detail::tconv_in(p, "u1", h, 2, 1));
  h = relu(detail::tconv_in(p, "u2", h, 2, 1));
  return tanh(conv2d(h, p.at("out.k"), p.at("out.b"), 1, 3));
}

// ---- patch discriminator: k4 convs, LeakyReLU(0.2), norm on all but first/last

struct DiscriminatorConfig {
  int input_channels = 3;
  int base_width = 64;
  int n_stride2_layers = 3;  // default geometry gives a 70x70 receptive field
  bool use_norm = true;      // off: purely geometric net, used by the receptive-field probe

  void validate() const {
    if (input_channels <= 0 || base_width <= 0 || n_stride2_layers < 1)
      throw std::invalid_argument("invalid discriminator config");
  }
  int width(int layer) const { return base_width * std::min(1 << layer, 8); }
  int n_layers() const { return n_stride2_layers + 1; }  // plus the stride-1 layer
};

// r <- r + (k-1)*jump, jump <- jump*stride, over all layers including the head
inline int discriminator_receptive_field(const DiscriminatorConfig& cfg) {
  int r = 1, jump = 1;
  for (int i = 0; i < cfg.n_stride2_layers; ++i) {
    r += 3 * jump;
    jump *= 2;
  }
  r += 3 * jump;  // stride-1 layer
  r += 3 * jump;  // 1-channel head
  return r;
}

template <typename S>
NetworkParams<S> init_discriminator(const DiscriminatorConfig& cfg, unsigned seed) {
  cfg.validate();
  std::mt19937 rng(seed);
  NetworkParams<S> p;
  int in_c = cfg.input_channels;
  for (int i = 0; i < cfg.n_stride2_layers; ++i) {
    detail::add_conv(p, "l" + std::to_string(i), cfg.width(i), in_c, 4, rng, cfg.use_norm && i > 0);
    in_c = cfg.width(i);
  }
  detail::add_conv(p, "pre", cfg.width(cfg.n_stride2_layers), in_c, 4, rng, cfg.use_norm);
  detail::add_conv(p, "head", 1, cfg.width(cfg.n_stride2_layers), 4, rng, false);
  return p;
}

// returns patch logits [N,1,h,w]
template <typename S>
Tensor<S> discriminator_forward(const NetworkParams<S>& p, const DiscriminatorConfig& cfg,
                                const Tensor<S>& image) {
  if (image.shape().size() != 4 || image.shape()[1] != cfg.input_channels)
    throw std::invalid_argument("discriminator: bad input shape " + shape_str(image.shape()));
  auto h = leaky_relu(conv2d(image, p.at("l0.k"), p.at("l0.b"), 2, 1));
  for (int i = 1; i < cfg.n_stride2_layers; ++i) {
    const std::string l = "l" + std::to_string(i);
    h = cfg.use_norm ? leaky_relu(detail::conv_in(p, l, h, 2, 1))
                     : leaky_relu(conv2d(h, p.at(l + ".k"), p.at(l + ".b"), 2, 1));
  }
  h = cfg.use_norm ? leaky_relu(detail::conv_in(p, "pre", h, 1, 1))
                   : leaky_relu(conv2d(h, p.at("pre.k"), p.at("pre.b"), 1, 1));
  return conv2d(h, p.at("head.k"), p.at("head.b"), 1, 1);
}

// ---- U-Net: encoder/decoder with skip concatenation

struct UNetConfig {
  int in_channels = 3;
  int out_channels = 3;
  int base_width = 64;
  int image_size = 64;
  bool tanh_output = true;

  void validate() const {
    if (in_channels <= 0 || out_channels <= 0 || base_width <= 0)
      throw std::invalid_argument("invalid unet config");
    if (image_size < 4 || (image_size & (image_size - 1)) != 0)
      throw std::invalid_argument("unet image_size must be a power of two >= 4");
  }
  // downsample until the bottleneck is 2x2
  int depth() const {
    int d = 0, s = image_size;
    while (s > 2) {
      s /= 2;
      ++d;
    }
    return d;
  }
  int width(int level) const { return base_width * std::min(1 << level, 8); }
};

template <typename S>
NetworkParams<S> init_unet(const UNetConfig& cfg, unsigned seed) {
  cfg.validate();
  std::mt19937 rng(seed);
  NetworkParams<S> p;
  const int d = cfg.depth();
  int in_c = cfg.in_channels;
  for (int i = 0; i < d; ++i) {
    detail::add_conv(p, "e" + std::to_string(i), cfg.width(i), in_c, 4, rng, i > 0);
    in_c = cfg.width(i);
  }
  for (int i = d - 1; i >= 1; --i) {
    // decoder level i consumes width(i) (+ skip above level d-1)
    const int dec_in = (i == d - 1) ? cfg.width(i) : 2 * cfg.width(i);
    detail::add_tconv(p, "u" + std::to_string(i), dec_in, cfg.width(i - 1), 4, rng, true);
  }
  const int last_in = (d == 1) ? cfg.width(0) : 2 * cfg.width(0);
  detail::add_tconv(p, "u0", last_in, cfg.out_channels, 4, rng, false);
  return p;
}

template <typename S>
Tensor<S> unet_forward(const NetworkParams<S>& p, const UNetConfig& cfg, const Tensor<S>& x,
                       bool zero_bottleneck = false) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != cfg.in_channels || s[2] != cfg.image_size ||
      s[3] != cfg.image_size)
    throw std::invalid_argument("unet: input " + shape_str(s) + " does not match config");
  const int d = cfg.depth();
  std::vector<Tensor<S>> enc;
  Tensor<S> h = x;
  for (int i = 0; i < d; ++i) {
    if (i == 0)
      h = leaky_relu(conv2d(h, p.at("e0.k"), p.at("e0.b"), 2, 1));
    else
      h = leaky_relu(detail::conv_in(p, "e" + std::to_string(i), h, 2, 1));
    enc.push_back(h);
  }
  if (zero_bottleneck) h = scale(h, S(0));
  for (int i = d - 1; i >= 1; --i) {
    h = relu(detail::tconv_in(p, "u" + std::to_string(i), h, 2, 1));
    h = concat_channels(h, enc[static_cast<size_t>(i - 1)]);
  }
  h = conv_transpose2d(h, p.at("u0.k"), p.at("u0.b"), 2, 1);
  return cfg.tanh_output ? tanh(h) : h;
}

// ---- temporal predictor: two frames concatenated into one U-Net

struct PredictorConfig {
  int frame_channels = 3;
  int base_width = 64;
  int image_size = 64;

  UNetConfig unet() const {
    UNetConfig u;
    u.in_channels = 2 * frame_channels;
    u.out_channels = frame_channels;
    u.base_width = base_width;
    u.image_size = image_size;
    u.tanh_output = true;
    return u;
  }
};

template <typename S>
NetworkParams<S> init_predictor(const PredictorConfig& cfg, unsigned seed) {
  return init_unet<S>(cfg.unet(), seed);
}

template <typename S>
Tensor<S> predictor_forward(const NetworkParams<S>& p, const PredictorConfig& cfg,
                            const Tensor<S>& frame_prev, const Tensor<S>& frame_curr) {
  if (frame_prev.shape() != frame_curr.shape())
    throw std::invalid_argument("predictor: frame shapes differ, " +
                                shape_str(frame_prev.shape()) + " vs " +
                                shape_str(frame_curr.shape()));
  return unet_forward(p, cfg.unet(), concat_channels(frame_prev, frame_curr));
}

// ---- oracle segmenter: U-Net emitting per-pixel class logits

struct SegmenterConfig {
  int input_channels = 3;
  int n_classes = 3;
  int base_width = 16;
  int image_size = 64;

  UNetConfig unet() const {
    UNetConfig u;
    u.in_channels = input_channels;
    u.out_channels = n_classes;
    u.base_width = base_width;
    u.image_size = image_size;
    u.tanh_output = false;
    return u;
  }
};

template <typename S>
NetworkParams<S> init_segmenter(const SegmenterConfig& cfg, unsigned seed) {
  return init_unet<S>(cfg.unet(), seed);
}

template <typename S>
Tensor<S> segmenter_forward(const NetworkParams<S>& p, const SegmenterConfig& cfg,
                            const Tensor<S>& image) {
  return unet_forward(p, cfg.unet(), image);
}

}  // namespace rgan
