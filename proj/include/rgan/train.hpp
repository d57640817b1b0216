#pragma once

// Alternating adversarial optimization: per step the discriminators train on
// real frames vs history-buffered fakes, then generators and predictors train
// jointly on the combined objective with the discriminators frozen.
// Fully deterministic given (seed, config, data); checkpoints capture the
// complete training state for bitwise resume.

#include "rgan/data.hpp"
#include "rgan/losses.hpp"
#include "rgan/nn.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace rgan {

// loss-term gating mirroring the three compared configurations
enum class LossMode { Cycle, Recycle, Combined };

inline const char* loss_mode_name(LossMode m) {
  switch (m) {
    case LossMode::Cycle: return "cycle";
    case LossMode::Recycle: return "recycle";
    case LossMode::Combined: return "combined";
  }
  return "?";
}

inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "cycle") return LossMode::Cycle;
  if (s == "recycle") return LossMode::Recycle;
  if (s == "combined") return LossMode::Combined;
  throw std::invalid_argument("unknown loss mode: " + s);
}

struct TrainConfig {
  int steps = 2000;
  int batch_size = 1;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights weights;
  double adv_weight = 1.0;
  AdvMode adv_mode = AdvMode::LeastSquares;
  LossMode loss_mode = LossMode::Recycle;
  unsigned seed = 0;
  int pool_size = 50;          // fake-history buffer capacity per domain, 0 disables
  int checkpoint_interval = 0; // 0: only the final checkpoint
  int lr_decay_start = -1;     // -1: steps/2

  GeneratorConfig gen;
  DiscriminatorConfig disc;
  PredictorConfig pred;

  int decay_start() const { return lr_decay_start < 0 ? steps / 2 : lr_decay_start; }

  // exactly linear from decay start to zero at the final step
  double lr_at(long step) const {
    const int ds = decay_start();
    if (step < ds || steps == ds) return lr;
    return lr * static_cast<double>(steps - step) / static_cast<double>(steps - ds);
  }

  void validate() const {
    if (steps < 0) throw std::invalid_argument("steps must be nonnegative");
    if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
    if (!(lr > 0)) throw std::invalid_argument("learning rate must be positive");
    if (pool_size != 0 && pool_size < batch_size)
      throw std::invalid_argument("pool_size must be 0 or >= batch_size");
    weights.validate();
    gen.validate();
    disc.validate();
  }
};

// ---- optimizer ----

// Standard bias-corrected adaptive-moment update on one parameter tensor.
// step_t is 1-based. Non-finite gradients reject the step.
template <typename S>
void adam_update(Tensor<S>& param, const std::string& name, ArrayX<S>& m, ArrayX<S>& v,
                 double lr, double beta1, double beta2, double eps, long step_t) {
  if (!param.has_grad()) return;  // untouched parameter: no update
  ArrayX<S>& g = param.grad();
  if (!g.isFinite().all())
    throw std::runtime_error("non-finite gradient for parameter " + name);
  if (m.size() != g.size()) m = ArrayX<S>::Zero(g.size());
  if (v.size() != g.size()) v = ArrayX<S>::Zero(g.size());
  m = S(beta1) * m + S(1 - beta1) * g;
  v = S(beta2) * v + S(1 - beta2) * g.square();
  const S bc1 = S(1.0 - std::pow(beta1, static_cast<double>(step_t)));
  const S bc2 = S(1.0 - std::pow(beta2, static_cast<double>(step_t)));
  param.val() -= S(lr) * (m / bc1) / ((v / bc2).sqrt() + S(eps));
}

template <typename S>
struct AdamState {
  std::vector<ArrayX<S>> m, v;

  void match(const NetworkParams<S>& p) {
    if (m.size() != p.items.size()) {
      m.assign(p.items.size(), ArrayX<S>());
      v.assign(p.items.size(), ArrayX<S>());
    }
  }
};

template <typename S>
void adam_step(NetworkParams<S>& params, AdamState<S>& opt, double lr, const TrainConfig& cfg,
               long step_t) {
  opt.match(params);
  for (size_t i = 0; i < params.items.size(); ++i)
    adam_update(params.items[i].second, params.items[i].first, opt.m[i], opt.v[i], lr,
                cfg.beta1, cfg.beta2, cfg.adam_eps, step_t);
}

// ---- fake-history buffer (50/50 mix of fresh and buffered fakes once warm) ----

template <typename S>
struct FakePool {
  int capacity = 50;
  std::vector<Tensor<S>> items;  // single frames [C,H,W]

  // consumes one batch of fresh fakes, returns a same-size batch
  Tensor<S> query(const Tensor<S>& fakes, std::mt19937& rng) {
    if (capacity == 0) return fakes.clone();
    const Shape& s = fakes.shape();
    const long stride = static_cast<long>(s[1]) * s[2] * s[3];
    Tensor<S> out(s);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (int i = 0; i < s[0]; ++i) {
      Tensor<S> f({s[1], s[2], s[3]});
      f.val() = fakes.val().segment(i * stride, stride);
      if (static_cast<int>(items.size()) < capacity) {
        items.push_back(f.clone());
        out.val().segment(i * stride, stride) = f.val();
      } else if (coin(rng) < 0.5) {
        std::uniform_int_distribution<int> pick(0, capacity - 1);
        const int j = pick(rng);
        out.val().segment(i * stride, stride) = items[static_cast<size_t>(j)].val();
        items[static_cast<size_t>(j)] = f.clone();
      } else {
        out.val().segment(i * stride, stride) = f.val();
      }
    }
    return out;
  }
};

// ---- training state ----

template <typename S>
struct TrainState {
  TrainConfig cfg;
  NetworkParams<S> g_x, g_y, d_x, d_y, p_x, p_y;
  AdamState<S> opt_gx, opt_gy, opt_dx, opt_dy, opt_px, opt_py;
  FakePool<S> pool_x, pool_y;
  std::mt19937 rng;
  long step = 0;
};

template <typename S>
TrainState<S> init_train_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState<S> st;
  st.cfg = cfg;
  st.g_x = init_generator<S>(cfg.gen, cfg.seed * 16 + 1);
  st.g_y = init_generator<S>(cfg.gen, cfg.seed * 16 + 2);
  st.d_x = init_discriminator<S>(cfg.disc, cfg.seed * 16 + 3);
  st.d_y = init_discriminator<S>(cfg.disc, cfg.seed * 16 + 4);
  st.p_x = init_predictor<S>(cfg.pred, cfg.seed * 16 + 5);
  st.p_y = init_predictor<S>(cfg.pred, cfg.seed * 16 + 6);
  st.pool_x.capacity = cfg.pool_size;
  st.pool_y.capacity = cfg.pool_size;
  st.rng.seed(cfg.seed * 16 + 7);
  return st;
}

namespace detail {

template <typename S>
void require_finite(const Tensor<S>& loss, long step, const char* what) {
  if (!loss.all_finite())
    throw std::runtime_error(std::string("non-finite ") + what + " loss at step " +
                             std::to_string(step));
}

}  // namespace detail

// One alternating optimization step; mutates state in place.
template <typename S>
LossReport train_step(TrainState<S>& st, const TripletBatch<S>& batch_x,
                      const TripletBatch<S>& batch_y) {
  const TrainConfig& cfg = st.cfg;
  batch_x.validate();
  batch_y.validate();
  const double lr = cfg.lr_at(st.step);
  const long t = st.step + 1;
  LossReport report;
  report.include_cycle = cfg.loss_mode != LossMode::Recycle;

  MapFn<S> fgx = [&](const Tensor<S>& v) { return generator_forward(st.g_x, cfg.gen, v); };
  MapFn<S> fgy = [&](const Tensor<S>& v) { return generator_forward(st.g_y, cfg.gen, v); };
  MapFn<S> fdx = [&](const Tensor<S>& v) { return discriminator_forward(st.d_x, cfg.disc, v); };
  MapFn<S> fdy = [&](const Tensor<S>& v) { return discriminator_forward(st.d_y, cfg.disc, v); };
  PredictFn<S> fpx = [&](const Tensor<S>& a, const Tensor<S>& b) {
    return predictor_forward(st.p_x, cfg.pred, a, b);
  };
  PredictFn<S> fpy = [&](const Tensor<S>& a, const Tensor<S>& b) {
    return predictor_forward(st.p_y, cfg.pred, a, b);
  };

  // phase 1: discriminators, on detached history-buffered fakes
  if (cfg.adv_weight > 0) {
    Tensor<S> fake_x, fake_y;
    {
      NoGrad<S> off;
      fake_x = st.pool_x.query(fgx(batch_y.curr), st.rng);
      fake_y = st.pool_y.query(fgy(batch_x.curr), st.rng);
    }
    {
      Tape<S> tape;
      st.d_x.set_requires_grad(true);
      st.d_x.zero_grad();
      auto loss = scale(adversarial_loss(fdx, batch_x.curr, fake_x, cfg.adv_mode,
                                         AdvSide::Discriminator),
                        S(cfg.adv_weight));
      detail::require_finite(loss, st.step, "discriminator");
      report.d_loss_x = static_cast<double>(loss.item());
      tape.backward(loss);
      adam_step(st.d_x, st.opt_dx, lr, cfg, t);
    }
    {
      Tape<S> tape;
      st.d_y.set_requires_grad(true);
      st.d_y.zero_grad();
      auto loss = scale(adversarial_loss(fdy, batch_y.curr, fake_y, cfg.adv_mode,
                                         AdvSide::Discriminator),
                        S(cfg.adv_weight));
      detail::require_finite(loss, st.step, "discriminator");
      report.d_loss_y = static_cast<double>(loss.item());
      tape.backward(loss);
      adam_step(st.d_y, st.opt_dy, lr, cfg, t);
    }
  }

  // phase 2: generators and predictors jointly, discriminators frozen
  const bool temporal = cfg.loss_mode != LossMode::Cycle;
  {
    Tape<S> tape;
    st.d_x.set_requires_grad(false);
    st.d_y.set_requires_grad(false);
    st.g_x.set_requires_grad(true);
    st.g_y.set_requires_grad(true);
    st.g_x.zero_grad();
    st.g_y.zero_grad();
    st.p_x.set_requires_grad(temporal);
    st.p_y.set_requires_grad(temporal);
    if (temporal) {
      st.p_x.zero_grad();
      st.p_y.zero_grad();
    }

    Tensor<S> total;
    auto accumulate = [&](Tensor<S> term) {
      total = total.defined() ? add(total, term) : term;
    };
    if (cfg.adv_weight > 0) {
      auto adv_x = adversarial_loss(fdx, batch_x.curr, fgx(batch_y.curr), cfg.adv_mode,
                                    AdvSide::Generator);
      auto adv_y = adversarial_loss(fdy, batch_y.curr, fgy(batch_x.curr), cfg.adv_mode,
                                    AdvSide::Generator);
      report.adv_x = static_cast<double>(adv_x.item());
      report.adv_y = static_cast<double>(adv_y.item());
      accumulate(scale(adv_x, S(cfg.adv_weight)));
      accumulate(scale(adv_y, S(cfg.adv_weight)));
    }
    if (temporal) {
      auto rec_x = recycle_loss(fgx, fgy, fpy, batch_x);
      auto rec_y = recycle_loss(fgy, fgx, fpx, batch_y);
      auto tau_x = recurrent_loss(fpx, batch_x);
      auto tau_y = recurrent_loss(fpy, batch_y);
      report.recycle_x = static_cast<double>(rec_x.item());
      report.recycle_y = static_cast<double>(rec_y.item());
      report.recurrent_x = static_cast<double>(tau_x.item());
      report.recurrent_y = static_cast<double>(tau_y.item());
      if (cfg.weights.lambda_rx > 0) accumulate(scale(rec_x, S(cfg.weights.lambda_rx)));
      if (cfg.weights.lambda_ry > 0) accumulate(scale(rec_y, S(cfg.weights.lambda_ry)));
      if (cfg.weights.lambda_tau_x > 0) accumulate(scale(tau_x, S(cfg.weights.lambda_tau_x)));
      if (cfg.weights.lambda_tau_y > 0) accumulate(scale(tau_y, S(cfg.weights.lambda_tau_y)));
    }
    if (report.include_cycle) {
      auto cyc_x = cycle_loss(fgx, fgy, batch_x.curr);
      auto cyc_y = cycle_loss(fgy, fgx, batch_y.curr);
      report.cycle_x = static_cast<double>(cyc_x.item());
      report.cycle_y = static_cast<double>(cyc_y.item());
      if (cfg.weights.lambda_cx > 0) accumulate(scale(cyc_x, S(cfg.weights.lambda_cx)));
      if (cfg.weights.lambda_cy > 0) accumulate(scale(cyc_y, S(cfg.weights.lambda_cy)));
    }

    if (total.defined()) {
      detail::require_finite(total, st.step, "generator");
      report.total = static_cast<double>(total.item());
      if (total.requires_grad()) {
        tape.backward(total);
        adam_step(st.g_x, st.opt_gx, lr, cfg, t);
        adam_step(st.g_y, st.opt_gy, lr, cfg, t);
        if (temporal) {
          adam_step(st.p_x, st.opt_px, lr, cfg, t);
          adam_step(st.p_y, st.opt_py, lr, cfg, t);
        }
      }
    }
  }

  st.step += 1;
  return report;
}

// ---- checkpoint format ----
// magic "RGAN", u32 version, config text block, named tensor table
// (u32 name length, name, u8 dtype tag, u32 rank, i32 dims, raw values),
// rng state string, u64 step. Little-endian throughout.

inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void read_pod(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("truncated checkpoint");
}
inline void write_string(std::ostream& os, const std::string& s) {
  write_pod(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_string(std::istream& is) {
  uint32_t n = 0;
  read_pod(is, n);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("truncated checkpoint");
  return s;
}

template <typename S>
constexpr uint8_t dtype_tag() {
  return sizeof(S) == 4 ? 0 : 1;
}

template <typename S>
void write_tensor(std::ostream& os, const std::string& name, const Shape& shape,
                  const ArrayX<S>& values) {
  write_string(os, name);
  write_pod(os, dtype_tag<S>());
  write_pod(os, static_cast<uint32_t>(shape.size()));
  for (int d : shape) write_pod(os, static_cast<int32_t>(d));
  os.write(reinterpret_cast<const char*>(values.data()),
           static_cast<std::streamsize>(values.size() * sizeof(S)));
}

template <typename S>
std::pair<std::string, Tensor<S>> read_tensor(std::istream& is) {
  const std::string name = read_string(is);
  uint8_t tag = 0;
  read_pod(is, tag);
  if (tag != dtype_tag<S>())
    throw std::runtime_error("checkpoint dtype mismatch for tensor " + name);
  uint32_t rank = 0;
  read_pod(is, rank);
  Shape shape(rank);
  for (uint32_t i = 0; i < rank; ++i) {
    int32_t d = 0;
    read_pod(is, d);
    shape[i] = d;
  }
  Tensor<S> t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(S)));
  if (!is) throw std::runtime_error("truncated checkpoint");
  return {name, t};
}

inline std::string serialize_config(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "steps=" << c.steps << "\nbatch_size=" << c.batch_size << "\nlr=" << c.lr
     << "\nbeta1=" << c.beta1 << "\nbeta2=" << c.beta2 << "\nadam_eps=" << c.adam_eps
     << "\nlambda_rx=" << c.weights.lambda_rx << "\nlambda_ry=" << c.weights.lambda_ry
     << "\nlambda_tau_x=" << c.weights.lambda_tau_x
     << "\nlambda_tau_y=" << c.weights.lambda_tau_y << "\nlambda_cx=" << c.weights.lambda_cx
     << "\nlambda_cy=" << c.weights.lambda_cy << "\nadv_weight=" << c.adv_weight
     << "\nadv_mode=" << (c.adv_mode == AdvMode::Log ? "log" : "least_squares")
     << "\nloss_mode=" << loss_mode_name(c.loss_mode) << "\nseed=" << c.seed
     << "\npool_size=" << c.pool_size << "\ncheckpoint_interval=" << c.checkpoint_interval
     << "\nlr_decay_start=" << c.lr_decay_start << "\ngen_channels=" << c.gen.input_channels
     << "\ngen_width=" << c.gen.base_width << "\ngen_blocks=" << c.gen.n_residual_blocks
     << "\nimage_size=" << c.gen.image_size << "\ndisc_width=" << c.disc.base_width
     << "\ndisc_layers=" << c.disc.n_stride2_layers << "\npred_width=" << c.pred.base_width
     << "\n";
  return os.str();
}

inline TrainConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  TrainConfig c;
  auto geti = [&](const char* k) { return std::stoi(kv.at(k)); };
  auto getd = [&](const char* k) { return std::stod(kv.at(k)); };
  c.steps = geti("steps");
  c.batch_size = geti("batch_size");
  c.lr = getd("lr");
  c.beta1 = getd("beta1");
  c.beta2 = getd("beta2");
  c.adam_eps = getd("adam_eps");
  c.weights.lambda_rx = getd("lambda_rx");
  c.weights.lambda_ry = getd("lambda_ry");
  c.weights.lambda_tau_x = getd("lambda_tau_x");
  c.weights.lambda_tau_y = getd("lambda_tau_y");
  c.weights.lambda_cx = getd("lambda_cx");
  c.weights.lambda_cy = getd("lambda_cy");
  c.adv_weight = getd("adv_weight");
  c.adv_mode = kv.at("adv_mode") == "log" ? AdvMode::Log : AdvMode::LeastSquares;
  c.loss_mode = parse_loss_mode(kv.at("loss_mode"));
  c.seed = static_cast<unsigned>(std::stoul(kv.at("seed")));
  c.pool_size = geti("pool_size");
  c.checkpoint_interval = geti("checkpoint_interval");
  c.lr_decay_start = geti("lr_decay_start");
  c.gen.input_channels = geti("gen_channels");
  c.gen.base_width = geti("gen_width");
  c.gen.n_residual_blocks = geti("gen_blocks");
  c.gen.image_size = geti("image_size");
  c.disc.input_channels = c.gen.input_channels;
  c.disc.base_width = geti("disc_width");
  c.disc.n_stride2_layers = geti("disc_layers");
  c.pred.frame_channels = c.gen.input_channels;
  c.pred.base_width = geti("pred_width");
  c.pred.image_size = c.gen.image_size;
  return c;
}

template <typename S>
void write_network(std::ostream& os, const std::string& prefix, const NetworkParams<S>& p,
                   const AdamState<S>& opt) {
  for (size_t i = 0; i < p.items.size(); ++i) {
    const auto& [name, t] = p.items[i];
    write_tensor(os, prefix + "/" + name, t.shape(), t.val());
    const ArrayX<S> zero = ArrayX<S>::Zero(t.size());
    write_tensor(os, prefix + "/" + name + ".m", t.shape(),
                 (i < opt.m.size() && opt.m[i].size()) ? opt.m[i] : zero);
    write_tensor(os, prefix + "/" + name + ".v", t.shape(),
                 (i < opt.v.size() && opt.v[i].size()) ? opt.v[i] : zero);
  }
}

}  // namespace detail

template <typename S>
void save_checkpoint(const TrainState<S>& st, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os.write("RGAN", 4);
  detail::write_pod(os, kCheckpointVersion);
  detail::write_string(os, detail::serialize_config(st.cfg));

  uint32_t n_tensors = 0;
  const NetworkParams<S>* nets[] = {&st.g_x, &st.g_y, &st.d_x, &st.d_y, &st.p_x, &st.p_y};
  for (auto* n : nets) n_tensors += 3 * static_cast<uint32_t>(n->items.size());
  n_tensors += static_cast<uint32_t>(st.pool_x.items.size() + st.pool_y.items.size());
  detail::write_pod(os, n_tensors);

  detail::write_network(os, "g_x", st.g_x, st.opt_gx);
  detail::write_network(os, "g_y", st.g_y, st.opt_gy);
  detail::write_network(os, "d_x", st.d_x, st.opt_dx);
  detail::write_network(os, "d_y", st.d_y, st.opt_dy);
  detail::write_network(os, "p_x", st.p_x, st.opt_px);
  detail::write_network(os, "p_y", st.p_y, st.opt_py);
  for (size_t i = 0; i < st.pool_x.items.size(); ++i)
    detail::write_tensor(os, "pool_x/" + std::to_string(i), st.pool_x.items[i].shape(),
                         st.pool_x.items[i].val());
  for (size_t i = 0; i < st.pool_y.items.size(); ++i)
    detail::write_tensor(os, "pool_y/" + std::to_string(i), st.pool_y.items[i].shape(),
                         st.pool_y.items[i].val());

  std::ostringstream rng_os;
  rng_os << st.rng;
  detail::write_string(os, rng_os.str());
  detail::write_pod(os, static_cast<uint64_t>(st.step));
}

template <typename S>
TrainState<S> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "RGAN", 4) != 0)
    throw std::runtime_error("bad checkpoint header: " + path);
  uint32_t version = 0;
  detail::read_pod(is, version);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint version mismatch: file has " + std::to_string(version) +
                             ", expected " + std::to_string(kCheckpointVersion));
  const TrainConfig cfg = detail::parse_config(detail::read_string(is));
  TrainState<S> st = init_train_state<S>(cfg);

  uint32_t n_tensors = 0;
  detail::read_pod(is, n_tensors);
  auto net_of = [&](const std::string& prefix) -> NetworkParams<S>* {
    if (prefix == "g_x") return &st.g_x;
    if (prefix == "g_y") return &st.g_y;
    if (prefix == "d_x") return &st.d_x;
    if (prefix == "d_y") return &st.d_y;
    if (prefix == "p_x") return &st.p_x;
    if (prefix == "p_y") return &st.p_y;
    return nullptr;
  };
  auto opt_of = [&](const std::string& prefix) -> AdamState<S>* {
    if (prefix == "g_x") return &st.opt_gx;
    if (prefix == "g_y") return &st.opt_gy;
    if (prefix == "d_x") return &st.opt_dx;
    if (prefix == "d_y") return &st.opt_dy;
    if (prefix == "p_x") return &st.opt_px;
    if (prefix == "p_y") return &st.opt_py;
    return nullptr;
  };
  for (uint32_t i = 0; i < n_tensors; ++i) {
    auto [full_name, t] = detail::read_tensor<S>(is);
    const auto slash = full_name.find('/');
    if (slash == std::string::npos)
      throw std::runtime_error("malformed tensor name in checkpoint: " + full_name);
    const std::string prefix = full_name.substr(0, slash);
    std::string name = full_name.substr(slash + 1);
    if (prefix == "pool_x" || prefix == "pool_y") {
      (prefix == "pool_x" ? st.pool_x : st.pool_y).items.push_back(t);
      continue;
    }
    NetworkParams<S>* net = net_of(prefix);
    AdamState<S>* opt = opt_of(prefix);
    if (!net) throw std::runtime_error("unknown network in checkpoint: " + prefix);
    opt->match(*net);
    bool is_m = false, is_v = false;
    if (name.size() > 2 && name.substr(name.size() - 2) == ".m") {
      is_m = true;
      name = name.substr(0, name.size() - 2);
    } else if (name.size() > 2 && name.substr(name.size() - 2) == ".v") {
      is_v = true;
      name = name.substr(0, name.size() - 2);
    }
    size_t idx = net->items.size();
    for (size_t j = 0; j < net->items.size(); ++j)
      if (net->items[j].first == name) {
        idx = j;
        break;
      }
    if (idx == net->items.size())
      throw std::runtime_error("unknown parameter in checkpoint: " + full_name);
    if (net->items[idx].second.shape() != t.shape())
      throw std::runtime_error("shape mismatch in checkpoint for " + full_name);
    if (is_m)
      opt->m[idx] = t.val();
    else if (is_v)
      opt->v[idx] = t.val();
    else
      net->items[idx].second.val() = t.val();
  }

  std::istringstream rng_is(detail::read_string(is));
  rng_is >> st.rng;
  uint64_t step = 0;
  detail::read_pod(is, step);
  st.step = static_cast<long>(step);
  return st;
}

// ---- full training run ----

struct FitPaths {
  std::string checkpoint;   // final (and periodic) checkpoint file
  std::string loss_csv;     // one row per step
};

// Runs train_step for cfg.steps with per-step triplet sampling from both
// streams. Resumable: pass a loaded state instead of a fresh one.
template <typename S>
void fit(TrainState<S>& st, const VideoStream<S>& stream_x, const VideoStream<S>& stream_y,
         const FitPaths& paths, std::ostream* log = nullptr) {
  const TrainConfig& cfg = st.cfg;
  std::ofstream csv;
  if (!paths.loss_csv.empty()) {
    const bool fresh = st.step == 0;
    csv.open(paths.loss_csv, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw std::runtime_error("cannot write loss csv: " + paths.loss_csv);
    if (fresh) csv << LossReport::csv_header() << "\n";
  }
  while (st.step < cfg.steps) {
    auto batch_x = sample_triplets(stream_x, cfg.batch_size, st.rng);
    auto batch_y = sample_triplets(stream_y, cfg.batch_size, st.rng);
    const long step_before = st.step;
    LossReport r = train_step(st, batch_x, batch_y);
    if (csv.is_open()) csv << r.csv_row(step_before) << "\n";
    if (log && (st.step % 100 == 0 || st.step == cfg.steps))
      (*log) << "step " << st.step << "/" << cfg.steps << " total=" << r.total
             << " d=(" << r.d_loss_x << "," << r.d_loss_y << ")\n";
    if (!paths.checkpoint.empty() && cfg.checkpoint_interval > 0 &&
        st.step % cfg.checkpoint_interval == 0)
      save_checkpoint(st, paths.checkpoint);
  }
  if (!paths.checkpoint.empty()) save_checkpoint(st, paths.checkpoint);
  if (csv.is_open()) csv.flush();
}

}  // namespace rgan
