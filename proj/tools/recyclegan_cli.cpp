// Command-line entry point: dataset generation, training, inference,
// evaluation, and the numerical verification suite as subcommands of one
// binary. Exit codes: 0 success, 1 validation error, 2 numerical failure.

#include "rgan/verify.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using Scalar = float;  // training precision; verification runs at 64-bit

namespace {


// key=value config file applied after parsing: CLI flags take precedence,
// unknown keys are rejected
void apply_config_file(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  " is not key=value: " + line);
    const std::string key = "--" + line.substr(0, eq);
    auto* opt = sub->get_option_no_throw(key);
    if (!opt || key == "--config")
      throw std::invalid_argument("unknown config key: " + line.substr(0, eq));
    if (opt->count() == 0) {
      opt->add_result(line.substr(eq + 1));
      opt->run_callback();
    }
  }
}

void write_manifest(const fs::path& path, const std::map<std::string, std::string>& kv) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write manifest: " + path.string());
  for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
}

std::map<std::string, std::string> read_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open manifest: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void require_writable_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw std::invalid_argument("output directory not empty (use --force): " + dir.string());
  fs::create_directories(dir);
}

struct GenDataOpts {
  std::string out;
  int frames = 500;
  int image_size = 64;
  unsigned seed = 0;
  std::string task = "image";  // or "labels": domain Y becomes label renderings
  double max_step = 1.0;
  bool mirror = true;
  bool force = false;
};

void cmd_gen_data(const GenDataOpts& o) {
  if (o.task != "image" && o.task != "labels")
    throw std::invalid_argument("task must be image or labels");
  require_writable_dir(o.out, o.force);

  rgan::SyntheticSceneConfig sc;
  sc.image_size = o.image_size;
  sc.frames = o.frames;
  sc.map.mirror = o.mirror;
  sc.max_step = o.max_step;
  auto d = rgan::generate_synthetic_domains<Scalar>(sc, o.seed * 2 + 1, o.seed * 2 + 2);
  if (o.task == "labels") d.stream_y = rgan::label_stream_of(d.stream_y);

  rgan::save_stream(d.stream_x, (fs::path(o.out) / "X" / "0").string());
  rgan::save_stream(d.stream_y, (fs::path(o.out) / "Y" / "0").string());
  write_manifest(fs::path(o.out) / "manifest.txt",
                 {{"image_size", std::to_string(o.image_size)},
                  {"frames", std::to_string(o.frames)},
                  {"seed", std::to_string(o.seed)},
                  {"task", o.task},
                  {"mirror", o.mirror ? "1" : "0"},
                  {"channel_perm", "120"}});

  for (const auto* s : {&d.stream_x, &d.stream_y}) {
    double lo = 1e30, hi = -1e30, sum = 0;
    long n = 0;
    for (const auto& f : s->frames) {
      lo = std::min(lo, static_cast<double>(f.val().minCoeff()));
      hi = std::max(hi, static_cast<double>(f.val().maxCoeff()));
      sum += f.val().sum();
      n += f.size();
    }
    std::cout << "domain " << s->domain_tag << ": " << s->length() << " frames "
              << o.image_size << "x" << o.image_size << " range [" << lo << "," << hi
              << "] mean " << sum / n << "\n";
  }
  std::cout << "dataset written to " << o.out << "\n";
}

struct TrainOpts {
  std::string data;
  std::string out;
  int steps = 2000;
  int batch_size = 1;
  double lr = 2e-4;
  std::string loss = "recycle";
  std::string adv = "least_squares";
  unsigned seed = 0;
  int pool_size = 50;
  int checkpoint_interval = 0;
  int lr_decay_start = -1;
  double lambda = 10.0;
  double adv_weight = 1.0;
  int gen_width = 64;
  int gen_blocks = 6;
  int disc_width = 64;
  int disc_layers = 3;
  int pred_width = 64;
  bool resume = false;
};

void cmd_train(const TrainOpts& o) {
  const auto manifest = read_manifest(fs::path(o.data) / "manifest.txt");
  const int image_size = std::stoi(manifest.at("image_size"));
  auto stream_x = rgan::load_stream<Scalar>((fs::path(o.data) / "X" / "0").string());
  auto stream_y = rgan::load_stream<Scalar>((fs::path(o.data) / "Y" / "0").string());

  fs::create_directories(o.out);
  rgan::FitPaths paths{(fs::path(o.out) / "checkpoint.bin").string(),
                       (fs::path(o.out) / "loss.csv").string()};

  rgan::TrainState<Scalar> st;
  if (o.resume) {
    if (!fs::exists(paths.checkpoint))
      throw std::invalid_argument("no checkpoint to resume from: " + paths.checkpoint);
    st = rgan::load_checkpoint<Scalar>(paths.checkpoint);
    st.cfg.steps = o.steps;
  } else {
    rgan::TrainConfig cfg;
    cfg.steps = o.steps;
    cfg.batch_size = o.batch_size;
    cfg.lr = o.lr;
    cfg.loss_mode = rgan::parse_loss_mode(o.loss);
    cfg.adv_mode = o.adv == "log" ? rgan::AdvMode::Log : rgan::AdvMode::LeastSquares;
    cfg.seed = o.seed;
    cfg.pool_size = o.pool_size;
    cfg.checkpoint_interval = o.checkpoint_interval;
    cfg.lr_decay_start = o.lr_decay_start;
    cfg.adv_weight = o.adv_weight;
    cfg.weights.lambda_rx = cfg.weights.lambda_ry = o.lambda;
    cfg.weights.lambda_tau_x = cfg.weights.lambda_tau_y = o.lambda;
    cfg.weights.lambda_cx = cfg.weights.lambda_cy = o.lambda;
    cfg.gen.base_width = o.gen_width;
    cfg.gen.n_residual_blocks = o.gen_blocks;
    cfg.gen.image_size = image_size;
    cfg.disc.base_width = o.disc_width;
    cfg.disc.n_stride2_layers = o.disc_layers;
    cfg.pred.base_width = o.pred_width;
    cfg.pred.image_size = image_size;
    st = rgan::init_train_state<Scalar>(cfg);
  }
  rgan::fit(st, stream_x, stream_y, paths, &std::cout);
  std::cout << "training finished at step " << st.step << "; checkpoint " << paths.checkpoint
            << "\n";
}

struct InferOpts {
  std::string checkpoint;
  std::string input;
  std::string out;
  std::string direction = "x2y";
  bool smooth = false;
  bool force = false;
};

void cmd_infer(const InferOpts& o) {
  if (o.direction != "x2y" && o.direction != "y2x")
    throw std::invalid_argument("direction must be x2y or y2x");
  auto st = rgan::load_checkpoint<Scalar>(o.checkpoint);
  auto stream = rgan::load_stream<Scalar>(o.input);
  if (stream.length() == 0) throw std::invalid_argument("empty input stream");
  if (stream.frames[0].shape()[1] != st.cfg.gen.image_size)
    throw std::invalid_argument(
        "stream image size " + std::to_string(stream.frames[0].shape()[1]) +
        " does not match checkpoint image size " + std::to_string(st.cfg.gen.image_size));
  require_writable_dir(o.out, o.force);

  const auto& g = o.direction == "x2y" ? st.g_y : st.g_x;
  const auto& p = o.direction == "x2y" ? st.p_y : st.p_x;
  auto out = o.smooth
                 ? rgan::infer_smoothed(g, st.cfg.gen, p, st.cfg.pred, stream)
                 : rgan::infer_framewise(g, st.cfg.gen, stream);
  out.labels.clear();
  rgan::save_stream(out, o.out);
  write_manifest(fs::path(o.out) / "manifest.txt",
                 {{"mode", o.smooth ? "smoothed" : "framewise"},
                  {"direction", o.direction},
                  {"checkpoint", o.checkpoint},
                  {"frames", std::to_string(out.length())}});
  std::cout << "wrote " << out.length() << " frames to " << o.out << "\n";
}

struct EvalOpts {
  std::string checkpoint;
  std::string checkpoint_b;
  std::string data;
  std::string out;
  int sample = 8;
  int oracle_steps = 300;
  double oracle_lr = 2e-3;
  int oracle_width = 8;
};

json eval_one(const std::string& ckpt_path, const EvalOpts& o,
              const rgan::SyntheticDomains<Scalar>& d, const std::string& task,
              const rgan::NetworkParams<Scalar>& oracle, const rgan::SegmenterConfig& sc) {
  auto st = rgan::load_checkpoint<Scalar>(ckpt_path);
  if (d.stream_x.frames[0].shape()[1] != st.cfg.gen.image_size)
    throw std::invalid_argument("dataset image size does not match checkpoint");
  rgan::MapFn<Scalar> g_y = [&](const rgan::Tensor<Scalar>& f) {
    rgan::Tensor<Scalar> b({1, f.shape()[0], f.shape()[1], f.shape()[2]});
    b.val() = f.val();
    auto out = rgan::generator_forward(st.g_y, st.cfg.gen, b);
    rgan::Tensor<Scalar> r({out.shape()[1], out.shape()[2], out.shape()[3]});
    r.val() = out.val();
    return r;
  };
  rgan::MapFn<Scalar> g_x = [&](const rgan::Tensor<Scalar>& f) {
    rgan::Tensor<Scalar> b({1, f.shape()[0], f.shape()[1], f.shape()[2]});
    b.val() = f.val();
    auto out = rgan::generator_forward(st.g_x, st.cfg.gen, b);
    rgan::Tensor<Scalar> r({out.shape()[1], out.shape()[2], out.shape()[3]});
    r.val() = out.val();
    return r;
  };

  json rep;
  rep["checkpoint"] = ckpt_path;
  rep["step"] = st.step;
  rep["loss_mode"] = rgan::loss_mode_name(st.cfg.loss_mode);

  if (task == "labels") {
    // X->Y maps images to label renderings; quantize and score against gt
    const int h = d.stream_x.frames[0].shape()[1], w = d.stream_x.frames[0].shape()[2];
    std::vector<rgan::LabelMap> pred, gt;
    for (int t = 0; t < d.stream_x.length(); ++t) {
      pred.push_back(rgan::quantize_to_labels(g_y(d.stream_x.frames[t])));
      gt.push_back(d.gt_map.apply_labels(d.stream_x.labels[t], h, w));
    }
    auto m = rgan::seg_metrics(pred, gt, 3);
    rep["seg"] = {{"mean_pixel_accuracy", m.mean_pixel_accuracy},
                  {"average_class_accuracy", m.average_class_accuracy},
                  {"mean_iou", m.mean_iou}};
    rep["oracle_image_score"] = rgan::oracle_image_score(g_x, d.stream_x, oracle, sc);
  } else {
    rep["translation_mse"] = rgan::translation_mse(g_y, d.stream_x, d.gt_map);
  }
  auto div = rgan::diversity_probe(g_y, d.stream_x, o.sample);
  rep["diversity"] = {{"input_dispersion", div.input_dispersion},
                      {"output_dispersion", div.output_dispersion},
                      {"ratio", div.ratio}};
  return rep;
}

void cmd_eval(const EvalOpts& o) {
  const auto manifest = read_manifest(fs::path(o.data) / "manifest.txt");
  const std::string task = manifest.count("task") ? manifest.at("task") : "image";
  rgan::SyntheticDomains<Scalar> d;
  d.stream_x = rgan::load_stream<Scalar>((fs::path(o.data) / "X" / "0").string());
  d.stream_y = rgan::load_stream<Scalar>((fs::path(o.data) / "Y" / "0").string());
  d.gt_map.mirror = manifest.count("mirror") ? manifest.at("mirror") == "1" : true;
  if (!d.stream_x.has_labels())
    throw std::invalid_argument("dataset has no labels; regenerate with gen-data");

  rgan::SegmenterConfig sc;
  sc.base_width = o.oracle_width;
  sc.image_size = d.stream_x.frames[0].shape()[1];
  rgan::NetworkParams<Scalar> oracle;
  if (task == "labels")
    oracle = rgan::train_oracle_segmenter(d.stream_x, sc, o.oracle_steps, o.oracle_lr, 1);

  json rep = eval_one(o.checkpoint, o, d, task, oracle, sc);
  if (!o.checkpoint_b.empty()) {
    json rep_b = eval_one(o.checkpoint_b, o, d, task, oracle, sc);
    std::cout << std::left << std::setw(28) << "metric" << std::setw(16) << "A" << "B\n";
    auto row = [&](const char* name, const json& a, const json& b) {
      std::cout << std::left << std::setw(28) << name << std::setw(16) << a.dump()
                << b.dump() << "\n";
    };
    for (const auto& key : {"seg", "translation_mse", "oracle_image_score"})
      if (rep.contains(key)) row(key, rep[key], rep_b[key]);
    row("diversity_ratio", rep["diversity"]["ratio"], rep_b["diversity"]["ratio"]);
    rep = json{{"A", rep}, {"B", rep_b}};
  }

  std::cout << rep.dump(2) << "\n";
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    std::ofstream(fs::path(o.out) / "report.json") << rep.dump(2) << "\n";
    // flat CSV row for downstream aggregation
    std::ofstream csv(fs::path(o.out) / "metrics.csv");
    csv << "checkpoint,task,mean_iou,translation_mse,oracle_image_score,diversity_ratio\n";
    const json& r = rep.contains("A") ? rep["A"] : rep;
    csv << o.checkpoint << ',' << task << ','
        << (r.contains("seg") ? std::to_string(double(r["seg"]["mean_iou"])) : "") << ','
        << (r.contains("translation_mse") ? std::to_string(double(r["translation_mse"])) : "")
        << ','
        << (r.contains("oracle_image_score") ? std::to_string(double(r["oracle_image_score"]))
                                             : "")
        << ',' << double(r["diversity"]["ratio"]) << "\n";
  }
}

int cmd_verify(bool corrupt) {
  rgan::VerifyOptions vo;
  vo.corrupt_gradient = corrupt;
  const auto results = rgan::run_verification(vo);
  rgan::print_verification(results, std::cout);
  return rgan::all_passed(results) ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unpaired video retargeting: synthetic data, training, inference, evaluation"};
  app.require_subcommand(1);

  GenDataOpts gd;
  auto* gen = app.add_subcommand("gen-data", "Generate the two-domain synthetic dataset");
  std::string gen_config;
  gen->add_option("--config", gen_config, "key=value config file");
  gen->add_option("--out", gd.out, "Output dataset directory")->required();
  gen->add_option("--frames", gd.frames, "Frames per stream");
  gen->add_option("--image-size", gd.image_size, "Square frame size");
  gen->add_option("--seed", gd.seed, "Dataset seed");
  gen->add_option("--task", gd.task, "Domain pair: image or labels");
  gen->add_option("--max-step", gd.max_step, "Trajectory speed bound, px per frame");
  gen->add_flag("--mirror,!--no-mirror", gd.mirror, "Apply the horizontal-mirror map");
  gen->add_flag("--force", gd.force, "Overwrite a non-empty output directory");

  TrainOpts tr;
  auto* train = app.add_subcommand("train", "Train the translation model");
  std::string train_config;
  train->add_option("--config", train_config, "key=value config file");
  train->add_option("--data", tr.data, "Dataset directory from gen-data")->required();
  train->add_option("--out", tr.out, "Run directory for checkpoint and loss CSV")->required();
  train->add_option("--steps", tr.steps, "Optimization steps");
  train->add_option("--batch-size", tr.batch_size, "Triplets per step");
  train->add_option("--lr", tr.lr, "Learning rate");
  train->add_option("--loss", tr.loss, "Objective: cycle, recycle, or combined");
  train->add_option("--adv", tr.adv, "Adversarial mode: least_squares or log");
  train->add_option("--seed", tr.seed, "Training seed");
  train->add_option("--pool-size", tr.pool_size, "Fake-history buffer size (0 disables)");
  train->add_option("--checkpoint-interval", tr.checkpoint_interval,
                    "Steps between periodic checkpoints (0: final only)");
  train->add_option("--lr-decay-start", tr.lr_decay_start,
                    "Step where linear decay begins (-1: steps/2)");
  train->add_option("--lambda", tr.lambda, "Weight for all non-adversarial terms");
  train->add_option("--adv-weight", tr.adv_weight, "Weight for the adversarial terms");
  train->add_option("--gen-width", tr.gen_width, "Generator base width");
  train->add_option("--gen-blocks", tr.gen_blocks, "Generator residual blocks");
  train->add_option("--disc-width", tr.disc_width, "Discriminator base width");
  train->add_option("--disc-layers", tr.disc_layers, "Discriminator stride-2 layers");
  train->add_option("--pred-width", tr.pred_width, "Predictor base width");
  train->add_flag("--resume", tr.resume, "Continue from the run directory's checkpoint");

  InferOpts in;
  auto* infer = app.add_subcommand("infer", "Translate a stream with a trained checkpoint");
  std::string infer_config;
  infer->add_option("--config", infer_config, "key=value config file");
  infer->add_option("--checkpoint", in.checkpoint, "Checkpoint file")->required();
  infer->add_option("--input", in.input, "Input stream directory")->required();
  infer->add_option("--out", in.out, "Output stream directory")->required();
  infer->add_option("--direction", in.direction, "x2y or y2x");
  infer->add_flag("--smooth", in.smooth, "Blend with the temporal predictor");
  infer->add_flag("--force", in.force, "Overwrite a non-empty output directory");

  EvalOpts ev;
  auto* eval = app.add_subcommand("eval", "Compute metrics for a checkpoint on a dataset");
  std::string eval_config;
  eval->add_option("--config", eval_config, "key=value config file");
  eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval->add_option("--checkpoint-b", ev.checkpoint_b, "Second checkpoint for comparison");
  eval->add_option("--data", ev.data, "Dataset directory")->required();
  eval->add_option("--out", ev.out, "Report directory (report.json + metrics.csv)");
  eval->add_option("--sample", ev.sample, "Frames sampled by the diversity probe");
  eval->add_option("--oracle-steps", ev.oracle_steps, "Oracle segmenter training steps");
  eval->add_option("--oracle-lr", ev.oracle_lr, "Oracle segmenter learning rate");
  eval->add_option("--oracle-width", ev.oracle_width, "Oracle segmenter base width");

  bool corrupt = false;
  auto* verify = app.add_subcommand("verify", "Run the numerical verification suite");
  verify->add_flag("--corrupt-gradient", corrupt,
                   "Inject a wrong backward pass (negative test hook)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) apply_config_file(gen, gen_config);
    if (train->parsed()) apply_config_file(train, train_config);
    if (infer->parsed()) apply_config_file(infer, infer_config);
    if (eval->parsed()) apply_config_file(eval, eval_config);
    if (gen->parsed()) cmd_gen_data(gd);
    if (train->parsed()) cmd_train(tr);
    if (infer->parsed()) cmd_infer(in);
    if (eval->parsed()) cmd_eval(ev);
    if (verify->parsed()) return cmd_verify(corrupt);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
