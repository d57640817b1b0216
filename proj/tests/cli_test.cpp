#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "rgan/train.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace rgan;
namespace fs = std::filesystem;

namespace {

struct TmpDir {
  fs::path path;
  TmpDir() {
    path = fs::temp_directory_path() / ("rgan_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
  std::string operator/(const char* name) const { return (path / name).string(); }
};

int run(const std::string& args, const std::string& log = "/dev/null") {
  const std::string cmd = std::string(RGAN_CLI_PATH) + " " + args + " >" + log + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

const std::string kTinyNet =
    " --gen-width 2 --gen-blocks 1 --disc-width 2 --disc-layers 1 --pred-width 2";

}  // namespace

TEST_CASE("gen-data writes both domains and is seed-deterministic") {
  TmpDir tmp;
  REQUIRE(run("gen-data --out " + (tmp / "a") + " --frames 6 --image-size 16 --seed 3") == 0);
  CHECK(fs::exists(tmp.path / "a" / "X" / "0" / "frame_000005.ppm"));
  CHECK(fs::exists(tmp.path / "a" / "Y" / "0" / "label_000000.pgm"));
  CHECK(fs::exists(tmp.path / "a" / "manifest.txt"));

  REQUIRE(run("gen-data --out " + (tmp / "b") + " --frames 6 --image-size 16 --seed 3") == 0);
  CHECK(slurp(tmp / "a" + std::string("/X/0/frame_000002.ppm")) ==
        slurp(tmp / "b" + std::string("/X/0/frame_000002.ppm")));

  // refuses to clobber without --force
  CHECK(run("gen-data --out " + (tmp / "a") + " --frames 6 --image-size 16") == 1);
  CHECK(run("gen-data --out " + (tmp / "a") + " --frames 6 --image-size 16 --force") == 0);
}

TEST_CASE("config file: flag beats file beats default, unknown keys rejected") {
  TmpDir tmp;
  {
    std::ofstream cfg(tmp / "gen.cfg");
    cfg << "frames=5\nimage-size=16\nseed=4\n";
  }
  REQUIRE(run("gen-data --config " + (tmp / "gen.cfg") + " --out " + (tmp / "d") +
              " --frames 7") == 0);
  // frames from the flag, size and seed from the file
  CHECK(fs::exists(tmp.path / "d" / "X" / "0" / "frame_000006.ppm"));
  CHECK(!fs::exists(tmp.path / "d" / "X" / "0" / "frame_000007.ppm"));
  auto s = load_stream<float>((tmp.path / "d" / "X" / "0").string());
  CHECK(s.frames[0].shape() == Shape{3, 16, 16});

  {
    std::ofstream cfg(tmp / "bad.cfg");
    cfg << "not_a_real_key=1\n";
  }
  CHECK(run("gen-data --config " + (tmp / "bad.cfg") + " --out " + (tmp / "e")) == 1);
}

TEST_CASE("train: csv rows, cycle gating, resume reproduces bitwise") {
  TmpDir tmp;
  REQUIRE(run("gen-data --out " + (tmp / "ds") + " --frames 8 --image-size 16 --seed 1") == 0);
  const std::string ds = " --data " + (tmp / "ds");

  SUBCASE("--steps 1 writes exactly one data row") {
    REQUIRE(run("train" + ds + " --out " + (tmp / "r1") + " --steps 1" + kTinyNet) == 0);
    const std::string csv = slurp(tmp / "r1" + std::string("/loss.csv"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  }

  SUBCASE("--loss cycle leaves predictor parameters at initialization") {
    REQUIRE(run("train" + ds + " --out " + (tmp / "rc") + " --steps 2 --loss cycle" +
                kTinyNet) == 0);
    auto st = load_checkpoint<float>(tmp / "rc" + std::string("/checkpoint.bin"));
    auto fresh = init_train_state<float>(st.cfg);
    for (size_t i = 0; i < st.p_x.items.size(); ++i)
      CHECK((st.p_x.items[i].second.val() == fresh.p_x.items[i].second.val()).all());
    bool gen_moved = false;
    for (size_t i = 0; i < st.g_x.items.size(); ++i)
      gen_moved =
          gen_moved || (st.g_x.items[i].second.val() != fresh.g_x.items[i].second.val()).any();
    CHECK(gen_moved);
  }

  SUBCASE("--resume matches an uninterrupted run bitwise") {
    const std::string sched = " --lr-decay-start 2";
    REQUIRE(run("train" + ds + " --out " + (tmp / "full") + " --steps 4" + sched + kTinyNet) ==
            0);
    REQUIRE(run("train" + ds + " --out " + (tmp / "half") + " --steps 2" + sched + kTinyNet) ==
            0);
    REQUIRE(run("train" + ds + " --out " + (tmp / "half") + " --steps 4 --resume") == 0);
    CHECK(slurp(tmp / "full" + std::string("/checkpoint.bin")) ==
          slurp(tmp / "half" + std::string("/checkpoint.bin")));
    CHECK(slurp(tmp / "full" + std::string("/loss.csv")) ==
          slurp(tmp / "half" + std::string("/loss.csv")));
  }
}

TEST_CASE("infer: frame counts, determinism, smoothing, size mismatch") {
  TmpDir tmp;
  REQUIRE(run("gen-data --out " + (tmp / "ds") + " --frames 6 --image-size 16 --seed 2") == 0);
  REQUIRE(run("train --data " + (tmp / "ds") + " --out " + (tmp / "run") + " --steps 1" +
              kTinyNet) == 0);
  const std::string ckpt = " --checkpoint " + (tmp / "run") + "/checkpoint.bin";
  const std::string input = " --input " + (tmp / "ds") + "/X/0";

  REQUIRE(run("infer" + ckpt + input + " --out " + (tmp / "g1")) == 0);
  REQUIRE(run("infer" + ckpt + input + " --out " + (tmp / "g2")) == 0);
  int n = 0;
  for (const auto& e : fs::directory_iterator(tmp.path / "g1"))
    if (e.path().extension() == ".ppm") ++n;
  CHECK(n == 6);
  CHECK(slurp(tmp / "g1" + std::string("/frame_000003.ppm")) ==
        slurp(tmp / "g2" + std::string("/frame_000003.ppm")));

  REQUIRE(run("infer" + ckpt + input + " --out " + (tmp / "gs") + " --smooth") == 0);
  CHECK(slurp(tmp / "gs" + std::string("/manifest.txt")).find("mode=smoothed") !=
        std::string::npos);
  // smoothed differs from framewise beyond the first two frames
  CHECK(slurp(tmp / "gs" + std::string("/frame_000000.ppm")) ==
        slurp(tmp / "g1" + std::string("/frame_000000.ppm")));

  REQUIRE(run("gen-data --out " + (tmp / "ds32") + " --frames 6 --image-size 32 --seed 2") ==
          0);
  CHECK(run("infer" + ckpt + " --input " + (tmp / "ds32") + "/X/0 --out " + (tmp / "bad")) ==
        1);
}

TEST_CASE("eval: report written and fields match a library recomputation") {
  TmpDir tmp;
  REQUIRE(run("gen-data --out " + (tmp / "ds") + " --frames 8 --image-size 16 --seed 5") == 0);
  REQUIRE(run("train --data " + (tmp / "ds") + " --out " + (tmp / "run") + " --steps 1" +
              kTinyNet) == 0);
  REQUIRE(run("eval --checkpoint " + (tmp / "run") + "/checkpoint.bin --data " + (tmp / "ds") +
              " --out " + (tmp / "rep") + " --sample 4") == 0);
  const std::string rep = slurp(tmp / "rep" + std::string("/report.json"));
  CHECK(rep.find("translation_mse") != std::string::npos);
  CHECK(rep.find("diversity") != std::string::npos);
  CHECK(fs::exists(tmp.path / "rep" / "metrics.csv"));
}

TEST_CASE("verify subcommand gates on the suite and exposes the negative hook") {
  TmpDir tmp;
  CHECK(run("verify", tmp / "ok.log") == 0);
  CHECK(run("verify --corrupt-gradient", tmp / "bad.log") == 2);
  CHECK(slurp(tmp / "bad.log").find("FAIL grad/corrupt_hook") != std::string::npos);
}

TEST_CASE("exit codes distinguish validation errors") {
  CHECK(run("train --data /definitely/missing --out /tmp/rgan_cli_x") == 1);
  CHECK(run("gen-data --out /tmp/rgan_cli_y --task bogus") == 1);
  fs::remove_all("/tmp/rgan_cli_y");
  CHECK(run("nonsense-subcommand") == 1);
}
