// End-to-end subprocess tests of the command-line tool. MSTN_CLI_PATH is
// injected by the build as the absolute path of the binary.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "mstn/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = MSTN_CLI_PATH;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

RunResult run(const std::string& args) {
  static int counter = 0;
  const fs::path dir = fs::temp_directory_path() / "mstn_cli_io";
  fs::create_directories(dir);
  const fs::path out = dir / ("out" + std::to_string(counter));
  const fs::path err = dir / ("err" + std::to_string(counter));
  ++counter;
  const std::string cmd =
      kCli + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Shared across cases; generated once.
const fs::path& data_dir() {
  static fs::path dir = [] {
    fs::path d = fresh_dir("mstn_cli_data");
    auto r = run("gen-data --preset indoor --n 4 --size 32 --seed 3 --out " +
                 d.string());
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

void write_config(const fs::path& path, int scales, int channels,
                  long long iters) {
  json j;
  j["model"] = {{"scales", scales}, {"rows", scales},
                {"base_channels", channels}};
  j["train"] = {{"total_iters", iters}, {"batch", 2}, {"patch", 16},
                {"seed", 1}};
  std::ofstream(path) << j.dump();
}

}  // namespace

TEST_CASE("help exits zero, bad usage exits two") {
  CHECK(run("--help").code == 0);
  CHECK(run("gen-data --help").code == 0);
  CHECK(run("").code == 2);                       // missing subcommand
  CHECK(run("frobnicate").code == 2);             // unknown subcommand
  CHECK(run("gen-data --bogus 1").code == 2);     // unknown flag
  CHECK(run("gen-data").code == 2);               // missing required --out
  CHECK(run("gen-data --n -3 --out /tmp/x").code == 2);
}

TEST_CASE("gen-data produces a dataset with manifest and run manifest") {
  const fs::path& d = data_dir();
  CHECK(fs::exists(d / "manifest.json"));
  CHECK(fs::exists(d / "run_manifest.json"));
  int clear = 0, hazy = 0;
  for (auto& e : fs::directory_iterator(d / "clear")) clear += e.is_regular_file();
  for (auto& e : fs::directory_iterator(d / "hazy")) hazy += e.is_regular_file();
  CHECK(clear == 4);
  CHECK(hazy == 4);
  auto man = json::parse(std::ifstream(d / "run_manifest.json"));
  CHECK(man["command"] == "gen-data");
  CHECK(man["git_describe"].is_string());
  CHECK(man.contains("started"));
  CHECK(man.contains("finished"));
}

TEST_CASE("gen-data rejects an unknown preset with exit 2") {
  auto d = fresh_dir("mstn_cli_badpreset");
  auto r = run("gen-data --preset swamp --n 2 --size 16 --out " + d.string());
  CHECK(r.code == 2);
  CHECK(r.err.find("preset") != std::string::npos);
}

TEST_CASE("eval without a checkpoint scores the hazy input directly") {
  auto r = run("eval --data " + data_dir().string());
  CHECK(r.code == 0);
  auto j = json::parse(r.out);
  CHECK(j["n_images"] == 4);
  CHECK(j["psnr_db"].is_number());
  CHECK(j["ssim"].is_number());
  CHECK(double(j["ssim"]) < 1.0);
}

TEST_CASE("eval reports infinite quality as the string inf") {
  auto d = fresh_dir("mstn_cli_perfect");
  auto r0 = run("gen-data --preset indoor --n 2 --size 32 --seed 5 --out " +
                d.string());
  REQUIRE(r0.code == 0);
  // make hazy == clear so PSNR diverges
  for (auto& e : fs::directory_iterator(d / "clear")) {
    fs::copy_file(e.path(), d / "hazy" / e.path().filename(),
                  fs::copy_options::overwrite_existing);
  }
  auto r = run("eval --data " + d.string());
  CHECK(r.code == 0);
  auto j = json::parse(r.out);
  CHECK(j["psnr_db"] == "inf");
  CHECK(double(j["ssim"]) == doctest::Approx(1.0));
}

TEST_CASE("eval on a missing directory exits three") {
  auto r = run("eval --data /nonexistent_dataset_dir");
  CHECK(r.code == 3);
}

TEST_CASE("train, eval with checkpoint, dehaze") {
  auto out = fresh_dir("mstn_cli_train");
  const fs::path cfg = out / "config.json";
  write_config(cfg, 1, 4, 20);
  const fs::path ckpt = out / "model.ckpt";
  auto r = run("train --config " + cfg.string() + " --data " +
               data_dir().string() + " --out " + ckpt.string());
  CHECK(r.code == 0);
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(out / "train_log.jsonl"));
  CHECK(fs::exists(out / "run_manifest.json"));
  // every log line is one JSON object
  std::ifstream log(out / "train_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    if (line.empty()) continue;
    auto j = json::parse(line);
    CHECK(j.contains("iter"));
    ++lines;
  }
  CHECK(lines >= 1);

  auto re = run("eval --ckpt " + ckpt.string() + " --data " +
                data_dir().string());
  CHECK(re.code == 0);
  auto j = json::parse(re.out);
  CHECK(j["n_images"] == 4);

  // dehaze one of the generated hazy images; size must be preserved
  fs::path hazy_png;
  for (auto& e : fs::directory_iterator(data_dir() / "hazy")) {
    hazy_png = e.path();
    break;
  }
  const fs::path restored = out / "restored.png";
  auto rd = run("dehaze --ckpt " + ckpt.string() + " --in " +
                hazy_png.string() + " --out " + restored.string());
  CHECK(rd.code == 0);
  REQUIRE(fs::exists(restored));
  auto img = mstn::read_png_rgb(restored.string());
  CHECK(img.shape().h == 32);
  CHECK(img.shape().w == 32);

  // resuming a finished run is a config error
  auto rr = run("train --config " + cfg.string() + " --data " +
                data_dir().string() + " --out " + ckpt.string() +
                " --resume " + ckpt.string());
  CHECK(rr.code == 2);
}

TEST_CASE("train with malformed config exits two") {
  auto out = fresh_dir("mstn_cli_badcfg");
  const fs::path cfg = out / "config.json";
  std::ofstream(cfg) << R"({"model": {"scalez": 3}})";
  auto r = run("train --config " + cfg.string() + " --data " +
               data_dir().string() + " --out " + (out / "m.ckpt").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("scalez") != std::string::npos);
}

TEST_CASE("dehaze with a missing checkpoint exits three") {
  auto r = run("dehaze --ckpt /nonexistent.ckpt --in /also_missing.png "
               "--out /tmp/mstn_cli_never.png");
  CHECK(r.code == 3);
}

TEST_CASE("identical train invocations produce identical checkpoints") {
  auto o1 = fresh_dir("mstn_cli_det1");
  auto o2 = fresh_dir("mstn_cli_det2");
  const fs::path cfg = o1 / "config.json";
  write_config(cfg, 1, 4, 10);
  auto r1 = run("train --config " + cfg.string() + " --data " +
                data_dir().string() + " --out " + (o1 / "m.ckpt").string());
  auto r2 = run("train --config " + cfg.string() + " --data " +
                data_dir().string() + " --out " + (o2 / "m.ckpt").string());
  REQUIRE(r1.code == 0);
  REQUIRE(r2.code == 0);
  auto bytes = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  const std::string b1 = bytes(o1 / "m.ckpt");
  CHECK_FALSE(b1.empty());
  CHECK(b1 == bytes(o2 / "m.ckpt"));
}

TEST_CASE("ablate smoke run reports per-variant metrics") {
  auto out = fresh_dir("mstn_cli_ablate");
  const fs::path cfg = out / "config.json";
  write_config(cfg, 2, 4, 8);
  auto r = run("ablate --variant baseline --variant no_afsm --config " +
               cfg.string() + " --data " + data_dir().string() +
               " --holdout " + data_dir().string() + " --seeds 1 --out " +
               out.string());
  CHECK(r.code == 0);
  REQUIRE(fs::exists(out / "ablate_report.json"));
  auto j = json::parse(std::ifstream(out / "ablate_report.json"));
  REQUIRE(j["variants"].size() == 2);
  CHECK(j["variants"][0]["variant"] == "baseline");
  CHECK(j["variants"][1]["variant"] == "no_afsm");
  CHECK(j["variants"][1].contains("psnr_margin_vs_baseline"));
  CHECK(j["variants"][0]["params"] > j["variants"][1]["params"]);
}
