// mstn: data generation, training, evaluation, inference, ablation, and
// gradient verification for the multi-scale dehazing network.
//
// Exit codes: 0 ok, 2 usage/config, 3 I/O, 4 numerical failure.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mstn/config.hpp"
#include "mstn/dataset.hpp"
#include "mstn/gradcheck.hpp"
#include "mstn/haze.hpp"
#include "mstn/image_io.hpp"
#include "mstn/metrics.hpp"
#include "mstn/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mstn;

#ifndef MSTN_GIT_DESCRIBE
#define MSTN_GIT_DESCRIBE "unknown"
#endif

namespace {

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int env_threads() {
  const char* v = std::getenv("MSTN_THREADS");
  if (!v) return 1;
  const int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

// One run_manifest.json beside each command's outputs.
struct RunManifest {
  std::string command;
  json config = json::object();
  uint64_t seed = 0;
  std::string started = iso_now();
  std::vector<std::string> outputs;

  void write(const fs::path& dir) const {
    std::error_code ec;
    fs::create_directories(dir, ec);
    json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["git_describe"] = MSTN_GIT_DESCRIBE;
    j["started"] = started;
    j["finished"] = iso_now();
    j["outputs"] = outputs;
    std::ofstream out(dir / "run_manifest.json");
    if (!out) throw IoError("cannot write run manifest in " + dir.string());
    out << j.dump(2) << "\n";
  }
};

json metric_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

struct MetricReport {
  double psnr_db = 0.0;
  double ssim_val = 0.0;
  int n_images = 0;

  json to_json() const {
    json j;
    j["psnr_db"] = metric_value(psnr_db);
    j["ssim"] = ssim_val;
    j["n_images"] = n_images;
    return j;
  }
};

// Loads a checkpoint, rebuilds its model, restores the parameters.
MstnModel<float> model_from_checkpoint(const std::string& path) {
  CheckpointData ckpt = load_checkpoint_file(path);
  MstnConfig cfg = checkpoint_model_config(ckpt);
  MstnModel<float> model(cfg, /*seed=*/0);
  restore_model_params(model, ckpt);
  return model;
}

MetricReport evaluate_dataset(const Dataset& ds, MstnModel<float>* model) {
  NoGradGuard ng;
  MetricReport rep;
  rep.n_images = static_cast<int>(ds.samples.size());
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const auto& s : ds.samples) {
    Tensor<float> pred =
        model ? clamp01(padded_forward(*model, s.hazy)) : s.hazy;
    psnr_sum += psnr(pred, s.clear, 1.0);
    ssim_sum += ssim(pred, s.clear, 1.0);
  }
  rep.psnr_db = psnr_sum / rep.n_images;
  rep.ssim_val = ssim_sum / rep.n_images;
  return rep;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string preset = "indoor";
  int n = 8;
  int size = 64;
  uint64_t seed = 1;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
  RunManifest man;
  man.command = "gen-data";
  man.config = {{"preset", a.preset}, {"n", a.n}, {"size", a.size},
                {"seed", a.seed}, {"out", a.out}};
  man.seed = a.seed;

  const HazeRanges ranges = HazeRanges::from_name(a.preset);
  DatasetManifest m = generate_dataset(a.n, ranges, a.size, a.size, a.seed,
                                       a.out, env_threads());
  for (const auto& r : m.samples) {
    man.outputs.push_back(r.clear_path);
    man.outputs.push_back(r.hazy_path);
  }
  man.outputs.push_back("manifest.json");
  man.write(a.out);
  std::cout << "wrote " << m.samples.size() << " pairs to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::string data_dir;
  std::string out;  // checkpoint file path
  std::string resume;
};

int cmd_train(const TrainArgs& a) {
  AppConfig cfg = a.config_path.empty() ? AppConfig{}
                                        : app_config_from_file(a.config_path);
  const fs::path out_path(a.out);
  const fs::path out_dir =
      out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");

  RunManifest man;
  man.command = "train";
  man.config = json::parse(app_config_to_json(cfg));
  man.seed = cfg.train.seed;

  Dataset ds = Dataset::load(a.data_dir);

  MstnModel<float> model(cfg.model, cfg.train.seed);
  Adam adam(model.params(), cfg.train.beta1, cfg.train.beta2,
            cfg.train.eps_adam);
  long long start_iter = 0;
  if (!a.resume.empty()) {
    CheckpointData ckpt = load_checkpoint_file(a.resume);
    const MstnConfig stored = checkpoint_model_config(ckpt);
    if (model_config_to_json(stored) != model_config_to_json(cfg.model)) {
      throw ConfigError("resume checkpoint was trained with a different model "
                        "config: " + model_config_to_json(stored));
    }
    restore_model_params(model, ckpt);
    restore_adam(adam, ckpt);
    start_iter = checkpoint_iter(ckpt);
    if (start_iter >= cfg.train.total_iters) {
      throw ConfigError("resume checkpoint is already at iteration " +
                        std::to_string(start_iter));
    }
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const fs::path log_path = out_dir / "train_log.jsonl";
  std::ofstream log(log_path,
                    a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot open training log " + log_path.string());

  TrainOptions opts;
  opts.out_dir = out_dir.string();
  opts.start_iter = start_iter;
  opts.log = &log;
  opts.echo = &std::cout;
  TrainSummary summary = run_training(model, adam, ds, cfg.train, opts);

  // run_training leaves the checkpoint at out_dir/model.ckpt; honor --out.
  if (fs::path(summary.ckpt_path) != out_path) {
    fs::rename(summary.ckpt_path, out_path, ec);
    if (ec) {
      fs::copy_file(summary.ckpt_path, out_path,
                    fs::copy_options::overwrite_existing, ec);
      if (ec) throw IoError("cannot place checkpoint at " + a.out);
      fs::remove(summary.ckpt_path, ec);
    }
  }
  man.outputs = {out_path.filename().string(), log_path.filename().string()};
  man.write(out_dir);
  std::cout << "final loss " << summary.final_loss << ", checkpoint " << a.out
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt;
  std::string data_dir;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  Dataset ds = Dataset::load(a.data_dir);
  std::optional<MstnModel<float>> model;
  if (!a.ckpt.empty()) model.emplace(model_from_checkpoint(a.ckpt));
  MetricReport rep = evaluate_dataset(ds, model ? &*model : nullptr);
  std::cout << rep.to_json().dump() << "\n";

  if (!a.out.empty()) {
    RunManifest man;
    man.command = "eval";
    man.config = {{"ckpt", a.ckpt}, {"data", a.data_dir}};
    std::error_code ec;
    fs::create_directories(a.out, ec);
    std::ofstream f(fs::path(a.out) / "metrics.json");
    if (!f) throw IoError("cannot write metrics.json in " + a.out);
    f << rep.to_json().dump(2) << "\n";
    man.outputs = {"metrics.json"};
    man.write(a.out);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// dehaze
// ---------------------------------------------------------------------------

struct DehazeArgs {
  std::string ckpt;
  std::string in_path;
  std::string out_path;
};

int cmd_dehaze(const DehazeArgs& a) {
  RunManifest man;
  man.command = "dehaze";
  man.config = {{"ckpt", a.ckpt}, {"in", a.in_path}, {"out", a.out_path}};

  MstnModel<float> model = model_from_checkpoint(a.ckpt);
  Tensor<float> hazy = read_png_rgb(a.in_path).cast<float>();
  NoGradGuard ng;
  Tensor<float> out = clamp01(padded_forward(model, hazy));
  const fs::path out_path(a.out_path);
  if (out_path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(out_path.parent_path(), ec);
  }
  write_png_rgb(a.out_path, out);
  man.outputs = {out_path.filename().string()};
  man.write(out_path.has_parent_path() ? out_path.parent_path()
                                       : fs::path("."));
  std::cout << "wrote " << a.out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateArgs {
  std::vector<std::string> variants;
  std::string config_path;
  std::string data_dir;
  std::string holdout_dir;
  std::vector<uint64_t> seeds{1, 2, 3};
  std::string out;
};

MstnConfig variant_config(const MstnConfig& base, const std::string& name) {
  MstnConfig c = base;
  if (name == "baseline") return c;
  if (name == "no_afsm") {
    c.use_afsm = false;
    return c;
  }
  if (name == "no_mffm") {
    c.use_mffm = false;
    return c;
  }
  if (name.rfind("scales:", 0) == 0) {
    const int k = std::atoi(name.c_str() + 7);
    if (k < 1) throw ConfigError("ablate: bad variant '" + name + "'");
    c.scales = c.rows = k;
    return c;
  }
  if (name.rfind("path:", 0) == 0) {
    c.path_preset = name.substr(5);
    return apply_path_preset(c);
  }
  throw ConfigError("ablate: unknown variant '" + name +
                    "' (baseline, no_afsm, no_mffm, scales:K, path:NAME)");
}

int cmd_ablate(const AblateArgs& a) {
  if (a.variants.empty()) throw ConfigError("ablate: no variants requested");
  AppConfig cfg = a.config_path.empty() ? AppConfig{}
                                        : app_config_from_file(a.config_path);
  RunManifest man;
  man.command = "ablate";
  man.config = json::parse(app_config_to_json(cfg));
  man.config["variants"] = a.variants;
  man.config["seeds"] = a.seeds;
  man.seed = a.seeds.empty() ? 0 : a.seeds.front();

  Dataset train_ds = Dataset::load(a.data_dir);
  Dataset holdout = Dataset::load(a.holdout_dir);

  json rows = json::array();
  double baseline_psnr = 0.0;
  bool have_baseline = false;
  for (const auto& name : a.variants) {
    const MstnConfig mc = variant_config(cfg.model, name);
    json per_seed = json::array();
    double psnr_acc = 0.0, ssim_acc = 0.0;
    for (uint64_t seed : a.seeds) {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      MstnModel<float> model(mc, seed);
      Adam adam(model.params(), tc.beta1, tc.beta2, tc.eps_adam);

      std::string safe = name;
      for (char& ch : safe) {
        if (ch == ':') ch = '_';
      }
      TrainOptions opts;
      opts.out_dir =
          (fs::path(a.out) / safe / ("seed_" + std::to_string(seed))).string();
      std::error_code mkec;
      fs::create_directories(opts.out_dir, mkec);
      std::ofstream log(opts.out_dir + ".log");
      opts.log = log ? &log : nullptr;
      TrainSummary sum = run_training(model, adam, train_ds, tc, opts);

      MetricReport rep = evaluate_dataset(holdout, &model);
      per_seed.push_back({{"seed", seed},
                          {"psnr_db", metric_value(rep.psnr_db)},
                          {"ssim", rep.ssim_val},
                          {"final_loss", sum.final_loss}});
      psnr_acc += rep.psnr_db;
      ssim_acc += rep.ssim_val;
    }
    const double mean_psnr = psnr_acc / a.seeds.size();
    const double mean_ssim = ssim_acc / a.seeds.size();
    json row;
    row["variant"] = name;
    row["params"] = MstnModel<float>(mc, 0).param_count();
    row["psnr_db_mean"] = metric_value(mean_psnr);
    row["ssim_mean"] = mean_ssim;
    row["per_seed"] = per_seed;
    if (name == "baseline") {
      baseline_psnr = mean_psnr;
      have_baseline = true;
    }
    if (have_baseline) {
      row["psnr_margin_vs_baseline"] = metric_value(baseline_psnr - mean_psnr);
    }
    rows.push_back(row);
    std::cerr << "[ablate] " << name << ": mean PSNR "
              << mean_psnr << " dB, mean SSIM " << mean_ssim << "\n";
  }

  json report;
  report["variants"] = rows;
  std::cout << report.dump(2) << "\n";
  std::error_code ec;
  fs::create_directories(a.out, ec);
  std::ofstream f(fs::path(a.out) / "ablate_report.json");
  if (!f) throw IoError("cannot write ablate_report.json in " + a.out);
  f << report.dump(2) << "\n";
  man.outputs = {"ablate_report.json"};
  man.write(a.out);
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckArgs {
  uint64_t seed = 7;
  std::string out;
};

struct CheckOutcome {
  std::string name;
  GradcheckResult result;
};

Tensor<double> smooth_random(const Shape& s, Rng& rng, double lo = 0.1,
                             double hi = 0.9) {
  std::vector<double> v(s.numel());
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>::from_data(s, std::move(v));
}

// Values bounded away from zero so relu/|.| kinks sit far from the FD step.
Tensor<double> signed_random(const Shape& s, Rng& rng, double mag_lo = 0.2,
                             double mag_hi = 1.0) {
  std::vector<double> v(s.numel());
  for (auto& x : v) {
    const double m = rng.uniform(mag_lo, mag_hi);
    x = rng.next_below(2) ? m : -m;
  }
  return Tensor<double>::from_data(s, std::move(v));
}

// Residual-closing layers are zero at a fresh init, which silences entire
// gradient paths (FD would only ever compare 0 to 0 through them). Move every
// parameter to a generic point before differentiating.
void jitter_params(ParamRegistry<double>& reg, Rng& rng) {
  for (const auto& e : reg.entries()) {
    for (auto& v : reg.find(e.name)->data()) v += rng.uniform(-0.25, 0.25);
  }
}

int cmd_gradcheck(const GradcheckArgs& a) {
  Rng rng(a.seed);
  std::vector<CheckOutcome> outcomes;
  GradcheckOpts opts;
  opts.seed = a.seed;

  auto weighted_sum = [&](const Tensor<double>& t) {
    // Fixed random weights make the scalarization sensitive to every output.
    Rng wr(a.seed, 0xdeadbeefULL);
    return sum(multiply(t, smooth_random(t.shape(), wr, -1.0, 1.0)));
  };

  auto check = [&](const std::string& name,
                   const std::function<Tensor<double>()>& fn,
                   std::vector<Tensor<double>> inputs) {
    outcomes.push_back({name, finite_diff_gradcheck(fn, std::move(inputs),
                                                    opts)});
  };

  {
    Tensor<double> x = signed_random({2, 3, 5, 5}, rng);
    Tensor<double> y = smooth_random({2, 3, 5, 5}, rng);
    check("add", [&] { return weighted_sum(add(x, y)); }, {x, y});
    check("subtract", [&] { return weighted_sum(subtract(x, y)); }, {x, y});
    check("scale", [&] { return weighted_sum(scale(x, 1.7)); }, {x});
    check("multiply", [&] { return weighted_sum(multiply(x, y)); }, {x, y});
    check("relu", [&] { return weighted_sum(relu(x)); }, {x});
    check("sum", [&] { return sum(x); }, {x});
  }
  {
    Tensor<double> gate = smooth_random({2, 4, 1, 1}, rng);
    Tensor<double> map = smooth_random({2, 4, 6, 6}, rng);
    check("multiply_broadcast",
          [&] { return weighted_sum(multiply(gate, map)); }, {gate, map});
  }
  {
    Tensor<double> x = smooth_random({2, 3, 6, 6}, rng);
    check("global_avg_pool",
          [&] { return weighted_sum(global_avg_pool(x)); }, {x});
  }
  {
    Tensor<double> x = smooth_random({3, 8, 1, 1}, rng);
    Tensor<double> w = signed_random({4, 8, 1, 1}, rng, 0.05, 0.5);
    Tensor<double> b = signed_random({4, 1, 1, 1}, rng, 0.05, 0.5);
    std::optional<Tensor<double>> ob = b;
    check("fully_connected",
          [&] { return weighted_sum(fully_connected(x, w, ob)); }, {x, w, b});
  }
  {
    Tensor<double> la = signed_random({2, 6, 1, 1}, rng, 0.1, 2.0);
    Tensor<double> lb = signed_random({2, 6, 1, 1}, rng, 0.1, 2.0);
    check("softmax_pair",
          [&] {
            auto [sa, sb] = softmax_pair(la, lb);
            return add(weighted_sum(sa), scale(weighted_sum(sb), 2.0));
          },
          {la, lb});
  }
  {
    Tensor<double> p = smooth_random({2, 3, 5, 5}, rng);
    Tensor<double> t = add(p, signed_random({2, 3, 5, 5}, rng, 0.3, 0.6))
                           .detach();
    check("l1_loss", [&] { return l1_loss(p, t); }, {p});
  }
  {
    Tensor<double> x = smooth_random({2, 3, 7, 7}, rng);
    Tensor<double> w = signed_random({4, 3, 3, 3}, rng, 0.05, 0.4);
    Tensor<double> b = signed_random({4, 1, 1, 1}, rng, 0.05, 0.4);
    std::optional<Tensor<double>> ob = b;
    check("conv2d_s1",
          [&] { return weighted_sum(conv2d(x, w, ob, 1, 1)); }, {x, w, b});
    check("conv2d_s2",
          [&] { return weighted_sum(conv2d(x, w, ob, 2, 1)); }, {x, w, b});
  }
  {
    Tensor<double> x = smooth_random({2, 4, 4, 4}, rng);
    Tensor<double> w = signed_random({4, 2, 4, 4}, rng, 0.05, 0.4);
    Tensor<double> b = signed_random({2, 1, 1, 1}, rng, 0.05, 0.4);
    std::optional<Tensor<double>> ob = b;
    check("conv_transpose2d",
          [&] { return weighted_sum(conv_transpose2d(x, w, ob, 2, 1)); },
          {x, w, b});
  }
  {
    ParamRegistry<double> reg;
    Rng lr(a.seed, 11);
    ResidualBlock<double> rb(reg, "rb", 3, 6, lr);
    jitter_params(reg, lr);
    Tensor<double> x = smooth_random({2, 3, 6, 6}, rng);
    std::vector<Tensor<double>> inputs{x};
    for (const auto& e : reg.entries()) inputs.push_back(e.tensor);
    check("residual_block",
          [&] { return weighted_sum(rb.forward(x)); }, inputs);
  }
  {
    ParamRegistry<double> reg;
    Rng lr(a.seed, 12);
    Afsm<double> afsm(reg, "afsm", 8, lr);
    Tensor<double> x1 = smooth_random({2, 8, 5, 5}, rng);
    Tensor<double> x2 = smooth_random({2, 8, 5, 5}, rng);
    std::vector<Tensor<double>> inputs{x1, x2};
    for (const auto& e : reg.entries()) inputs.push_back(e.tensor);
    check("afsm", [&] { return weighted_sum(afsm.forward(x1, x2)); }, inputs);
  }
  {
    ParamRegistry<double> reg;
    Rng lr(a.seed, 13);
    Mffm<double> mffm(reg, "mffm", 4, 8, lr, /*use_afsm=*/true);
    jitter_params(reg, lr);
    Tensor<double> fine = smooth_random({1, 4, 8, 8}, rng);
    Tensor<double> coarse = smooth_random({1, 8, 4, 4}, rng);
    std::vector<Tensor<double>> inputs{fine, coarse};
    for (const auto& e : reg.entries()) inputs.push_back(e.tensor);
    check("mffm",
          [&] { return weighted_sum(mffm.forward(fine, coarse)); }, inputs);
  }
  for (int jmax : {2, 3}) {
    MstnConfig cfg;
    cfg.rows = cfg.scales = jmax;
    cfg.base_channels = jmax == 2 ? 4 : 8;
    MstnModel<double> model(cfg, a.seed + jmax);
    Rng jr(a.seed, 14 + static_cast<uint64_t>(jmax));
    jitter_params(model.params(), jr);
    Tensor<double> x = smooth_random({1, 3, 16, 16}, rng);
    Tensor<double> target;
    {
      NoGradGuard ng;
      Tensor<double> offs = signed_random({1, 3, 16, 16}, rng, 0.4, 0.7);
      target = add(model.forward(x), offs).detach();
    }
    std::vector<Tensor<double>> inputs{x};
    for (const auto& e : model.params().entries()) inputs.push_back(e.tensor);
    check("model_j" + std::to_string(jmax),
          [&] { return l1_loss(model.forward(x), target); }, inputs);
  }

  bool all_ok = true;
  json lines = json::array();
  for (const auto& o : outcomes) {
    all_ok = all_ok && o.result.ok;
    std::cout << (o.result.ok ? "PASS " : "FAIL ") << o.name
              << "  max_rel=" << o.result.max_rel_err
              << "  coords=" << o.result.coords_checked;
    if (o.result.coords_skipped > 0)
      std::cout << "  kinks_skipped=" << o.result.coords_skipped;
    if (!o.result.ok) std::cout << "  worst: " << o.result.worst;
    std::cout << "\n";
    lines.push_back({{"op", o.name},
                     {"ok", o.result.ok},
                     {"max_rel_err", o.result.max_rel_err},
                     {"coords", o.result.coords_checked},
                     {"coords_skipped", o.result.coords_skipped}});
  }
  if (!a.out.empty()) {
    RunManifest man;
    man.command = "gradcheck";
    man.config = {{"seed", a.seed}};
    man.seed = a.seed;
    std::error_code ec;
    fs::create_directories(a.out, ec);
    std::ofstream f(fs::path(a.out) / "gradcheck.json");
    f << lines.dump(2) << "\n";
    man.outputs = {"gradcheck.json"};
    man.write(a.out);
  }
  if (!all_ok) throw NumericError("gradient check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale dehazing network toolkit"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* cg = app.add_subcommand("gen-data", "Generate a synthetic paired dataset");
  cg->add_option("--preset", gen.preset, "Haze parameter ranges: indoor|outdoor");
  cg->add_option("--n", gen.n, "Number of pairs")->check(CLI::PositiveNumber);
  cg->add_option("--size", gen.size, "Image side length")
      ->check(CLI::Range(8, 4096));
  cg->add_option("--seed", gen.seed, "Master seed");
  cg->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tr;
  auto* ct = app.add_subcommand("train", "Train a model");
  ct->add_option("--config", tr.config_path, "JSON config file");
  ct->add_option("--data", tr.data_dir, "Dataset directory")->required();
  ct->add_option("--out", tr.out, "Output checkpoint path")->required();
  ct->add_option("--resume", tr.resume, "Checkpoint to resume from");

  EvalArgs ev;
  auto* ce = app.add_subcommand("eval", "Evaluate PSNR/SSIM on a dataset");
  ce->add_option("--ckpt", ev.ckpt,
                 "Checkpoint (omit to score the hazy inputs as-is)");
  ce->add_option("--data", ev.data_dir, "Dataset directory")->required();
  ce->add_option("--out", ev.out, "Optional directory for metrics.json");

  DehazeArgs dh;
  auto* cd = app.add_subcommand("dehaze", "Restore a single image");
  cd->add_option("--ckpt", dh.ckpt, "Checkpoint")->required();
  cd->add_option("--in", dh.in_path, "Input PNG")->required();
  cd->add_option("--out", dh.out_path, "Output PNG")->required();

  AblateArgs ab;
  auto* ca = app.add_subcommand("ablate", "Train and score model variants");
  ca->add_option("--variant", ab.variants,
                 "baseline|no_afsm|no_mffm|scales:K|path:NAME (repeatable)");
  ca->add_option("--config", ab.config_path, "JSON config file");
  ca->add_option("--data", ab.data_dir, "Training dataset")->required();
  ca->add_option("--holdout", ab.holdout_dir, "Held-out dataset")->required();
  ca->add_option("--seeds", ab.seeds, "Seeds (repeatable)");
  ca->add_option("--out", ab.out, "Output directory")->required();

  GradcheckArgs gc;
  auto* cgc = app.add_subcommand("gradcheck",
                                 "Finite-difference gradient verification");
  cgc->add_option("--seed", gc.seed, "Seed for sampled inputs/coordinates");
  cgc->add_option("--out", gc.out, "Optional directory for gradcheck.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (cg->parsed()) return cmd_gen_data(gen);
    if (ct->parsed()) return cmd_train(tr);
    if (ce->parsed()) return cmd_eval(ev);
    if (cd->parsed()) return cmd_dehaze(dh);
    if (ca->parsed()) return cmd_ablate(ab);
    if (cgc->parsed()) return cmd_gradcheck(gc);
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
