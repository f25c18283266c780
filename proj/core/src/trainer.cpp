#include "mstn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "mstn/ops.hpp"

namespace mstn {

namespace fs = std::filesystem;
using nlohmann::json;

double cosine_lr(long long t, const TrainConfig& config) {
  if (t < 0 || t > config.total_iters) {
    throw UsageError("cosine_lr: iteration " + std::to_string(t) +
                     " outside [0," + std::to_string(config.total_iters) + "]");
  }
  const double phase =
      static_cast<double>(t) / static_cast<double>(config.total_iters);
  // Convex-blend form: the weight rounds to exactly 1, 1/2, 0 at t = 0, T/2,
  // T, so the anchor values lr_max, (lr_max+lr_min)/2, lr_min come out exact.
  // The usual lr_min + (lr_max-lr_min)*w form drifts an ulp at the midpoint.
  const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
  return w * config.lr_max + (1.0 - w) * config.lr_min;
}

// --- augmentation -----------------------------------------------------------

template <class T>
Tensor<T> rotate90k(const Tensor<T>& t, int k) {
  k = ((k % 4) + 4) % 4;
  const Shape& s = t.shape();
  if (k % 2 == 1 && s.h != s.w) {
    throw ConfigError("rotate90k: quarter-turn needs a square patch, got " +
                      s.str());
  }
  if (k == 0) return t.detach();
  Tensor<T> out = Tensor<T>::zeros(s);
  const auto src = t.data();
  auto dst = out.data();
  const size_t plane = static_cast<size_t>(s.h) * s.w;
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const T* sp = src.data() + plane * nc;
    T* dp = dst.data() + plane * nc;
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        int sy = y, sx = x;
        // Inverse mapping of a counterclockwise rotation by k quarter-turns.
        if (k == 1) {
          sy = x;
          sx = s.w - 1 - y;
        } else if (k == 2) {
          sy = s.h - 1 - y;
          sx = s.w - 1 - x;
        } else {
          sy = s.h - 1 - x;
          sx = y;
        }
        dp[y * s.w + x] = sp[sy * s.w + sx];
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> flip_horizontal(const Tensor<T>& t) {
  const Shape& s = t.shape();
  Tensor<T> out = Tensor<T>::zeros(s);
  const auto src = t.data();
  auto dst = out.data();
  const size_t plane = static_cast<size_t>(s.h) * s.w;
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const T* sp = src.data() + plane * nc;
    T* dp = dst.data() + plane * nc;
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) dp[y * s.w + x] = sp[y * s.w + s.w - 1 - x];
    }
  }
  return out;
}

template <class T>
Tensor<T> flip_vertical(const Tensor<T>& t) {
  const Shape& s = t.shape();
  Tensor<T> out = Tensor<T>::zeros(s);
  const auto src = t.data();
  auto dst = out.data();
  const size_t plane = static_cast<size_t>(s.h) * s.w;
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const T* sp = src.data() + plane * nc;
    T* dp = dst.data() + plane * nc;
    for (int y = 0; y < s.h; ++y) {
      std::memcpy(dp + y * s.w, sp + (s.h - 1 - y) * s.w, sizeof(T) * s.w);
    }
  }
  return out;
}

AugmentChoice sample_augment(Rng& rng) {
  AugmentChoice c;
  c.rot = static_cast<int>(rng.next_below(4));
  c.flip = static_cast<int>(rng.next_below(3));
  return c;
}

template <class T>
Tensor<T> apply_augment(const Tensor<T>& t, const AugmentChoice& c) {
  Tensor<T> out = rotate90k(t, c.rot);
  if (c.flip == 1) out = flip_horizontal(out);
  if (c.flip == 2) out = flip_vertical(out);
  return out;
}

template Tensor<float> rotate90k(const Tensor<float>&, int);
template Tensor<double> rotate90k(const Tensor<double>&, int);
template Tensor<float> flip_horizontal(const Tensor<float>&);
template Tensor<double> flip_horizontal(const Tensor<double>&);
template Tensor<float> flip_vertical(const Tensor<float>&);
template Tensor<double> flip_vertical(const Tensor<double>&);
template Tensor<float> apply_augment(const Tensor<float>&,
                                     const AugmentChoice&);
template Tensor<double> apply_augment(const Tensor<double>&,
                                      const AugmentChoice&);

// --- optimizer --------------------------------------------------------------

Adam::Adam(ParamRegistry<float>& registry, double beta1, double beta2,
           double eps)
    : registry_(&registry), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(registry.entries().size());
  v_.reserve(registry.entries().size());
  for (const auto& e : registry.entries()) {
    m_.emplace_back(e.tensor.shape().numel(), 0.0f);
    v_.emplace_back(e.tensor.shape().numel(), 0.0f);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto& entries = registry_->entries();
  for (size_t i = 0; i < entries.size(); ++i) {
    Tensor<float> p = entries[i].tensor;  // shared handle; updates in place
    auto vals = p.data();
    const bool has_grad = p.has_grad();
    std::span<const float> g;
    if (has_grad) g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t k = 0; k < vals.size(); ++k) {
      const double gk = has_grad ? static_cast<double>(g[k]) : 0.0;
      const double mk = beta1_ * m[k] + (1.0 - beta1_) * gk;
      const double vk = beta2_ * v[k] + (1.0 - beta2_) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double mhat = static_cast<double>(m[k]) / bc1;
      const double vhat = static_cast<double>(v[k]) / bc2;
      vals[k] = static_cast<float>(vals[k] -
                                   lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

// --- checkpoint glue --------------------------------------------------------

CheckpointData make_checkpoint(const MstnModel<float>& model, const Adam* adam,
                               long long iter) {
  CheckpointData data;
  json meta;
  meta["model"] = json::parse(model_config_to_json(model.config()));
  meta["iter"] = iter;
  meta["adam_step"] = adam ? adam->step_count() : 0;
  data.meta_json = meta.dump();

  const auto& entries = model.params().entries();
  for (const auto& e : entries) {
    NamedTensor t;
    t.name = e.name;
    t.shape = e.tensor.shape();
    auto d = e.tensor.data();
    t.data.assign(d.begin(), d.end());
    data.tensors.push_back(std::move(t));
  }
  if (adam) {
    for (const char* prefix : {"adam.m.", "adam.v."}) {
      for (size_t i = 0; i < entries.size(); ++i) {
        NamedTensor t;
        t.name = std::string(prefix) + entries[i].name;
        t.shape = entries[i].tensor.shape();
        t.data = prefix[5] == 'm' ? adam->m(i) : adam->v(i);
        data.tensors.push_back(std::move(t));
      }
    }
  }
  return data;
}

namespace {

json parse_meta(const CheckpointData& ckpt) {
  json meta = json::parse(ckpt.meta_json, nullptr, /*allow_exceptions=*/false);
  if (meta.is_discarded() || !meta.is_object()) {
    throw IoError("checkpoint meta is not a JSON object");
  }
  return meta;
}

}  // namespace

MstnConfig checkpoint_model_config(const CheckpointData& ckpt) {
  json meta = parse_meta(ckpt);
  if (!meta.contains("model")) {
    throw IoError("checkpoint meta lacks a 'model' config");
  }
  return model_config_from_json_text(meta["model"].dump());
}

long long checkpoint_iter(const CheckpointData& ckpt) {
  json meta = parse_meta(ckpt);
  return meta.value("iter", 0LL);
}

void restore_model_params(MstnModel<float>& model, const CheckpointData& ckpt) {
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& t : ckpt.tensors) {
    if (t.name.rfind("adam.", 0) == 0) continue;
    by_name[t.name] = &t;
  }
  std::unordered_set<std::string> used;
  for (const auto& e : model.params().entries()) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) {
      throw IoError("checkpoint/model config mismatch: missing parameter '" +
                    e.name + "'");
    }
    const NamedTensor& t = *it->second;
    if (!(t.shape == e.tensor.shape())) {
      throw IoError("checkpoint/model config mismatch: parameter '" + e.name +
                    "' has shape " + t.shape.str() + ", model expects " +
                    e.tensor.shape().str());
    }
    Tensor<float> p = e.tensor;
    std::copy(t.data.begin(), t.data.end(), p.data().begin());
    used.insert(e.name);
  }
  for (const auto& [name, t] : by_name) {
    if (!used.count(name)) {
      throw IoError("checkpoint/model config mismatch: unexpected tensor '" +
                    name + "'");
    }
  }
}

void restore_adam(Adam& adam, const CheckpointData& ckpt) {
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name[t.name] = &t;
  const auto& entries = adam.registry().entries();
  for (size_t i = 0; i < entries.size(); ++i) {
    for (const char* prefix : {"adam.m.", "adam.v."}) {
      auto it = by_name.find(std::string(prefix) + entries[i].name);
      if (it == by_name.end()) {
        throw IoError("checkpoint has no optimizer state for '" +
                      entries[i].name + "'");
      }
      const NamedTensor& t = *it->second;
      if (static_cast<long long>(t.data.size()) !=
          entries[i].tensor.shape().numel()) {
        throw IoError("optimizer state size mismatch for '" + entries[i].name +
                      "'");
      }
      (prefix[5] == 'm' ? adam.m(i) : adam.v(i)) = t.data;
    }
  }
  json meta = parse_meta(ckpt);
  adam.set_step_count(meta.value("adam_step", 0LL));
}

// --- training loop ----------------------------------------------------------

BatchPair sample_batch(const Dataset& ds, const TrainConfig& config,
                       long long iter) {
  if (ds.samples.empty()) throw ConfigError("sample_batch: empty dataset");
  const int p = config.patch;
  if (ds.height() < p || ds.width() < p) {
    throw ConfigError("sample_batch: dataset images " +
                      std::to_string(ds.width()) + "x" +
                      std::to_string(ds.height()) +
                      " are smaller than the patch " + std::to_string(p));
  }
  Rng rng(config.seed, static_cast<uint64_t>(iter) + 1);
  BatchPair out;
  out.hazy = Tensor<float>::zeros({config.batch, 3, p, p});
  out.clear = Tensor<float>::zeros({config.batch, 3, p, p});
  auto hdst = out.hazy.data();
  auto cdst = out.clear.data();
  const size_t patch_img = static_cast<size_t>(3) * p * p;

  // Pair selection walks a per-epoch shuffled permutation (sampling without
  // replacement), so coverage is exactly balanced: every pair appears once
  // per epoch, and with batch >= dataset size each batch spans the whole set.
  // Permutations live in their own stream range so they never alias the
  // per-iteration crop/augment stream (iter + 1) above.
  constexpr uint64_t kPermStreamBase = 1ULL << 63;
  const long long n = static_cast<long long>(ds.samples.size());
  long long cursor = iter * static_cast<long long>(config.batch);
  long long perm_epoch = -1;
  std::vector<size_t> perm;
  auto next_index = [&] {
    const long long e = cursor / n;
    if (e != perm_epoch) {
      perm_epoch = e;
      perm.resize(static_cast<size_t>(n));
      std::iota(perm.begin(), perm.end(), size_t{0});
      Rng pr(config.seed, kPermStreamBase + static_cast<uint64_t>(e));
      for (size_t i = perm.size() - 1; i > 0; --i) {
        std::swap(perm[i], perm[pr.next_below(i + 1)]);
      }
    }
    return perm[static_cast<size_t>(cursor++ % n)];
  };

  for (int b = 0; b < config.batch; ++b) {
    const size_t idx = next_index();
    const auto& s = ds.samples[idx];
    const Shape& is = s.hazy.shape();
    const int y0 = is.h > p ? static_cast<int>(rng.next_below(is.h - p + 1)) : 0;
    const int x0 = is.w > p ? static_cast<int>(rng.next_below(is.w - p + 1)) : 0;
    AugmentChoice aug;
    if (config.augment) aug = sample_augment(rng);

    auto cut = [&](const Tensor<float>& img) {
      Tensor<float> patch = Tensor<float>::zeros({1, 3, p, p});
      auto pd = patch.data();
      const auto sd = img.data();
      const size_t plane = static_cast<size_t>(is.h) * is.w;
      for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < p; ++y) {
          std::memcpy(pd.data() + (static_cast<size_t>(c) * p + y) * p,
                      sd.data() + plane * c +
                          static_cast<size_t>(y0 + y) * is.w + x0,
                      sizeof(float) * p);
        }
      }
      return config.augment ? apply_augment(patch, aug) : patch;
    };

    Tensor<float> hp = cut(s.hazy);
    Tensor<float> cp = cut(s.clear);
    std::memcpy(hdst.data() + patch_img * b, hp.data().data(),
                sizeof(float) * patch_img);
    std::memcpy(cdst.data() + patch_img * b, cp.data().data(),
                sizeof(float) * patch_img);
  }
  return out;
}

StepStats train_step(MstnModel<float>& model, const Tensor<float>& hazy,
                     const Tensor<float>& clear, Adam& adam, double lr) {
  Tensor<float> pred = model.forward(hazy);
  Tensor<float> loss = l1_loss(pred, clear);
  StepStats stats;
  stats.loss = loss.item();
  loss.backward();

  double sq = 0.0;
  for (const auto& e : model.params().entries()) {
    if (!e.tensor.has_grad()) continue;
    for (float g : e.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  stats.grad_norm = std::sqrt(sq);

  if (!std::isfinite(stats.loss) || !std::isfinite(stats.grad_norm)) {
    model.params().zero_grad();
    throw NumericError("non-finite loss " + std::to_string(stats.loss) +
                       " (lr=" + std::to_string(lr) +
                       ", grad_norm=" + std::to_string(stats.grad_norm) + ")");
  }
  adam.step(lr);
  model.params().zero_grad();
  return stats;
}

TrainSummary run_training(MstnModel<float>& model, Adam& adam,
                          const Dataset& ds, const TrainConfig& config,
                          const TrainOptions& opts) {
  config.validate();
  if (config.patch % model.required_multiple() != 0) {
    throw ConfigError("TrainConfig: patch " + std::to_string(config.patch) +
                      " must be divisible by " +
                      std::to_string(model.required_multiple()));
  }
  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);

  const auto t0 = std::chrono::steady_clock::now();
  TrainSummary summary;
  summary.loss_history.reserve(
      static_cast<size_t>(config.total_iters - opts.start_iter));

  auto emit = [&](long long done, double lr, double loss) {
    json line;
    line["iter"] = done;
    line["lr"] = lr;
    line["loss"] = loss;
    line["wall_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - t0)
            .count();
    const std::string text = line.dump();
    if (opts.log) *opts.log << text << "\n" << std::flush;
    if (opts.echo) *opts.echo << text << "\n";
  };

  double lr = 0.0, loss = 0.0;
  for (long long iter = opts.start_iter; iter < config.total_iters; ++iter) {
    lr = cosine_lr(iter, config);
    BatchPair batch = sample_batch(ds, config, iter);
    try {
      StepStats stats = train_step(model, batch.hazy, batch.clear, adam, lr);
      loss = stats.loss;
    } catch (const NumericError& e) {
      throw NumericError("iter " + std::to_string(iter) + ": " + e.what());
    }
    summary.loss_history.push_back(loss);
    ++summary.iters_run;
    const long long done = iter + 1;
    if (done % opts.log_every == 0 || done == config.total_iters) {
      emit(done, lr, loss);
    }
  }
  summary.final_loss = loss;

  summary.ckpt_path = (fs::path(opts.out_dir) / "model.ckpt").string();
  save_checkpoint_file(summary.ckpt_path,
                       make_checkpoint(model, &adam, config.total_iters));
  return summary;
}

}  // namespace mstn
