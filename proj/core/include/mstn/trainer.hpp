#pragma once

// Adam + cosine schedule + augmentation + the training loop, plus the glue
// binding models and optimizer state to the checkpoint container.

#include <iosfwd>
#include <string>
#include <vector>

#include "mstn/checkpoint.hpp"
#include "mstn/config.hpp"
#include "mstn/dataset.hpp"
#include "mstn/model.hpp"

namespace mstn {

/// lr(t) = lr_min + 0.5*(lr_max - lr_min)*(1 + cos(pi * t/T)). The phase is
/// computed as t/T first so the endpoints and midpoint are exact in floating
/// point.
double cosine_lr(long long t, const TrainConfig& config);

// --- augmentation -----------------------------------------------------------

/// k quarter-turns counterclockwise; k in 0..3. Odd k requires H == W.
template <class T>
Tensor<T> rotate90k(const Tensor<T>& t, int k);

template <class T>
Tensor<T> flip_horizontal(const Tensor<T>& t);  // mirrors left-right

template <class T>
Tensor<T> flip_vertical(const Tensor<T>& t);  // mirrors top-bottom

struct AugmentChoice {
  int rot = 0;   // quarter-turns, 0..3
  int flip = 0;  // 0 none, 1 horizontal, 2 vertical
};

AugmentChoice sample_augment(Rng& rng);

template <class T>
Tensor<T> apply_augment(const Tensor<T>& t, const AugmentChoice& c);

// --- optimizer --------------------------------------------------------------

class Adam {
 public:
  Adam(ParamRegistry<float>& registry, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  /// One bias-corrected update from the current gradients; missing gradients
  /// count as zero. Arithmetic in double, state stored in f32 so a checkpoint
  /// roundtrip is exact.
  void step(double lr);

  long long step_count() const { return t_; }
  void set_step_count(long long t) { t_ = t; }
  size_t size() const { return m_.size(); }
  std::vector<float>& m(size_t i) { return m_[i]; }
  std::vector<float>& v(size_t i) { return v_[i]; }
  const std::vector<float>& m(size_t i) const { return m_[i]; }
  const std::vector<float>& v(size_t i) const { return v_[i]; }
  const ParamRegistry<float>& registry() const { return *registry_; }

 private:
  ParamRegistry<float>* registry_;
  double beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

// --- checkpoint glue --------------------------------------------------------

/// Parameters in registry order, then adam.m.<name>, then adam.v.<name>
/// (omitted when adam is null). Meta JSON: {"model": ..., "iter": ...,
/// "adam_step": ...} with sorted keys.
CheckpointData make_checkpoint(const MstnModel<float>& model, const Adam* adam,
                               long long iter);

MstnConfig checkpoint_model_config(const CheckpointData& ckpt);
long long checkpoint_iter(const CheckpointData& ckpt);

/// Strict by-name restore: every model parameter must appear with a matching
/// shape, and every non-optimizer tensor in the file must belong to the model.
void restore_model_params(MstnModel<float>& model, const CheckpointData& ckpt);

/// Restores moments and step counter; errors if the file has no optimizer
/// state or shapes disagree.
void restore_adam(Adam& adam, const CheckpointData& ckpt);

// --- training loop ----------------------------------------------------------

struct BatchPair {
  Tensor<float> hazy;
  Tensor<float> clear;
};

/// Deterministic batch for one iteration: a pure function of (config.seed,
/// iter), so an interrupted-and-resumed run draws the same sequence. Pairs
/// are drawn without replacement from a per-epoch shuffled permutation;
/// crops and augmentation transforms are sampled fresh every iteration.
BatchPair sample_batch(const Dataset& ds, const TrainConfig& config,
                       long long iter);

struct StepStats {
  double loss = 0.0;       // pre-update loss
  double grad_norm = 0.0;  // global L2 norm over all parameters
};

/// forward -> L1 -> backward -> Adam -> zero grads. Throws NumericError on a
/// non-finite loss (before touching the parameters).
StepStats train_step(MstnModel<float>& model, const Tensor<float>& hazy,
                     const Tensor<float>& clear, Adam& adam, double lr);

struct TrainOptions {
  std::string out_dir;
  long long start_iter = 0;
  std::ostream* log = nullptr;       // JSON lines, one per 100 iterations
  std::ostream* echo = nullptr;      // optional copy (e.g. stdout)
  long long log_every = 100;
};

struct TrainSummary {
  long long iters_run = 0;
  double final_loss = 0.0;
  std::string ckpt_path;  // out_dir/model.ckpt
  std::vector<double> loss_history;
};

TrainSummary run_training(MstnModel<float>& model, Adam& adam,
                          const Dataset& ds, const TrainConfig& config,
                          const TrainOptions& opts);

}  // namespace mstn
