#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cwcl/augment.hpp"
#include "cwcl/confident.hpp"
#include "cwcl/corpus.hpp"
#include "cwcl/nn/backbone.hpp"
#include "cwcl/nn/ema.hpp"
#include "cwcl/nn/projection.hpp"
#include "cwcl/nn/sgd.hpp"

namespace cwcl {

/// Training aborted mid-run (non-finite loss, unusable selection). Carries
/// the offending batch indices when available.
struct TrainAbort : std::runtime_error {
  explicit TrainAbort(const std::string& msg,
                      std::vector<std::int64_t> batch = {})
      : std::runtime_error(msg), batch_indices(std::move(batch)) {}
  std::vector<std::int64_t> batch_indices;
};

/// Hyperparameters of the two-stage schedule. Defaults reproduce the
/// reference recipe: batch 128, lambda 0.6, SGD momentum 0.9 / weight decay
/// 5e-4 / lr 0.1, 100+200 epochs, EMA.
struct TrainPlan {
  double lambda = 0.6;
  int batch_size = 128;
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs_stage1 = 100;
  int epochs_stage2 = 200;
  double ema_decay = 0.999;
  double gamma = 0.90;      // confident-selection threshold
  int round_length = 10;    // epochs between re-selections
  double tau_cwcl = 0.5;
  double tau_supcon = 0.1;
  bool symmetrize = false;
  std::uint64_t seed = 1;

  int proj_hidden = 128;
  int proj_dim = 64;
  int ckpt_every = 0;  // extra checkpoints every N epochs; stage ends always save
  bool stage2_restart_schedule = false;  // default: one cosine over both stages
  AugPolicy aug;

  int total_epochs() const { return epochs_stage1 + epochs_stage2; }
  void validate() const;
};

/// One completed epoch of bookkeeping.
struct EpochRecord {
  int epoch = 0;  // global, zero-based
  int stage = 1;
  double lr = 0.0;
  double ce = 0.0;
  double contrastive_mean = 0.0;  // mean over layers of the per-layer losses
  double total = 0.0;
  double train_acc_noisy = 0.0;
  double test_acc_live = 0.0;
  double test_acc_ema = 0.0;
  std::int64_t selection_size = 0;
  double selection_noise_rate = std::numeric_limits<double>::quiet_NaN();
};

struct RunMetrics {
  std::vector<EpochRecord> records;
};

/// Cosine annealing from lr0 down to lr0*1e-3 across the full two-stage
/// span; no restart at the stage boundary unless the plan asks for one.
double lr_at(const TrainPlan& plan, int epoch);

/// Backbone plus per-layer projection heads (channel heads for stage 1,
/// instance heads for stage 2). Heads exist only during training.
class TrainModel {
 public:
  TrainModel(const nn::BackboneSpec& spec, const TrainPlan& plan,
             std::uint64_t seed);

  nn::TappedBackbone net;
  std::vector<nn::ChannelProjectionHead> channel_heads;
  std::vector<nn::InstanceProjectionHead> instance_heads;

  std::vector<nn::ParamView> all_params();
  void zero_grad();
};

/// Argmax accuracy over a clean test set. Errors on an empty set.
double evaluate(nn::TappedBackbone& net, const LabeledImageSet& testset,
                int batch_size = 256);

/// Stage-2 round policy: a non-empty fresh selection wins; an empty one
/// falls back to the previous selection (warning flagged); empty with no
/// fallback aborts with advice to lower gamma.
ConfidentSet resolve_round_selection(ConfidentSet fresh,
                                     const std::optional<ConfidentSet>& previous,
                                     bool* used_fallback);

/// Two-stage training driver owning model, optimizer, EMA and metrics.
class Trainer {
 public:
  Trainer(const TrainPlan& plan, NoisyCorpus corpus, LabeledImageSet testset,
          nn::BackboneSpec backbone, std::string run_dir,
          std::string config_hash);

  /// Runs stage-1 epochs [0, epochs_stage1). Appends to metrics.
  void train_stage1();
  /// Runs stage-2 epochs with periodic re-selection. Needs stage 1 done
  /// (or a loaded checkpoint).
  void train_stage2();

  double evaluate_live();
  double evaluate_ema();

  void save_checkpoint();
  /// Restores weights, optimizer, EMA, epoch counter and (stage 2) the
  /// current selection. Refuses a config-hash mismatch.
  void load_checkpoint(const std::string& ckpt_dir);

  const RunMetrics& metrics() const { return metrics_; }
  int epoch() const { return epoch_; }
  int stage() const { return stage_; }
  const ConfidentSet& current_selection() const { return selection_; }
  TrainModel& model() { return model_; }
  const NoisyCorpus& corpus() const { return corpus_; }

  /// Test/diagnostic hook: invoked per step with (global epoch, indices).
  std::function<void(int, const std::vector<std::int64_t>&)> on_batch;

 private:
  void run_stage1_epoch();
  void run_stage2_epoch();
  void maybe_reselect();
  void finish_epoch(double ce, const std::vector<double>& per_layer,
                    double train_acc);
  void append_metrics_row(const EpochRecord& rec);
  LogitsFn ema_logits_fn();

  TrainPlan plan_;
  NoisyCorpus corpus_;
  LabeledImageSet test_;
  nn::BackboneSpec backbone_spec_;
  std::string run_dir_;
  std::string config_hash_;

  TrainModel model_;
  nn::TappedBackbone eval_net_;  // scratch for EMA snapshots
  nn::SgdMomentum opt_;
  nn::EmaState ema_;

  int epoch_ = 0;
  int stage_ = 1;
  std::vector<std::int64_t> current_batch_;
  ConfidentSet selection_;
  bool have_selection_ = false;
  RunMetrics metrics_;
  bool metrics_header_written_ = false;
};

}  // namespace cwcl
