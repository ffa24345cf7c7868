#include "cwcl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cwcl/errors.hpp"
#include "cwcl/losses.hpp"
#include "cwcl/metrics_io.hpp"
#include "cwcl/nn/checkpoint.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cwcl {

namespace {

/// Deterministic epoch shuffle chunked into ceil(n / batch) batches.
std::vector<std::vector<std::int64_t>> shuffled_batches(std::int64_t n,
                                                        int batch_size,
                                                        std::uint64_t seed,
                                                        int epoch) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = derive_stream(seed, 0x62746368ULL, static_cast<std::uint64_t>(epoch));
  for (std::int64_t i = n - 1; i > 0; --i) {
    const auto j = rng.uniform_int(static_cast<std::uint32_t>(i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::vector<std::vector<std::int64_t>> batches;
  for (std::int64_t begin = 0; begin < n; begin += batch_size)
    batches.emplace_back(order.begin() + begin,
                         order.begin() + std::min<std::int64_t>(begin + batch_size, n));
  return batches;
}

std::string format_indices(const std::vector<std::int64_t>& idx) {
  std::ostringstream os;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i) os << " ";
    os << idx[i];
  }
  return os.str();
}

void require_finite_logits(const Tensor& logits, int epoch,
                           const std::vector<std::int64_t>& batch) {
  for (float v : logits.data)
    if (!std::isfinite(v))
      throw TrainAbort("non-finite logits at epoch " + std::to_string(epoch) +
                           "; offending batch indices: " + format_indices(batch),
                       batch);
}

void require_finite_params(TrainModel& model, int epoch,
                           const std::vector<std::int64_t>& batch) {
  for (const auto& p : model.all_params())
    for (std::int64_t i = 0; i < p.size; ++i)
      if (!std::isfinite(p.data[i]))
        throw TrainAbort("training diverged (non-finite weight '" + p.name +
                             "') at epoch " + std::to_string(epoch) +
                             "; offending batch indices: " + format_indices(batch),
                         batch);
}

}  // namespace

void TrainPlan::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ConfigError("lambda " + std::to_string(lambda) + " outside [0,1]");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw ConfigError("momentum outside [0,1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (epochs_stage1 < 0 || epochs_stage2 < 0)
    throw ConfigError("epoch counts must be >= 0");
  if (total_epochs() < 1) throw ConfigError("schedule needs at least one epoch");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0))
    throw ConfigError("ema_decay outside [0,1]");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma outside (0,1]");
  if (round_length < 1) throw ConfigError("round_length must be >= 1");
  if (!(tau_cwcl > 0.0) || !(tau_supcon > 0.0))
    throw ConfigError("temperatures must be strictly positive");
  if (proj_hidden < 1 || proj_dim < 1)
    throw ConfigError("projection head dims must be >= 1");
}

double lr_at(const TrainPlan& plan, int epoch) {
  if (epoch < 0)
    throw std::invalid_argument("lr_at: negative epoch " + std::to_string(epoch));
  if (epoch >= plan.total_epochs())
    throw std::invalid_argument("lr_at: epoch " + std::to_string(epoch) +
                                " beyond schedule of " +
                                std::to_string(plan.total_epochs()));
  const double lr_min = plan.lr0 * 1e-3;
  int span = plan.total_epochs();
  int e = epoch;
  if (plan.stage2_restart_schedule && plan.epochs_stage2 > 0) {
    if (epoch < plan.epochs_stage1) {
      span = plan.epochs_stage1;
    } else {
      span = plan.epochs_stage2;
      e = epoch - plan.epochs_stage1;
    }
  }
  if (span <= 1) return plan.lr0;
  constexpr double kPi = 3.14159265358979323846;
  const double t = static_cast<double>(e) / static_cast<double>(span - 1);
  return lr_min + (plan.lr0 - lr_min) * 0.5 * (1.0 + std::cos(kPi * t));
}

TrainModel::TrainModel(const nn::BackboneSpec& spec, const TrainPlan& plan,
                       std::uint64_t seed)
    : net(spec, seed) {
  for (int l = 0; l < spec.num_stages(); ++l) {
    const int hw = spec.tap_hw(l);
    channel_heads.emplace_back(l, hw * hw, plan.proj_hidden, plan.proj_dim,
                               /*bias=*/true, seed);
    instance_heads.emplace_back(l, spec.widths[static_cast<std::size_t>(l)],
                                plan.proj_hidden, plan.proj_dim,
                                /*bias=*/true, seed);
  }
}

std::vector<nn::ParamView> TrainModel::all_params() {
  auto out = net.params();
  for (auto& head : channel_heads)
    for (auto& p : head.params()) out.push_back(p);
  for (auto& head : instance_heads)
    for (auto& p : head.params()) out.push_back(p);
  return out;
}

void TrainModel::zero_grad() {
  for (auto& p : all_params()) std::fill(p.grad, p.grad + p.size, 0.0f);
}

double evaluate(nn::TappedBackbone& net, const LabeledImageSet& testset,
                int batch_size) {
  if (testset.size() == 0)
    throw std::invalid_argument("evaluate: empty test set");
  const auto n = testset.size();
  const auto plane =
      testset.images.dim(1) * testset.images.dim(2) * testset.images.dim(3);
  std::int64_t correct = 0;
  Tensor logits;
  for (std::int64_t begin = 0; begin < n; begin += batch_size) {
    const auto count = std::min<std::int64_t>(batch_size, n - begin);
    Tensor batch({count, testset.images.dim(1), testset.images.dim(2),
                  testset.images.dim(3)});
    std::copy(testset.image(begin), testset.image(begin) + count * plane,
              batch.ptr());
    net.forward_with_taps(batch, /*train=*/false, logits, nullptr);
    const auto k = logits.dim(1);
    for (std::int64_t i = 0; i < count; ++i) {
      const float* row = logits.ptr() + i * k;
      std::int64_t best = 0;
      for (std::int64_t j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
      if (best == testset.labels[static_cast<std::size_t>(begin + i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

ConfidentSet resolve_round_selection(ConfidentSet fresh,
                                     const std::optional<ConfidentSet>& previous,
                                     bool* used_fallback) {
  if (used_fallback) *used_fallback = false;
  if (!fresh.empty()) return fresh;
  if (previous.has_value() && !previous->empty()) {
    if (used_fallback) *used_fallback = true;
    ConfidentSet keep = *previous;
    keep.round = fresh.round;
    return keep;
  }
  throw TrainAbort(
      "confident selection round " + std::to_string(fresh.round) +
      " came back empty with no previous selection to fall back to; "
      "lower gamma (currently " + std::to_string(fresh.threshold) + ")");
}

Trainer::Trainer(const TrainPlan& plan, NoisyCorpus corpus,
                 LabeledImageSet testset, nn::BackboneSpec backbone,
                 std::string run_dir, std::string config_hash)
    : plan_(plan),
      corpus_(std::move(corpus)),
      test_(std::move(testset)),
      backbone_spec_(backbone),
      run_dir_(std::move(run_dir)),
      config_hash_(std::move(config_hash)),
      model_(backbone, plan, plan.seed),
      eval_net_(backbone, plan.seed),
      opt_(plan.momentum, plan.weight_decay),
      ema_(model_.net.params(), model_.net.buffers(), plan.ema_decay) {
  plan_.validate();
  corpus_.validate();
  test_.validate();
  if (corpus_.base.channels() != backbone.in_channels ||
      corpus_.base.height() != backbone.in_hw ||
      corpus_.base.width() != backbone.in_hw)
    throw ConfigError("corpus images " + corpus_.base.images.shape_str() +
                      " do not match backbone input " +
                      std::to_string(backbone.in_hw));
  if (corpus_.base.num_classes != backbone.num_classes)
    throw ConfigError("corpus classes " + std::to_string(corpus_.base.num_classes) +
                      " != backbone classes " + std::to_string(backbone.num_classes));
  fs::create_directories(run_dir_);
  fs::create_directories(run_dir_ + "/ckpt");
  fs::create_directories(run_dir_ + "/confident");
}

LogitsFn Trainer::ema_logits_fn() {
  ema_.apply_to(eval_net_.params(), eval_net_.buffers());
  return [this](const Tensor& batch, Tensor& logits) {
    eval_net_.forward_with_taps(batch, /*train=*/false, logits, nullptr);
  };
}

double Trainer::evaluate_live() { return evaluate(model_.net, test_); }

double Trainer::evaluate_ema() {
  ema_.apply_to(eval_net_.params(), eval_net_.buffers());
  return evaluate(eval_net_, test_);
}

void Trainer::append_metrics_row(const EpochRecord& rec) {
  metrics_.records.push_back(rec);
  append_metrics_csv(run_dir_ + "/metrics.csv", config_hash_, rec);
}

void Trainer::finish_epoch(double ce, const std::vector<double>& per_layer,
                           double train_acc) {
  EpochRecord rec;
  rec.epoch = epoch_;
  rec.stage = stage_;
  rec.lr = lr_at(plan_, epoch_);
  rec.ce = ce;
  const auto parts = (stage_ == 1)
                         ? losses::stage1_total(ce, per_layer, plan_.lambda)
                         : losses::stage2_total(ce, per_layer, plan_.lambda);
  double layer_sum = 0.0;
  for (double v : per_layer) layer_sum += v;
  rec.contrastive_mean = layer_sum / static_cast<double>(per_layer.size());
  rec.total = parts.total;
  rec.train_acc_noisy = train_acc;
  rec.test_acc_live = evaluate_live();
  rec.test_acc_ema = evaluate_ema();
  if (stage_ == 2 && have_selection_) {
    rec.selection_size = selection_.size();
    rec.selection_noise_rate = selection_noise_rate(selection_, corpus_);
  }
  append_metrics_row(rec);
  ++epoch_;
  if (plan_.ckpt_every > 0 && epoch_ % plan_.ckpt_every == 0) save_checkpoint();
}

void Trainer::run_stage1_epoch() {
  const int num_layers = backbone_spec_.num_stages();
  const double lr = lr_at(plan_, epoch_);
  const auto batches =
      shuffled_batches(corpus_.size(), plan_.batch_size, plan_.seed, epoch_);

  const auto c = corpus_.base.images.dim(1);
  const auto hw = corpus_.base.images.dim(2);
  const auto plane = c * hw * hw;

  double ce_sum = 0.0;
  std::vector<double> layer_sums(static_cast<std::size_t>(num_layers), 0.0);
  std::int64_t correct = 0, rows_seen = 0;

  Tensor sample({c, hw, hw});
  for (const auto& batch : batches) {
    current_batch_ = batch;
    if (on_batch) on_batch(epoch_, batch);
    const auto b = static_cast<std::int64_t>(batch.size());
    const bool contrastive = plan_.lambda > 0.0;
    const std::int64_t rows = contrastive ? 2 * b : b;

    Tensor x({rows, c, hw, hw});
    std::vector<int> labels(static_cast<std::size_t>(rows));
    for (std::int64_t i = 0; i < b; ++i) {
      const auto idx = batch[static_cast<std::size_t>(i)];
      std::copy(corpus_.base.image(idx), corpus_.base.image(idx) + plane,
                sample.ptr());
      Rng rng = view_stream(plan_.seed, idx, epoch_);
      if (contrastive) {
        ViewPair pair = make_view_pair(sample, plan_.aug, rng, idx);
        std::copy(pair.view_a.data.begin(), pair.view_a.data.end(),
                  x.ptr() + i * plane);
        std::copy(pair.view_b.data.begin(), pair.view_b.data.end(),
                  x.ptr() + (b + i) * plane);
        labels[static_cast<std::size_t>(i)] =
            corpus_.noisy_labels[static_cast<std::size_t>(idx)];
        labels[static_cast<std::size_t>(b + i)] =
            corpus_.noisy_labels[static_cast<std::size_t>(idx)];
      } else {
        Tensor view = augment_image(sample, plan_.aug, rng);
        std::copy(view.data.begin(), view.data.end(), x.ptr() + i * plane);
        labels[static_cast<std::size_t>(i)] =
            corpus_.noisy_labels[static_cast<std::size_t>(idx)];
      }
    }

    model_.zero_grad();
    Tensor logits;
    std::vector<Tensor> taps;
    model_.net.forward_with_taps(x, /*train=*/true, logits,
                                 contrastive ? &taps : nullptr);
    require_finite_logits(logits, epoch_, batch);

    // CE over every forwarded row (both views when contrastive).
    Eigen::MatrixXd logits_d(rows, logits.dim(1));
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < logits.dim(1); ++j)
        logits_d(i, j) = logits.ptr()[i * logits.dim(1) + j];
    Eigen::MatrixXd dlogits_d;
    const double ce = losses::ce_loss_grad(logits_d, labels, dlogits_d);

    std::vector<double> per_layer(static_cast<std::size_t>(num_layers), 0.0);
    std::vector<Tensor> dtaps(static_cast<std::size_t>(num_layers));
    if (contrastive) {
      const int m_scale_layers = num_layers;
      for (int l = 0; l < num_layers; ++l) {
        auto& head = model_.channel_heads[static_cast<std::size_t>(l)];
        Tensor bank = head.forward(taps[static_cast<std::size_t>(l)]);
        const auto m = taps[static_cast<std::size_t>(l)].dim(1);
        const auto d = bank.dim(1);

        Tensor dbank(bank.shape);
        double layer_loss = 0.0;
        Eigen::MatrixXd chans(2 * m, d), dchans;
        for (std::int64_t i = 0; i < b; ++i) {
          for (std::int64_t ch = 0; ch < m; ++ch) {
            for (std::int64_t j = 0; j < d; ++j) {
              chans(ch, j) = bank.ptr()[(i * m + ch) * d + j];
              chans(m + ch, j) = bank.ptr()[((b + i) * m + ch) * d + j];
            }
          }
          layer_loss += losses::cwcl_loss_grad(chans, plan_.tau_cwcl,
                                               plan_.symmetrize, dchans);
          // Per-layer term: batch mean of the per-sample value, normalized
          // by the anchor count M so layers with different channel counts
          // weigh equally and the term stays commensurate with CE.
          const double gscale = (plan_.lambda / m_scale_layers) /
                                (static_cast<double>(b) * static_cast<double>(m));
          for (std::int64_t ch = 0; ch < m; ++ch)
            for (std::int64_t j = 0; j < d; ++j) {
              dbank.ptr()[(i * m + ch) * d + j] =
                  static_cast<float>(dchans(ch, j) * gscale);
              dbank.ptr()[((b + i) * m + ch) * d + j] =
                  static_cast<float>(dchans(m + ch, j) * gscale);
            }
        }
        per_layer[static_cast<std::size_t>(l)] =
            layer_loss / (static_cast<double>(b) * static_cast<double>(m));
        dtaps[static_cast<std::size_t>(l)] = head.backward(dbank);
      }
    }

    const auto parts = losses::stage1_total(
        ce, contrastive ? per_layer
                        : std::vector<double>(static_cast<std::size_t>(num_layers), 0.0),
        plan_.lambda);
    if (!std::isfinite(parts.total))
      throw TrainAbort("non-finite stage-1 loss at epoch " + std::to_string(epoch_) +
                           "; offending batch indices: " + format_indices(batch),
                       batch);

    Tensor dlogits({rows, logits.dim(1)});
    const double ce_w = 1.0 - plan_.lambda;
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < logits.dim(1); ++j)
        dlogits.ptr()[i * logits.dim(1) + j] =
            static_cast<float>(dlogits_d(i, j) * ce_w);

    model_.net.backward(dlogits, contrastive ? &dtaps : nullptr);
    opt_.step(model_.all_params(), lr);
    require_finite_params(model_, epoch_, batch);
    ema_.update(model_.net.params(), model_.net.buffers());

    ce_sum += ce;
    for (int l = 0; l < num_layers; ++l)
      layer_sums[static_cast<std::size_t>(l)] += per_layer[static_cast<std::size_t>(l)];
    for (std::int64_t i = 0; i < rows; ++i) {
      const float* row = logits.ptr() + i * logits.dim(1);
      std::int64_t best = 0;
      for (std::int64_t j = 1; j < logits.dim(1); ++j)
        if (row[j] > row[best]) best = j;
      if (best == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    rows_seen += rows;
  }

  const auto steps = static_cast<double>(batches.size());
  std::vector<double> per_layer_mean(layer_sums.size());
  for (std::size_t l = 0; l < layer_sums.size(); ++l)
    per_layer_mean[l] = layer_sums[l] / steps;
  finish_epoch(ce_sum / steps, per_layer_mean,
               static_cast<double>(correct) / static_cast<double>(rows_seen));
}

void Trainer::maybe_reselect() {
  const int stage2_epoch = epoch_ - plan_.epochs_stage1;
  if (stage2_epoch % plan_.round_length != 0 && have_selection_) return;
  const int round = stage2_epoch / plan_.round_length;

  ConfidentSet fresh = select_confident(ema_logits_fn(), corpus_, plan_.gamma,
                                        round, plan_.seed, plan_.aug);
  bool used_fallback = false;
  selection_ = resolve_round_selection(
      std::move(fresh),
      have_selection_ ? std::optional<ConfidentSet>(selection_) : std::nullopt,
      &used_fallback);
  have_selection_ = true;
  if (used_fallback)
    std::cerr << "[cwcl] warning: round " << round
              << " selection was empty; reusing the previous round's selection\n";
  save_confident_set(selection_,
                     run_dir_ + "/confident/round-" + std::to_string(round) + ".csv",
                     config_hash_);
}

void Trainer::run_stage2_epoch() {
  const int num_layers = backbone_spec_.num_stages();
  const double lr = lr_at(plan_, epoch_);
  const auto c = corpus_.base.images.dim(1);
  const auto hw = corpus_.base.images.dim(2);
  const auto plane = c * hw * hw;

  ClassBalancedSampler sampler(selection_, corpus_.noisy_labels);
  const auto steps = std::max<std::int64_t>(
      1, (selection_.size() + plan_.batch_size - 1) / plan_.batch_size);
  Rng batch_rng =
      derive_stream(plan_.seed, 0x62616c32ULL, static_cast<std::uint64_t>(epoch_));

  double ce_sum = 0.0;
  std::vector<double> layer_sums(static_cast<std::size_t>(num_layers), 0.0);
  std::int64_t correct = 0, rows_seen = 0;

  Tensor sample({c, hw, hw});
  for (std::int64_t step = 0; step < steps; ++step) {
    const auto batch = sampler.next_batch(plan_.batch_size, batch_rng);
    current_batch_ = batch;
    if (on_batch) on_batch(epoch_, batch);
    const auto b = static_cast<std::int64_t>(batch.size());
    const std::int64_t rows = 2 * b;

    Tensor x({rows, c, hw, hw});
    std::vector<int> labels(static_cast<std::size_t>(rows));
    for (std::int64_t i = 0; i < b; ++i) {
      const auto idx = batch[static_cast<std::size_t>(i)];
      std::copy(corpus_.base.image(idx), corpus_.base.image(idx) + plane,
                sample.ptr());
      // Distinct stream key per slot: the sampler may repeat an index
      // within one batch and the views should still differ.
      Rng rng = derive_stream(plan_.seed, 0x76327377ULL,
                              static_cast<std::uint64_t>(epoch_),
                              static_cast<std::uint64_t>(step * plan_.batch_size + i));
      ViewPair pair = make_view_pair(sample, plan_.aug, rng, idx);
      std::copy(pair.view_a.data.begin(), pair.view_a.data.end(), x.ptr() + i * plane);
      std::copy(pair.view_b.data.begin(), pair.view_b.data.end(),
                x.ptr() + (b + i) * plane);
      labels[static_cast<std::size_t>(i)] =
          corpus_.noisy_labels[static_cast<std::size_t>(idx)];
      labels[static_cast<std::size_t>(b + i)] =
          corpus_.noisy_labels[static_cast<std::size_t>(idx)];
    }

    model_.zero_grad();
    Tensor logits;
    std::vector<Tensor> taps;
    model_.net.forward_with_taps(x, /*train=*/true, logits, &taps);
    require_finite_logits(logits, epoch_, batch);

    Eigen::MatrixXd logits_d(rows, logits.dim(1));
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < logits.dim(1); ++j)
        logits_d(i, j) = logits.ptr()[i * logits.dim(1) + j];
    Eigen::MatrixXd dlogits_d;
    const double ce = losses::ce_loss_grad(logits_d, labels, dlogits_d);

    std::vector<double> per_layer(static_cast<std::size_t>(num_layers), 0.0);
    std::vector<Tensor> dtaps(static_cast<std::size_t>(num_layers));
    for (int l = 0; l < num_layers; ++l) {
      auto& head = model_.instance_heads[static_cast<std::size_t>(l)];
      Tensor feats = head.forward(taps[static_cast<std::size_t>(l)]);
      const auto d = feats.dim(1);
      Eigen::MatrixXd feats_d(rows, d), dfeats_d;
      for (std::int64_t i = 0; i < rows; ++i)
        for (std::int64_t j = 0; j < d; ++j)
          feats_d(i, j) = feats.ptr()[i * d + j];
      // Anchor-mean keeps the per-layer value and gradient batch-size free.
      const double raw =
          losses::supcon_loss_grad(feats_d, labels, plan_.tau_supcon, dfeats_d);
      const double layer_val = raw / static_cast<double>(rows);
      per_layer[static_cast<std::size_t>(l)] = layer_val;
      const double gscale =
          (plan_.lambda / num_layers) / static_cast<double>(rows);
      Tensor dfeats(feats.shape);
      for (std::int64_t i = 0; i < rows; ++i)
        for (std::int64_t j = 0; j < d; ++j)
          dfeats.ptr()[i * d + j] = static_cast<float>(dfeats_d(i, j) * gscale);
      dtaps[static_cast<std::size_t>(l)] = head.backward(dfeats);
    }

    const auto parts = losses::stage2_total(ce, per_layer, plan_.lambda);
    if (!std::isfinite(parts.total))
      throw TrainAbort("non-finite stage-2 loss at epoch " + std::to_string(epoch_) +
                           "; offending batch indices: " + format_indices(batch),
                       batch);

    Tensor dlogits({rows, logits.dim(1)});
    const double ce_w = 1.0 - plan_.lambda;
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < logits.dim(1); ++j)
        dlogits.ptr()[i * logits.dim(1) + j] =
            static_cast<float>(dlogits_d(i, j) * ce_w);

    model_.net.backward(dlogits, &dtaps);
    opt_.step(model_.all_params(), lr);
    require_finite_params(model_, epoch_, batch);
    ema_.update(model_.net.params(), model_.net.buffers());

    ce_sum += ce;
    for (int l = 0; l < num_layers; ++l)
      layer_sums[static_cast<std::size_t>(l)] += per_layer[static_cast<std::size_t>(l)];
    for (std::int64_t i = 0; i < rows; ++i) {
      const float* row = logits.ptr() + i * logits.dim(1);
      std::int64_t best = 0;
      for (std::int64_t j = 1; j < logits.dim(1); ++j)
        if (row[j] > row[best]) best = j;
      if (best == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    rows_seen += rows;
  }

  std::vector<double> per_layer_mean(layer_sums.size());
  for (std::size_t l = 0; l < layer_sums.size(); ++l)
    per_layer_mean[l] = layer_sums[l] / static_cast<double>(steps);
  finish_epoch(ce_sum / static_cast<double>(steps), per_layer_mean,
               static_cast<double>(correct) / static_cast<double>(rows_seen));
}

void Trainer::train_stage1() {
  stage_ = 1;
  try {
    while (epoch_ < plan_.epochs_stage1) run_stage1_epoch();
  } catch (TrainAbort&) {
    throw;
  } catch (const std::exception& e) {
    throw TrainAbort(std::string(e.what()) + " at epoch " + std::to_string(epoch_) +
                         "; offending batch indices: " + format_indices(current_batch_),
                     current_batch_);
  }
  save_checkpoint();
}

void Trainer::train_stage2() {
  if (epoch_ < plan_.epochs_stage1)
    throw TrainAbort("stage 2 requires a completed stage 1 (epoch " +
                     std::to_string(epoch_) + " of " +
                     std::to_string(plan_.epochs_stage1) + ")");
  stage_ = 2;
  try {
    while (epoch_ < plan_.total_epochs()) {
      maybe_reselect();
      run_stage2_epoch();
    }
  } catch (TrainAbort&) {
    throw;
  } catch (const std::exception& e) {
    throw TrainAbort(std::string(e.what()) + " at epoch " + std::to_string(epoch_) +
                         "; offending batch indices: " + format_indices(current_batch_),
                     current_batch_);
  }
  if (plan_.epochs_stage2 > 0) save_checkpoint();
}

void Trainer::save_checkpoint() {
  const std::string dir =
      run_dir_ + "/ckpt/" + std::to_string(stage_) + "-" + std::to_string(epoch_);
  fs::create_directories(dir);

  std::vector<nn::NamedArray> arrays;
  for (auto& p : model_.all_params())
    arrays.push_back({p.name, std::vector<float>(p.data, p.data + p.size)});
  for (auto& buf : model_.net.buffers())
    arrays.push_back({buf.name, std::vector<float>(buf.data, buf.data + buf.size)});
  nn::write_f32_arrays(dir + "/weights.bin", arrays);

  nn::write_f64_array(dir + "/ema.bin", ema_.shadow());

  std::vector<nn::NamedArray> vel;
  auto params = model_.all_params();
  auto& velocity = opt_.velocity();
  if (!velocity.empty())
    for (std::size_t i = 0; i < params.size(); ++i)
      vel.push_back({params[i].name, velocity[i]});
  nn::write_f32_arrays(dir + "/optim.bin", vel);

  json manifest;
  manifest["epoch"] = epoch_;
  manifest["stage"] = stage_;
  manifest["seed"] = plan_.seed;
  manifest["config_hash"] = config_hash_;
  manifest["arch"] = {{"widths", backbone_spec_.widths},
                      {"blocks", backbone_spec_.blocks},
                      {"in_hw", backbone_spec_.in_hw},
                      {"in_channels", backbone_spec_.in_channels},
                      {"num_classes", backbone_spec_.num_classes},
                      {"proj_hidden", plan_.proj_hidden},
                      {"proj_dim", plan_.proj_dim}};
  manifest["selection_round"] = have_selection_ ? selection_.round : -1;
  std::ofstream mf(dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
  if (!mf) throw std::runtime_error("cannot write manifest under '" + dir + "'");
}

void Trainer::load_checkpoint(const std::string& ckpt_dir) {
  std::ifstream mf(ckpt_dir + "/manifest.json");
  if (!mf) throw std::runtime_error("cannot read manifest under '" + ckpt_dir + "'");
  json manifest = json::parse(mf);

  if (manifest.at("config_hash").get<std::string>() != config_hash_)
    throw ConfigError(
        "checkpoint '" + ckpt_dir + "' was produced by config hash " +
        manifest.at("config_hash").get<std::string>() + " but this run uses " +
        config_hash_ + "; refusing to resume across configs");
  const auto arch = manifest.at("arch");
  if (arch.at("widths").get<std::vector<int>>() != backbone_spec_.widths ||
      arch.at("in_hw").get<int>() != backbone_spec_.in_hw ||
      arch.at("num_classes").get<int>() != backbone_spec_.num_classes)
    throw ConfigError("checkpoint architecture does not match this run");

  auto weights = nn::read_f32_arrays(ckpt_dir + "/weights.bin");
  auto load_into = [&](const std::string& name, float* dst, std::int64_t size) {
    auto it = weights.find(name);
    if (it == weights.end())
      throw std::runtime_error("checkpoint missing array '" + name + "'");
    if (static_cast<std::int64_t>(it->second.size()) != size)
      throw std::runtime_error("checkpoint array '" + name + "' has size " +
                               std::to_string(it->second.size()) + ", expected " +
                               std::to_string(size));
    std::copy(it->second.begin(), it->second.end(), dst);
  };
  for (auto& p : model_.all_params()) load_into(p.name, p.data, p.size);
  for (auto& buf : model_.net.buffers()) load_into(buf.name, buf.data, buf.size);

  auto shadow = nn::read_f64_array(ckpt_dir + "/ema.bin");
  if (shadow.size() != ema_.shadow().size())
    throw std::runtime_error("checkpoint EMA shadow size mismatch");
  ema_.shadow() = std::move(shadow);

  auto vel = nn::read_f32_arrays(ckpt_dir + "/optim.bin");
  if (!vel.empty()) {
    auto params = model_.all_params();
    auto& velocity = opt_.velocity();
    velocity.clear();
    for (auto& p : params) {
      auto it = vel.find(p.name);
      if (it == vel.end())
        throw std::runtime_error("checkpoint missing optimizer state for '" +
                                 p.name + "'");
      velocity.push_back(it->second);
    }
  }

  epoch_ = manifest.at("epoch").get<int>();
  stage_ = manifest.at("stage").get<int>();
  const int round = manifest.at("selection_round").get<int>();
  if (stage_ == 2 && round >= 0) {
    selection_ = load_confident_set(
        run_dir_ + "/confident/round-" + std::to_string(round) + ".csv", round);
    selection_.threshold = plan_.gamma;
    have_selection_ = !selection_.empty();
  }
}

}  // namespace cwcl
