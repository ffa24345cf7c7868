#pragma once

#include <string>
#include <vector>

#include "cwcl/corpus.hpp"
#include "cwcl/dataset_io.hpp"
#include "cwcl/errors.hpp"
#include "cwcl/nn/backbone.hpp"
#include "cwcl/trainer.hpp"

namespace cwcl {

/// One experiment, fully determined by a flat `key = value` text file
/// ('#' starts a comment). Unknown keys are rejected. serialize() emits the
/// canonical form, which round-trips losslessly and feeds the config hash.
struct ExperimentConfig {
  // dataset
  std::string dataset_kind = "synthetic";  // synthetic | cifar10 | cifar100 | folder
  std::string dataset_path;
  int train_count = 5000;  // synthetic only
  int test_count = 1000;   // synthetic only
  int image_hw = 32;
  int classes = 10;        // synthetic only
  double pixel_noise = 0.30;
  double warp = 1.0;
  int subset = 0;  // keep only the first N training samples (0 = all)

  // noise
  NoiseSpec noise;
  std::string noise_file;  // optional pre-existing overlay

  // backbone
  std::string backbone = "tiny";  // tiny | resnet18 | custom
  std::vector<int> widths;        // custom only
  std::vector<int> blocks;        // custom only

  TrainPlan plan;

  // run
  std::string out_dir = "runs/exp";
  std::string stage = "both";  // both | 1-only | 2-only

  static ExperimentConfig parse_file(const std::string& path);
  static ExperimentConfig parse_string(const std::string& text);
  std::string serialize() const;

  /// FNV-1a over the full canonical serialization (ties artifacts to the
  /// exact settings, seed included).
  std::string hash() const;
  /// Same hash with run.seed and run.out blanked: identifies the
  /// experimental arm across seeds, used by the report grouping check.
  std::string group_hash() const;

  /// Label for report grouping: "ce" (lambda 0), "stage1" (no stage 2
  /// epochs or stage=1-only), else "stage1+2".
  std::string arm() const;

  LabeledImageSet load_train() const;
  LabeledImageSet load_test() const;
  nn::BackboneSpec backbone_spec() const;

  void validate() const;
};

/// 16-hex-digit FNV-1a of an arbitrary string.
std::string fnv1a_hex(const std::string& text);

}  // namespace cwcl
