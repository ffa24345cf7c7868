#include "cwcl/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cwcl/rng.hpp"

namespace fs = std::filesystem;

namespace cwcl {

namespace {

constexpr int kCifarHW = 32;
constexpr int kCifarPixels = kCifarHW * kCifarHW;

void read_cifar_records(const std::string& file, int label_bytes,
                        int label_offset, std::vector<int>& labels,
                        std::vector<float>& pixels) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open CIFAR batch '" + file + "'");
  const int record = label_bytes + 3 * kCifarPixels;
  std::vector<unsigned char> buf(static_cast<std::size_t>(record));
  while (in.read(reinterpret_cast<char*>(buf.data()), record)) {
    labels.push_back(static_cast<int>(buf[static_cast<std::size_t>(label_offset)]));
    for (int i = 0; i < 3 * kCifarPixels; ++i)
      pixels.push_back(static_cast<float>(buf[static_cast<std::size_t>(label_bytes + i)]) / 255.0f);
  }
  if (in.gcount() != 0)
    throw std::runtime_error("truncated CIFAR record in '" + file + "'");
}

LabeledImageSet finish_cifar(std::vector<int> labels, std::vector<float> pixels,
                             int k, Split split) {
  LabeledImageSet set;
  const auto n = static_cast<std::int64_t>(labels.size());
  set.images.shape = {n, 3, kCifarHW, kCifarHW};
  set.images.data = std::move(pixels);
  set.labels = std::move(labels);
  set.num_classes = k;
  set.split = split;
  set.validate();
  return set;
}

}  // namespace

LabeledImageSet load_cifar10(const std::string& dir, Split split) {
  std::vector<int> labels;
  std::vector<float> pixels;
  if (split == Split::train) {
    for (int b = 1; b <= 5; ++b)
      read_cifar_records(dir + "/data_batch_" + std::to_string(b) + ".bin", 1, 0,
                         labels, pixels);
  } else {
    read_cifar_records(dir + "/test_batch.bin", 1, 0, labels, pixels);
  }
  return finish_cifar(std::move(labels), std::move(pixels), 10, split);
}

LabeledImageSet load_cifar100(const std::string& dir, Split split) {
  std::vector<int> labels;
  std::vector<float> pixels;
  // Records carry coarse then fine label; we train on the fine one.
  read_cifar_records(dir + (split == Split::train ? "/train.bin" : "/test.bin"),
                     2, 1, labels, pixels);
  return finish_cifar(std::move(labels), std::move(pixels), 100, split);
}

LabeledImageSet load_image_folder(const std::string& dir, int hw) {
  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) class_dirs.push_back(entry.path().string());
  if (class_dirs.empty())
    throw std::runtime_error("no class subdirectories under '" + dir + "'");
  std::sort(class_dirs.begin(), class_dirs.end());

  std::vector<int> labels;
  std::vector<float> pixels;
  for (std::size_t cls = 0; cls < class_dirs.size(); ++cls) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[cls]))
      if (entry.is_regular_file()) files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      cv::Mat img = cv::imread(file, cv::IMREAD_COLOR);
      if (img.empty())
        throw std::runtime_error("cannot decode image '" + file + "'");
      cv::Mat resized;
      cv::resize(img, resized, cv::Size(hw, hw), 0, 0, cv::INTER_AREA);
      labels.push_back(static_cast<int>(cls));
      // OpenCV is BGR; store RGB planes.
      for (int c = 2; c >= 0; --c)
        for (int y = 0; y < hw; ++y)
          for (int x = 0; x < hw; ++x)
            pixels.push_back(static_cast<float>(resized.at<cv::Vec3b>(y, x)[c]) / 255.0f);
    }
  }

  LabeledImageSet set;
  const auto n = static_cast<std::int64_t>(labels.size());
  set.images.shape = {n, 3, hw, hw};
  set.images.data = std::move(pixels);
  set.labels = std::move(labels);
  set.num_classes = static_cast<int>(class_dirs.size());
  set.split = Split::train;
  set.validate();
  return set;
}

LabeledImageSet make_synthetic(const SyntheticSpec& spec, std::int64_t count,
                               Split split, std::uint64_t seed) {
  const int k = spec.num_classes;
  const int hw = spec.image_hw;
  const int ch = spec.channels;
  if (k < 2 || hw < 4 || ch < 1)
    throw std::invalid_argument("synthetic spec out of range");

  LabeledImageSet set;
  set.images.resize({count, ch, hw, hw});
  set.labels.resize(static_cast<std::size_t>(count));
  set.num_classes = k;
  set.split = split;

  const std::uint64_t split_tag = (split == Split::train) ? 1 : 2;
  constexpr double kTwoPi = 6.283185307179586476925286766559;

#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % k);
    set.labels[static_cast<std::size_t>(i)] = label;
    Rng rng = derive_stream(seed, 0x73796e74ULL, split_tag,
                            static_cast<std::uint64_t>(i));

    // The class signal is split between the grating orientation (neighbour
    // classes sit pi/K apart; per-instance jitter scales with `warp`) and a
    // softly class-positioned blob. The second grating, brightness shift and
    // pixel noise are nuisance structure.
    const double gap = kTwoPi * 0.5 / k;  // pi / K
    const double theta1 = gap * label + spec.warp * 0.45 * gap * rng.normal();
    const double theta2 = theta1 + kTwoPi * 0.25 + 0.3 * (rng.uniform() - 0.5);
    const double f1 = 3.2 * (1.0 + 0.12 * (rng.uniform() - 0.5));
    const double f2 = 5.1 * (1.0 + 0.12 * (rng.uniform() - 0.5));
    const double phase1 = kTwoPi * rng.uniform();
    const double phase2 = kTwoPi * rng.uniform();
    const double amp = 0.8 + 0.4 * rng.uniform();
    const double brightness = 0.12 * (rng.uniform() - 0.5);
    // Blob center: class-coded position with instance jitter.
    const double cx = 0.22 + 0.56 * (((label * 7 + 2) % k) / static_cast<double>(k - 1)) +
                      0.16 * (rng.uniform() - 0.5);
    const double cy = 0.22 + 0.56 * (((label * 3 + 1) % k) / static_cast<double>(k - 1)) +
                      0.16 * (rng.uniform() - 0.5);

    float* img = set.image(i);
    for (int c = 0; c < ch; ++c) {
      // Subtle class colour tint; most of the signal stays spatial.
      const double tint =
          0.85 + 0.15 * std::sin(kTwoPi * (label + 1) * (c + 1) / (k + 3.0));
      for (int y = 0; y < hw; ++y) {
        for (int x = 0; x < hw; ++x) {
          const double u = static_cast<double>(x) / hw;
          const double v = static_cast<double>(y) / hw;
          const double g1 =
              std::sin(kTwoPi * f1 * (u * std::cos(theta1) + v * std::sin(theta1)) + phase1);
          const double g2 =
              std::sin(kTwoPi * f2 * (u * std::cos(theta2) + v * std::sin(theta2)) + phase2);
          const double d2 = (u - cx) * (u - cx) + (v - cy) * (v - cy);
          const double blob = std::exp(-d2 / 0.02);
          double val = 0.5 + brightness + amp * tint * 0.26 * g1 + 0.13 * g2 +
                       0.18 * blob + spec.pixel_noise * rng.normal();
          img[(c * hw + y) * hw + x] =
              static_cast<float>(std::clamp(val, 0.0, 1.0));
        }
      }
    }
  }
  set.validate();
  return set;
}

}  // namespace cwcl
