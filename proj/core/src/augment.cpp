#include "cwcl/augment.hpp"

#include <algorithm>
#include <stdexcept>

namespace cwcl {

Tensor hflip(const Tensor& image) {
  const auto c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out({c, h, w});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y) {
      const float* src = image.ptr() + (ch * h + y) * w;
      float* dst = out.ptr() + (ch * h + y) * w;
      for (std::int64_t x = 0; x < w; ++x) dst[x] = src[w - 1 - x];
    }
  return out;
}

Tensor augment_image(const Tensor& image, const AugPolicy& policy, Rng& rng) {
  if (image.rank() != 3)
    throw std::invalid_argument("augment_image expects (C,H,W), got " +
                                image.shape_str());
  const auto c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out = image;

  if (policy.random_crop && policy.crop_padding > 0) {
    const int p = policy.crop_padding;
    const int dx = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(2 * p + 1)));
    const int dy = static_cast<int>(rng.uniform_int(static_cast<std::uint32_t>(2 * p + 1)));
    // Crop the HxW window at offset (dy,dx) out of the zero-padded image.
    Tensor cropped({c, h, w});
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t y = 0; y < h; ++y) {
        const std::int64_t sy = y + dy - p;
        float* dst = cropped.ptr() + (ch * h + y) * w;
        if (sy < 0 || sy >= h) continue;  // zero padding row
        const float* src = image.ptr() + (ch * h + sy) * w;
        for (std::int64_t x = 0; x < w; ++x) {
          const std::int64_t sx = x + dx - p;
          dst[x] = (sx < 0 || sx >= w) ? 0.0f : src[sx];
        }
      }
    out = std::move(cropped);
  }

  if (policy.hflip_prob > 0.0 && rng.bernoulli(policy.hflip_prob))
    out = hflip(out);

  if (policy.jitter_std > 0.0) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const float delta = static_cast<float>(rng.normal() * policy.jitter_std);
      float* px = out.ptr() + ch * h * w;
      for (std::int64_t i = 0; i < h * w; ++i)
        px[i] = std::clamp(px[i] + delta, 0.0f, 1.0f);
    }
  }
  return out;
}

ViewPair make_view_pair(const Tensor& image, const AugPolicy& policy, Rng& rng,
                        std::int64_t source_index) {
  ViewPair pair;
  pair.view_a = augment_image(image, policy, rng);
  pair.view_b = augment_image(image, policy, rng);
  pair.source_index = source_index;
  return pair;
}

}  // namespace cwcl
