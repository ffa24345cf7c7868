#include "cwcl/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace cwcl::nn {

namespace {

/// He-normal fill, deterministic off the given stream.
void he_init(Tensor& w, std::int64_t fan_in, Rng& rng) {
  const float std = std::sqrt(2.0f / static_cast<float>(fan_in));
  for (auto& v : w.data) v = static_cast<float>(rng.normal()) * std;
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad,
               const std::string& name, Rng& rng)
    : in_ch_(in_ch), out_ch_(out_ch), ksize_(ksize), stride_(stride), pad_(pad),
      name_(name) {
  weight_.resize({out_ch, static_cast<std::int64_t>(in_ch) * ksize * ksize});
  wgrad_.resize(weight_.shape);
  he_init(weight_, static_cast<std::int64_t>(in_ch) * ksize * ksize, rng);
}

void Conv2d::im2col(const Tensor& x, Tensor& cols) const {
  const auto b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int oh = out_hw(static_cast<int>(h)), ow = out_hw(static_cast<int>(w));
  const std::int64_t ckk = static_cast<std::int64_t>(in_ch_) * ksize_ * ksize_;
  cols.resize({b * oh * ow, ckk});

#pragma omp parallel for schedule(static)
  for (std::int64_t bi = 0; bi < b; ++bi) {
    const float* xb = x.ptr() + bi * in_ch_ * h * w;
    float* cb = cols.ptr() + bi * oh * ow * ckk;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        float* col = cb + (static_cast<std::int64_t>(oy) * ow + ox) * ckk;
        std::int64_t idx = 0;
        for (int c = 0; c < in_ch_; ++c) {
          for (int ky = 0; ky < ksize_; ++ky) {
            const int iy = oy * stride_ + ky - pad_;
            for (int kx = 0; kx < ksize_; ++kx, ++idx) {
              const int ix = ox * stride_ + kx - pad_;
              col[idx] = (iy < 0 || iy >= h || ix < 0 || ix >= w)
                             ? 0.0f
                             : xb[(static_cast<std::int64_t>(c) * h + iy) * w + ix];
            }
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const Tensor& cols, Tensor& dx) const {
  const auto b = dx.dim(0), h = dx.dim(2), w = dx.dim(3);
  const int oh = out_hw(static_cast<int>(h)), ow = out_hw(static_cast<int>(w));
  const std::int64_t ckk = static_cast<std::int64_t>(in_ch_) * ksize_ * ksize_;
  dx.zero();

#pragma omp parallel for schedule(static)
  for (std::int64_t bi = 0; bi < b; ++bi) {
    const float* cb = cols.ptr() + bi * oh * ow * ckk;
    float* xb = dx.ptr() + bi * in_ch_ * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const float* col = cb + (static_cast<std::int64_t>(oy) * ow + ox) * ckk;
        std::int64_t idx = 0;
        for (int c = 0; c < in_ch_; ++c) {
          for (int ky = 0; ky < ksize_; ++ky) {
            const int iy = oy * stride_ + ky - pad_;
            for (int kx = 0; kx < ksize_; ++kx, ++idx) {
              const int ix = ox * stride_ + kx - pad_;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              xb[(static_cast<std::int64_t>(c) * h + iy) * w + ix] += col[idx];
            }
          }
        }
      }
    }
  }
}

void Conv2d::forward(const Tensor& x, Tensor& y) {
  if (x.dim(1) != in_ch_)
    throw std::invalid_argument(name_ + ": expected " + std::to_string(in_ch_) +
                                " input channels, got " + std::to_string(x.dim(1)));
  x_cache_ = x;
  const auto b = x.dim(0);
  const int oh = out_hw(static_cast<int>(x.dim(2)));
  const int ow = out_hw(static_cast<int>(x.dim(3)));
  const std::int64_t ckk = static_cast<std::int64_t>(in_ch_) * ksize_ * ksize_;

  Tensor cols;
  im2col(x, cols);
  // (B*OH*OW, CKK) x (CKK, outC) -> (B*OH*OW, outC)
  MatrixRM tmp = cols.mat(b * oh * ow, ckk) * weight_.mat(out_ch_, ckk).transpose();

  y.resize({b, out_ch_, oh, ow});
#pragma omp parallel for schedule(static)
  for (std::int64_t bi = 0; bi < b; ++bi) {
    float* yb = y.ptr() + bi * out_ch_ * oh * ow;
    const std::int64_t row0 = bi * oh * ow;
    for (int oc = 0; oc < out_ch_; ++oc)
      for (std::int64_t p = 0; p < static_cast<std::int64_t>(oh) * ow; ++p)
        yb[oc * oh * ow + p] = tmp(row0 + p, oc);
  }
}

void Conv2d::backward(const Tensor& dy, Tensor& dx) {
  const auto b = x_cache_.dim(0);
  const int oh = static_cast<int>(dy.dim(2)), ow = static_cast<int>(dy.dim(3));
  const std::int64_t ckk = static_cast<std::int64_t>(in_ch_) * ksize_ * ksize_;

  // Gather dy into (B*OH*OW, outC).
  Tensor dtmp({b * oh * ow, out_ch_});
#pragma omp parallel for schedule(static)
  for (std::int64_t bi = 0; bi < b; ++bi) {
    const float* db = dy.ptr() + bi * out_ch_ * oh * ow;
    const std::int64_t row0 = bi * oh * ow;
    for (int oc = 0; oc < out_ch_; ++oc)
      for (std::int64_t p = 0; p < static_cast<std::int64_t>(oh) * ow; ++p)
        dtmp.ptr()[(row0 + p) * out_ch_ + oc] = db[oc * oh * ow + p];
  }

  Tensor cols;
  im2col(x_cache_, cols);

  auto dmat = dtmp.mat(b * oh * ow, out_ch_);
  wgrad_.mat(out_ch_, ckk).noalias() += dmat.transpose() * cols.mat(b * oh * ow, ckk);

  Tensor dcols({b * oh * ow, ckk});
  dcols.mat(b * oh * ow, ckk).noalias() = dmat * weight_.mat(out_ch_, ckk);

  dx.resize(x_cache_.shape);
  col2im(dcols, dx);
}

void Conv2d::collect(std::vector<ParamView>& params) {
  params.push_back({name_ + ".weight", weight_.ptr(), wgrad_.ptr(), weight_.numel()});
}

// ------------------------------------------------------------ BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, const std::string& name)
    : channels_(channels), name_(name) {
  gamma_.resize({channels});
  beta_.resize({channels});
  gamma_grad_.resize({channels});
  beta_grad_.resize({channels});
  running_mean_.resize({channels});
  running_var_.resize({channels});
  for (auto& v : gamma_.data) v = 1.0f;
  for (auto& v : running_var_.data) v = 1.0f;
}

void BatchNorm2d::forward(const Tensor& x, bool train, Tensor& y) {
  const auto b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c != channels_)
    throw std::invalid_argument(name_ + ": channel mismatch " + std::to_string(c));
  y.resize(x.shape);
  const std::int64_t plane = h * w;
  const auto count = static_cast<double>(b * plane);

  if (train) {
    xhat_cache_.resize(x.shape);
    inv_std_.resize(static_cast<std::size_t>(c));
    // Per-channel reductions are sequential so results do not depend on the
    // thread count; parallelism is across channels.
#pragma omp parallel for schedule(static)
    for (std::int64_t ci = 0; ci < c; ++ci) {
      double sum = 0.0, sq = 0.0;
      for (std::int64_t bi = 0; bi < b; ++bi) {
        const float* px = x.ptr() + (bi * c + ci) * plane;
        for (std::int64_t p = 0; p < plane; ++p) {
          sum += px[p];
          sq += static_cast<double>(px[p]) * px[p];
        }
      }
      const double mean = sum / count;
      const double var = sq / count - mean * mean;
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_std_[static_cast<std::size_t>(ci)] = static_cast<float>(inv);
      const float g = gamma_.data[static_cast<std::size_t>(ci)];
      const float bt = beta_.data[static_cast<std::size_t>(ci)];
      for (std::int64_t bi = 0; bi < b; ++bi) {
        const float* px = x.ptr() + (bi * c + ci) * plane;
        float* ph = xhat_cache_.ptr() + (bi * c + ci) * plane;
        float* py = y.ptr() + (bi * c + ci) * plane;
        for (std::int64_t p = 0; p < plane; ++p) {
          const float xh = static_cast<float>((px[p] - mean) * inv);
          ph[p] = xh;
          py[p] = g * xh + bt;
        }
      }
      auto& rm = running_mean_.data[static_cast<std::size_t>(ci)];
      auto& rv = running_var_.data[static_cast<std::size_t>(ci)];
      rm = static_cast<float>((1.0 - momentum) * rm + momentum * mean);
      rv = static_cast<float>((1.0 - momentum) * rv + momentum * var);
    }
  } else {
#pragma omp parallel for schedule(static)
    for (std::int64_t ci = 0; ci < c; ++ci) {
      const double mean = running_mean_.data[static_cast<std::size_t>(ci)];
      const double inv =
          1.0 / std::sqrt(static_cast<double>(running_var_.data[static_cast<std::size_t>(ci)]) + eps);
      const float g = gamma_.data[static_cast<std::size_t>(ci)];
      const float bt = beta_.data[static_cast<std::size_t>(ci)];
      for (std::int64_t bi = 0; bi < b; ++bi) {
        const float* px = x.ptr() + (bi * c + ci) * plane;
        float* py = y.ptr() + (bi * c + ci) * plane;
        for (std::int64_t p = 0; p < plane; ++p)
          py[p] = static_cast<float>(g * (px[p] - mean) * inv + bt);
      }
    }
  }
}

void BatchNorm2d::backward(const Tensor& dy, Tensor& dx) {
  const auto b = dy.dim(0), c = dy.dim(1), h = dy.dim(2), w = dy.dim(3);
  const std::int64_t plane = h * w;
  const auto count = static_cast<double>(b * plane);
  dx.resize(dy.shape);

#pragma omp parallel for schedule(static)
  for (std::int64_t ci = 0; ci < c; ++ci) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::int64_t bi = 0; bi < b; ++bi) {
      const float* pd = dy.ptr() + (bi * c + ci) * plane;
      const float* ph = xhat_cache_.ptr() + (bi * c + ci) * plane;
      for (std::int64_t p = 0; p < plane; ++p) {
        sum_dy += pd[p];
        sum_dy_xhat += static_cast<double>(pd[p]) * ph[p];
      }
    }
    gamma_grad_.data[static_cast<std::size_t>(ci)] += static_cast<float>(sum_dy_xhat);
    beta_grad_.data[static_cast<std::size_t>(ci)] += static_cast<float>(sum_dy);

    const double g = gamma_.data[static_cast<std::size_t>(ci)];
    const double inv = inv_std_[static_cast<std::size_t>(ci)];
    const double k = g * inv / count;
    for (std::int64_t bi = 0; bi < b; ++bi) {
      const float* pd = dy.ptr() + (bi * c + ci) * plane;
      const float* ph = xhat_cache_.ptr() + (bi * c + ci) * plane;
      float* px = dx.ptr() + (bi * c + ci) * plane;
      for (std::int64_t p = 0; p < plane; ++p)
        px[p] = static_cast<float>(k * (count * pd[p] - sum_dy - ph[p] * sum_dy_xhat));
    }
  }
}

void BatchNorm2d::collect(std::vector<ParamView>& params) {
  params.push_back({name_ + ".gamma", gamma_.ptr(), gamma_grad_.ptr(), gamma_.numel()});
  params.push_back({name_ + ".beta", beta_.ptr(), beta_grad_.ptr(), beta_.numel()});
}

void BatchNorm2d::collect_buffers(std::vector<BufferView>& buffers) {
  buffers.push_back({name_ + ".running_mean", running_mean_.ptr(), running_mean_.numel()});
  buffers.push_back({name_ + ".running_var", running_var_.ptr(), running_var_.numel()});
}

// ----------------------------------------------------------------- ReLU

void ReLU::forward(const Tensor& x, Tensor& y) {
  y.resize(x.shape);
  const auto n = x.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    y.data[static_cast<std::size_t>(i)] =
        x.data[static_cast<std::size_t>(i)] > 0.0f ? x.data[static_cast<std::size_t>(i)] : 0.0f;
  y_cache_ = y;
}

void ReLU::backward(const Tensor& dy, Tensor& dx) {
  dx.resize(dy.shape);
  const auto n = dy.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    dx.data[static_cast<std::size_t>(i)] =
        y_cache_.data[static_cast<std::size_t>(i)] > 0.0f ? dy.data[static_cast<std::size_t>(i)] : 0.0f;
}

// --------------------------------------------------------------- Linear

Linear::Linear(int in_dim, int out_dim, bool bias, const std::string& name,
               Rng& rng)
    : in_dim_(in_dim), out_dim_(out_dim), has_bias_(bias), name_(name) {
  weight_.resize({out_dim, in_dim});
  wgrad_.resize(weight_.shape);
  he_init(weight_, in_dim, rng);
  bias_.resize({has_bias_ ? out_dim : 0});
  bgrad_.resize(bias_.shape);
  const float bound = 1.0f / std::sqrt(static_cast<float>(in_dim));
  for (auto& v : bias_.data)
    v = static_cast<float>(rng.uniform_range(-bound, bound));
}

void Linear::forward(const Tensor& x, Tensor& y) {
  const auto b = x.dim(0);
  if (x.dim(1) != in_dim_)
    throw std::invalid_argument(name_ + ": expected input dim " +
                                std::to_string(in_dim_) + ", got " +
                                std::to_string(x.dim(1)));
  x_cache_ = x;
  y.resize({b, out_dim_});
  y.mat(b, out_dim_).noalias() =
      x.mat(b, in_dim_) * weight_.mat(out_dim_, in_dim_).transpose();
  if (has_bias_) {
    auto ym = y.mat(b, out_dim_);
    for (std::int64_t i = 0; i < b; ++i)
      for (int j = 0; j < out_dim_; ++j) ym(i, j) += bias_.data[static_cast<std::size_t>(j)];
  }
}

void Linear::backward(const Tensor& dy, Tensor& dx) {
  const auto b = x_cache_.dim(0);
  auto dym = dy.mat(b, out_dim_);
  wgrad_.mat(out_dim_, in_dim_).noalias() +=
      dym.transpose() * x_cache_.mat(b, in_dim_);
  if (has_bias_)
    for (std::int64_t i = 0; i < b; ++i)
      for (int j = 0; j < out_dim_; ++j)
        bgrad_.data[static_cast<std::size_t>(j)] += dym(i, j);
  dx.resize(x_cache_.shape);
  dx.mat(b, in_dim_).noalias() = dym * weight_.mat(out_dim_, in_dim_);
}

void Linear::collect(std::vector<ParamView>& params) {
  params.push_back({name_ + ".weight", weight_.ptr(), wgrad_.ptr(), weight_.numel()});
  if (has_bias_)
    params.push_back({name_ + ".bias", bias_.ptr(), bgrad_.ptr(), bias_.numel()});
}

// -------------------------------------------------------- GlobalAvgPool

void GlobalAvgPool::forward(const Tensor& x, Tensor& y) {
  const auto b = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  x_shape_ = x.shape;
  y.resize({b, c});
  const float inv = 1.0f / static_cast<float>(plane);
  for (std::int64_t i = 0; i < b * c; ++i) {
    const float* px = x.ptr() + i * plane;
    double s = 0.0;
    for (std::int64_t p = 0; p < plane; ++p) s += px[p];
    y.data[static_cast<std::size_t>(i)] = static_cast<float>(s) * inv;
  }
}

void GlobalAvgPool::backward(const Tensor& dy, Tensor& dx) {
  const auto plane = x_shape_[2] * x_shape_[3];
  dx.resize(x_shape_);
  const float inv = 1.0f / static_cast<float>(plane);
  const auto bc = x_shape_[0] * x_shape_[1];
  for (std::int64_t i = 0; i < bc; ++i) {
    const float g = dy.data[static_cast<std::size_t>(i)] * inv;
    float* px = dx.ptr() + i * plane;
    for (std::int64_t p = 0; p < plane; ++p) px[p] = g;
  }
}

// -------------------------------------------------------- RowNormalize

void RowNormalize::forward(const Tensor& x, Tensor& y) {
  const auto rows = x.dim(0), cols = x.dim(1);
  y.resize(x.shape);
  norms_.resize(static_cast<std::size_t>(rows));
  for (std::int64_t i = 0; i < rows; ++i) {
    const float* px = x.ptr() + i * cols;
    double s = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) s += static_cast<double>(px[j]) * px[j];
    const double norm = std::sqrt(s);
    if (!(norm > 1e-20))
      throw std::runtime_error("RowNormalize: zero row " + std::to_string(i));
    norms_[static_cast<std::size_t>(i)] = static_cast<float>(norm);
    float* py = y.ptr() + i * cols;
    const float inv = static_cast<float>(1.0 / norm);
    for (std::int64_t j = 0; j < cols; ++j) py[j] = px[j] * inv;
  }
  y_cache_ = y;
}

void RowNormalize::backward(const Tensor& dy, Tensor& dx) {
  const auto rows = dy.dim(0), cols = dy.dim(1);
  dx.resize(dy.shape);
  for (std::int64_t i = 0; i < rows; ++i) {
    const float* pd = dy.ptr() + i * cols;
    const float* pu = y_cache_.ptr() + i * cols;
    float* px = dx.ptr() + i * cols;
    double along = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) along += static_cast<double>(pd[j]) * pu[j];
    const double inv = 1.0 / norms_[static_cast<std::size_t>(i)];
    for (std::int64_t j = 0; j < cols; ++j)
      px[j] = static_cast<float>((pd[j] - along * pu[j]) * inv);
  }
}

}  // namespace cwcl::nn
