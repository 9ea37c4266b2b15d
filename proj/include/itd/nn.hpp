#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "itd/error.hpp"
#include "itd/rng.hpp"

// Minimal CPU tensor/layer stack: conv (im2col + GEMM), batch norm, ReLU,
// pre-activation residual blocks, global average pooling, dense layers, Adam,
// softmax cross-entropy and MSE losses. Templated on the scalar so training
// runs in float while gradient checks run the identical graph in double.

namespace itd::nn {

template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {}

  std::size_t size() const { return v.size(); }
  std::size_t feature_size() const { return static_cast<std::size_t>(c) * h * w; }

  T* sample(int i) { return v.data() + static_cast<std::size_t>(i) * feature_size(); }
  const T* sample(int i) const { return v.data() + static_cast<std::size_t>(i) * feature_size(); }
};

template <typename T>
struct ParamRef {
  std::string name;
  T* value = nullptr;
  T* grad = nullptr;  // null for non-trainable buffers
  std::size_t size = 0;
  std::vector<int> shape;
  bool trainable = true;
};

namespace detail {

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::size_t>(i) * n;
    const T* arow = a + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      if (av == T(0)) continue;
      const T* brow = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T  (dot over the contiguous K axis)
template <typename T>
void gemm_abt_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    T* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + static_cast<std::size_t>(j) * k;
      T acc = T(0);
      for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] += acc;
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_atb_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int kk = 0; kk < k; ++kk) {
    const T* arow = a + static_cast<std::size_t>(kk) * m;
    const T* brow = b + static_cast<std::size_t>(kk) * n;
    for (int i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* crow = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, bool training) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual void collect_params(std::vector<ParamRef<T>>& out) {}
  virtual void stats(int& convs, int& skips) const {}
  const std::string& name() const { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }

 protected:
  std::string name_;
};

template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, bool bias, Rng& rng)
      : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad),
        has_bias_(bias) {
    const std::size_t wsize = static_cast<std::size_t>(out_ch) * in_ch * kernel * kernel;
    weight_.resize(wsize);
    wgrad_.assign(wsize, T(0));
    const double std_dev = std::sqrt(2.0 / (static_cast<double>(in_ch) * kernel * kernel));
    for (T& w : weight_) w = static_cast<T>(rng.normal(0.0, std_dev));
    if (has_bias_) {
      bias_.assign(static_cast<std::size_t>(out_ch), T(0));
      bgrad_.assign(static_cast<std::size_t>(out_ch), T(0));
    }
  }

  int out_side(int in_side) const { return (in_side + 2 * pad_ - kernel_) / stride_ + 1; }

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    in_shape_ = {x.n, x.c, x.h, x.w};
    const int oh = out_side(x.h);
    const int ow = out_side(x.w);
    const int patch = in_ch_ * kernel_ * kernel_;
    const int area = oh * ow;
    Tensor<T> y(x.n, out_ch_, oh, ow);
    cols_.assign(static_cast<std::size_t>(x.n) * patch * area, T(0));
    for (int i = 0; i < x.n; ++i) {
      T* col = cols_.data() + static_cast<std::size_t>(i) * patch * area;
      im2col(x.sample(i), x.c, x.h, x.w, col, oh, ow);
      T* out = y.sample(i);
      detail::gemm_acc(weight_.data(), col, out, out_ch_, patch, area);
      if (has_bias_) {
        for (int oc = 0; oc < out_ch_; ++oc) {
          T* row = out + static_cast<std::size_t>(oc) * area;
          for (int p = 0; p < area; ++p) row[p] += bias_[oc];
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    const auto [n, c, h, w] = in_shape_;
    const int oh = gy.h, ow = gy.w;
    const int patch = in_ch_ * kernel_ * kernel_;
    const int area = oh * ow;
    Tensor<T> gx(n, c, h, w);
    std::vector<T> gcol(static_cast<std::size_t>(patch) * area);
    for (int i = 0; i < n; ++i) {
      const T* g = gy.sample(i);
      const T* col = cols_.data() + static_cast<std::size_t>(i) * patch * area;
      // dW += dY * col^T
      detail::gemm_abt_acc(g, col, wgrad_.data(), out_ch_, area, patch);
      if (has_bias_) {
        for (int oc = 0; oc < out_ch_; ++oc) {
          const T* row = g + static_cast<std::size_t>(oc) * area;
          T acc = T(0);
          for (int p = 0; p < area; ++p) acc += row[p];
          bgrad_[oc] += acc;
        }
      }
      // dcol = W^T * dY, then scatter back
      std::fill(gcol.begin(), gcol.end(), T(0));
      detail::gemm_atb_acc(weight_.data(), g, gcol.data(), patch, out_ch_, area);
      col2im(gcol.data(), c, h, w, gx.sample(i), oh, ow);
    }
    return gx;
  }

  void collect_params(std::vector<ParamRef<T>>& out) override {
    out.push_back({this->name_ + ".weight", weight_.data(), wgrad_.data(), weight_.size(),
                   {out_ch_, in_ch_, kernel_, kernel_}, true});
    if (has_bias_) {
      out.push_back({this->name_ + ".bias", bias_.data(), bgrad_.data(), bias_.size(),
                     {out_ch_}, true});
    }
  }

  void stats(int& convs, int&) const override {
    if (kernel_ > 1) ++convs;  // 1x1 projections belong to their skip connection
  }

 private:
  void im2col(const T* x, int c, int h, int w, T* col, int oh, int ow) const {
    const int area = oh * ow;
    for (int ic = 0; ic < c; ++ic) {
      for (int ky = 0; ky < kernel_; ++ky) {
        for (int kx = 0; kx < kernel_; ++kx) {
          T* dst = col + (static_cast<std::size_t>(ic) * kernel_ * kernel_ +
                          static_cast<std::size_t>(ky) * kernel_ + kx) *
                             area;
          for (int oy = 0; oy < oh; ++oy) {
            const int sy = oy * stride_ - pad_ + ky;
            if (sy < 0 || sy >= h) continue;  // zero padded
            const T* src = x + (static_cast<std::size_t>(ic) * h + sy) * w;
            T* drow = dst + static_cast<std::size_t>(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) {
              const int sx = ox * stride_ - pad_ + kx;
              if (sx >= 0 && sx < w) drow[ox] = src[sx];
            }
          }
        }
      }
    }
  }

  void col2im(const T* col, int c, int h, int w, T* x, int oh, int ow) const {
    const int area = oh * ow;
    for (int ic = 0; ic < c; ++ic) {
      for (int ky = 0; ky < kernel_; ++ky) {
        for (int kx = 0; kx < kernel_; ++kx) {
          const T* src = col + (static_cast<std::size_t>(ic) * kernel_ * kernel_ +
                                static_cast<std::size_t>(ky) * kernel_ + kx) *
                                   area;
          for (int oy = 0; oy < oh; ++oy) {
            const int sy = oy * stride_ - pad_ + ky;
            if (sy < 0 || sy >= h) continue;
            T* dst = x + (static_cast<std::size_t>(ic) * h + sy) * w;
            const T* srow = src + static_cast<std::size_t>(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) {
              const int sx = ox * stride_ - pad_ + kx;
              if (sx >= 0 && sx < w) dst[sx] += srow[ox];
            }
          }
        }
      }
    }
  }

  int in_ch_, out_ch_, kernel_, stride_, pad_;
  bool has_bias_;
  std::vector<T> weight_, wgrad_, bias_, bgrad_;
  std::vector<T> cols_;
  std::array<int, 4> in_shape_{};
};

template <typename T>
class BatchNorm2d : public Layer<T> {
 public:
  BatchNorm2d(int channels, double eps, double momentum)
      : channels_(channels), eps_(eps), momentum_(momentum) {
    gamma_.assign(channels, T(1));
    beta_.assign(channels, T(0));
    ggrad_.assign(channels, T(0));
    bgrad_.assign(channels, T(0));
    running_mean_.assign(channels, T(0));
    running_var_.assign(channels, T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) override {
    const int per_channel = x.n * x.h * x.w;
    Tensor<T> y(x.n, x.c, x.h, x.w);
    xhat_ = Tensor<T>(x.n, x.c, x.h, x.w);
    invstd_.assign(channels_, T(0));
    m_ = per_channel;
    const int hw = x.h * x.w;

    for (int ch = 0; ch < channels_; ++ch) {
      T mean, var;
      if (training) {
        T sum = T(0), sq = T(0);
        for (int i = 0; i < x.n; ++i) {
          const T* src = x.sample(i) + static_cast<std::size_t>(ch) * hw;
          for (int p = 0; p < hw; ++p) {
            sum += src[p];
            sq += src[p] * src[p];
          }
        }
        mean = sum / static_cast<T>(per_channel);
        var = sq / static_cast<T>(per_channel) - mean * mean;
        if (var < T(0)) var = T(0);
        running_mean_[ch] = static_cast<T>(momentum_) * running_mean_[ch] +
                            static_cast<T>(1.0 - momentum_) * mean;
        running_var_[ch] = static_cast<T>(momentum_) * running_var_[ch] +
                           static_cast<T>(1.0 - momentum_) * var;
      } else {
        mean = running_mean_[ch];
        var = running_var_[ch];
      }
      const T inv = T(1) / std::sqrt(var + static_cast<T>(eps_));
      invstd_[ch] = inv;
      for (int i = 0; i < x.n; ++i) {
        const T* src = x.sample(i) + static_cast<std::size_t>(ch) * hw;
        T* xh = xhat_.sample(i) + static_cast<std::size_t>(ch) * hw;
        T* dst = y.sample(i) + static_cast<std::size_t>(ch) * hw;
        for (int p = 0; p < hw; ++p) {
          xh[p] = (src[p] - mean) * inv;
          dst[p] = gamma_[ch] * xh[p] + beta_[ch];
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx(gy.n, gy.c, gy.h, gy.w);
    const int hw = gy.h * gy.w;
    for (int ch = 0; ch < channels_; ++ch) {
      T sum_dy = T(0), sum_dy_xhat = T(0);
      for (int i = 0; i < gy.n; ++i) {
        const T* g = gy.sample(i) + static_cast<std::size_t>(ch) * hw;
        const T* xh = xhat_.sample(i) + static_cast<std::size_t>(ch) * hw;
        for (int p = 0; p < hw; ++p) {
          sum_dy += g[p];
          sum_dy_xhat += g[p] * xh[p];
        }
      }
      ggrad_[ch] += sum_dy_xhat;
      bgrad_[ch] += sum_dy;
      const T scale = gamma_[ch] * invstd_[ch] / static_cast<T>(m_);
      for (int i = 0; i < gy.n; ++i) {
        const T* g = gy.sample(i) + static_cast<std::size_t>(ch) * hw;
        const T* xh = xhat_.sample(i) + static_cast<std::size_t>(ch) * hw;
        T* out = gx.sample(i) + static_cast<std::size_t>(ch) * hw;
        for (int p = 0; p < hw; ++p) {
          out[p] = scale * (static_cast<T>(m_) * g[p] - sum_dy - xh[p] * sum_dy_xhat);
        }
      }
    }
    return gx;
  }

  void collect_params(std::vector<ParamRef<T>>& out) override {
    out.push_back({this->name_ + ".gamma", gamma_.data(), ggrad_.data(), gamma_.size(),
                   {channels_}, true});
    out.push_back({this->name_ + ".beta", beta_.data(), bgrad_.data(), beta_.size(),
                   {channels_}, true});
    out.push_back({this->name_ + ".running_mean", running_mean_.data(), nullptr,
                   running_mean_.size(), {channels_}, false});
    out.push_back({this->name_ + ".running_var", running_var_.data(), nullptr,
                   running_var_.size(), {channels_}, false});
  }

 private:
  int channels_;
  double eps_, momentum_;
  std::vector<T> gamma_, beta_, ggrad_, bgrad_, running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<T> invstd_;
  int m_ = 1;
};

template <typename T>
class ReLU : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool) override {
    Tensor<T> y = x;
    mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (y.v[i] > T(0)) {
        mask_[i] = 1;
      } else {
        y.v[i] = T(0);
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (!mask_[i]) gx.v[i] = T(0);
    }
    return gx;
  }

 private:
  std::vector<unsigned char> mask_;
};

template <typename T>
class LeakyReLU : public Layer<T> {
 public:
  explicit LeakyReLU(double slope = 0.01) : slope_(static_cast<T>(slope)) {}

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    Tensor<T> y = x;
    mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (y.v[i] > T(0)) {
        mask_[i] = 1;
      } else {
        y.v[i] *= slope_;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (!mask_[i]) gx.v[i] *= slope_;
    }
    return gx;
  }

 private:
  T slope_;
  std::vector<unsigned char> mask_;
};

// Averages over a g x g grid of equal regions (input side divisible by g).
template <typename T>
class GridAvgPool : public Layer<T> {
 public:
  explicit GridAvgPool(int grid) : grid_(grid) {}

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    in_h_ = x.h;
    in_w_ = x.w;
    const int cell_h = x.h / grid_;
    const int cell_w = x.w / grid_;
    Tensor<T> y(x.n, x.c, grid_, grid_);
    for (int i = 0; i < x.n; ++i) {
      for (int ch = 0; ch < x.c; ++ch) {
        const T* src = x.sample(i) + static_cast<std::size_t>(ch) * x.h * x.w;
        T* dst = y.sample(i) + static_cast<std::size_t>(ch) * grid_ * grid_;
        for (int gy = 0; gy < grid_; ++gy) {
          for (int gx = 0; gx < grid_; ++gx) {
            T acc = T(0);
            for (int yy = gy * cell_h; yy < (gy + 1) * cell_h; ++yy) {
              for (int xx = gx * cell_w; xx < (gx + 1) * cell_w; ++xx) {
                acc += src[static_cast<std::size_t>(yy) * x.w + xx];
              }
            }
            dst[static_cast<std::size_t>(gy) * grid_ + gx] =
                acc / static_cast<T>(cell_h * cell_w);
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    const int cell_h = in_h_ / grid_;
    const int cell_w = in_w_ / grid_;
    Tensor<T> gx(gy.n, gy.c, in_h_, in_w_);
    for (int i = 0; i < gy.n; ++i) {
      for (int ch = 0; ch < gy.c; ++ch) {
        const T* g = gy.sample(i) + static_cast<std::size_t>(ch) * grid_ * grid_;
        T* dst = gx.sample(i) + static_cast<std::size_t>(ch) * in_h_ * in_w_;
        for (int gy2 = 0; gy2 < grid_; ++gy2) {
          for (int gx2 = 0; gx2 < grid_; ++gx2) {
            const T v = g[static_cast<std::size_t>(gy2) * grid_ + gx2] /
                        static_cast<T>(cell_h * cell_w);
            for (int yy = gy2 * cell_h; yy < (gy2 + 1) * cell_h; ++yy) {
              for (int xx = gx2 * cell_w; xx < (gx2 + 1) * cell_w; ++xx) {
                dst[static_cast<std::size_t>(yy) * in_w_ + xx] = v;
              }
            }
          }
        }
      }
    }
    return gx;
  }

 private:
  int grid_;
  int in_h_ = 0, in_w_ = 0;
};

template <typename T>
class GlobalAvgPool : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool) override {
    in_h_ = x.h;
    in_w_ = x.w;
    Tensor<T> y(x.n, x.c, 1, 1);
    const int hw = x.h * x.w;
    for (int i = 0; i < x.n; ++i) {
      const T* src = x.sample(i);
      T* dst = y.sample(i);
      for (int ch = 0; ch < x.c; ++ch) {
        T acc = T(0);
        const T* row = src + static_cast<std::size_t>(ch) * hw;
        for (int p = 0; p < hw; ++p) acc += row[p];
        dst[ch] = acc / static_cast<T>(hw);
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> gx(gy.n, gy.c, in_h_, in_w_);
    const int hw = in_h_ * in_w_;
    for (int i = 0; i < gy.n; ++i) {
      const T* g = gy.sample(i);
      T* dst = gx.sample(i);
      for (int ch = 0; ch < gy.c; ++ch) {
        const T v = g[ch] / static_cast<T>(hw);
        T* row = dst + static_cast<std::size_t>(ch) * hw;
        for (int p = 0; p < hw; ++p) row[p] = v;
      }
    }
    return gx;
  }

 private:
  int in_h_ = 1, in_w_ = 1;
};

template <typename T>
class Dense : public Layer<T> {
 public:
  Dense(int in_features, int out_features, Rng& rng)
      : in_(in_features), out_(out_features) {
    weight_.resize(static_cast<std::size_t>(out_) * in_);
    wgrad_.assign(weight_.size(), T(0));
    bias_.assign(static_cast<std::size_t>(out_), T(0));
    bgrad_.assign(bias_.size(), T(0));
    const double std_dev = std::sqrt(2.0 / static_cast<double>(in_));
    for (T& w : weight_) w = static_cast<T>(rng.normal(0.0, std_dev));
  }

  Tensor<T> forward(const Tensor<T>& x, bool) override {
    if (static_cast<int>(x.feature_size()) != in_) {
      fail(ErrorKind::ShapeMismatch, "dense layer expects " + std::to_string(in_) +
                                         " features, got " + std::to_string(x.feature_size()));
    }
    in_shape_ = {x.n, x.c, x.h, x.w};
    x_ = x;
    Tensor<T> y(x.n, out_, 1, 1);
    for (int i = 0; i < x.n; ++i) {
      const T* src = x.sample(i);
      T* dst = y.sample(i);
      for (int o = 0; o < out_; ++o) {
        const T* wrow = weight_.data() + static_cast<std::size_t>(o) * in_;
        T acc = bias_[o];
        for (int j = 0; j < in_; ++j) acc += wrow[j] * src[j];
        dst[o] = acc;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    const auto [n, c, h, w] = in_shape_;
    Tensor<T> gx(n, c, h, w);
    for (int i = 0; i < n; ++i) {
      const T* g = gy.sample(i);
      const T* src = x_.sample(i);
      T* dst = gx.sample(i);
      for (int o = 0; o < out_; ++o) {
        const T gv = g[o];
        bgrad_[o] += gv;
        if (gv == T(0)) continue;
        T* wg = wgrad_.data() + static_cast<std::size_t>(o) * in_;
        const T* wrow = weight_.data() + static_cast<std::size_t>(o) * in_;
        for (int j = 0; j < in_; ++j) {
          wg[j] += gv * src[j];
          dst[j] += gv * wrow[j];
        }
      }
    }
    return gx;
  }

  void collect_params(std::vector<ParamRef<T>>& out) override {
    out.push_back({this->name_ + ".weight", weight_.data(), wgrad_.data(), weight_.size(),
                   {out_, in_}, true});
    out.push_back({this->name_ + ".bias", bias_.data(), bgrad_.data(), bias_.size(),
                   {out_}, true});
  }

 private:
  int in_, out_;
  std::vector<T> weight_, wgrad_, bias_, bgrad_;
  Tensor<T> x_;
  std::array<int, 4> in_shape_{};
};

// Pre-activation basic block: x -> bn1 -> relu -> conv3x3(stride) -> bn2 ->
// relu -> conv3x3 -> (+ skip). The skip projects with a 1x1 conv from the
// shared activation whenever the shape changes.
template <typename T>
class PreactResidualBlock : public Layer<T> {
 public:
  PreactResidualBlock(int in_ch, int out_ch, int stride, double bn_eps, double bn_momentum,
                      Rng& rng)
      : needs_proj_(stride != 1 || in_ch != out_ch) {
    bn1_ = std::make_unique<BatchNorm2d<T>>(in_ch, bn_eps, bn_momentum);
    conv1_ = std::make_unique<Conv2d<T>>(in_ch, out_ch, 3, stride, 1, false, rng);
    bn2_ = std::make_unique<BatchNorm2d<T>>(out_ch, bn_eps, bn_momentum);
    conv2_ = std::make_unique<Conv2d<T>>(out_ch, out_ch, 3, 1, 1, false, rng);
    if (needs_proj_) {
      proj_ = std::make_unique<Conv2d<T>>(in_ch, out_ch, 1, stride, 0, false, rng);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) override {
    Tensor<T> a = relu1_.forward(bn1_->forward(x, training), training);
    Tensor<T> y = conv1_->forward(a, training);
    y = relu2_.forward(bn2_->forward(y, training), training);
    y = conv2_->forward(y, training);
    Tensor<T> skip = needs_proj_ ? proj_->forward(a, training) : x;
    for (std::size_t i = 0; i < y.size(); ++i) y.v[i] += skip.v[i];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) override {
    Tensor<T> g_main = conv2_->backward(gy);
    g_main = bn2_->backward(relu2_.backward(g_main));
    Tensor<T> ga = conv1_->backward(g_main);
    if (needs_proj_) {
      Tensor<T> gp = proj_->backward(gy);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.v[i] += gp.v[i];
    }
    Tensor<T> gx = bn1_->backward(relu1_.backward(ga));
    if (!needs_proj_) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx.v[i] += gy.v[i];
    }
    return gx;
  }

  void collect_params(std::vector<ParamRef<T>>& out) override {
    bn1_->set_name(this->name_ + ".bn1");
    conv1_->set_name(this->name_ + ".conv1");
    bn2_->set_name(this->name_ + ".bn2");
    conv2_->set_name(this->name_ + ".conv2");
    bn1_->collect_params(out);
    conv1_->collect_params(out);
    bn2_->collect_params(out);
    conv2_->collect_params(out);
    if (needs_proj_) {
      proj_->set_name(this->name_ + ".proj");
      proj_->collect_params(out);
    }
  }

  void stats(int& convs, int& skips) const override {
    convs += 2;
    skips += 1;
  }

 private:
  bool needs_proj_;
  std::unique_ptr<BatchNorm2d<T>> bn1_, bn2_;
  std::unique_ptr<Conv2d<T>> conv1_, conv2_, proj_;
  ReLU<T> relu1_, relu2_;
};

template <typename T>
class Net {
 public:
  std::vector<std::unique_ptr<Layer<T>>> layers;

  Tensor<T> forward(Tensor<T> x, bool training) {
    for (auto& layer : layers) x = layer->forward(x, training);
    return x;
  }

  Tensor<T> backward(Tensor<T> g) {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (auto& layer : layers) layer->collect_params(out);
    return out;
  }

  void zero_grad() {
    for (auto& p : params()) {
      if (p.grad) std::fill(p.grad, p.grad + p.size, T(0));
    }
  }

  void stats(int& convs, int& skips) const {
    convs = 0;
    skips = 0;
    for (const auto& layer : layers) layer->stats(convs, skips);
  }
};

template <typename T>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps, double weight_decay = 0.0)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  void step(std::vector<ParamRef<T>>& params) {
    std::size_t total = 0;
    for (const auto& p : params) {
      if (p.trainable) total += p.size;
    }
    if (m_.size() != total) {
      m_.assign(total, 0.0);
      v_.assign(total, 0.0);
      t_ = 0;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    std::size_t offset = 0;
    for (auto& p : params) {
      if (!p.trainable) continue;
      for (std::size_t i = 0; i < p.size; ++i) {
        double g = static_cast<double>(p.grad[i]);
        if (weight_decay_ != 0.0) g += weight_decay_ * static_cast<double>(p.value[i]);
        double& m = m_[offset + i];
        double& v = v_[offset + i];
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g * g;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        p.value[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
      offset += p.size;
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
};

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;
};

template <typename T>
std::vector<double> softmax_row(const T* logits, int k) {
  double mx = static_cast<double>(logits[0]);
  for (int i = 1; i < k; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  std::vector<double> p(static_cast<std::size_t>(k));
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    p[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += p[static_cast<std::size_t>(i)];
  }
  for (double& x : p) x /= sum;
  return p;
}

// Mean cross-entropy over the batch; grad flows back through the softmax.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  const int k = static_cast<int>(logits.feature_size());
  LossResult<T> res;
  res.grad = Tensor<T>(logits.n, logits.c, logits.h, logits.w);
  double total = 0.0;
  for (int i = 0; i < logits.n; ++i) {
    const auto p = softmax_row(logits.sample(i), k);
    const int label = labels[static_cast<std::size_t>(i)];
    total += -std::log(std::max(p[static_cast<std::size_t>(label)], 1e-300));
    T* g = res.grad.sample(i);
    for (int j = 0; j < k; ++j) {
      g[j] = static_cast<T>((p[static_cast<std::size_t>(j)] - (j == label ? 1.0 : 0.0)) /
                            logits.n);
    }
  }
  res.loss = total / logits.n;
  return res;
}

// Mean squared error over every element.
template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  LossResult<T> res;
  res.grad = Tensor<T>(pred.n, pred.c, pred.h, pred.w);
  double total = 0.0;
  const double scale = 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.v[i]) - static_cast<double>(target.v[i]);
    total += d * d;
    res.grad.v[i] = static_cast<T>(scale * d);
  }
  res.loss = total / static_cast<double>(pred.size());
  return res;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Central finite differences against the analytic gradients on a random
// subset of trainable parameters. Run with T = double.
template <typename T>
GradCheckResult gradient_check(Net<T>& net, const Tensor<T>& input,
                               const std::function<LossResult<T>(const Tensor<T>&)>& loss_fn,
                               std::size_t max_params, double step, std::uint64_t seed) {
  auto params = net.params();
  net.zero_grad();
  LossResult<T> base = loss_fn(net.forward(input, true));
  net.backward(base.grad);

  struct Slot {
    std::size_t param;
    std::size_t elem;
  };
  std::vector<Slot> slots;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    if (!params[pi].trainable) continue;
    for (std::size_t e = 0; e < params[pi].size; ++e) slots.push_back({pi, e});
  }
  Rng rng(seed);
  rng.shuffle(slots);
  if (slots.size() > max_params) slots.resize(max_params);

  GradCheckResult result;
  result.checked = slots.size();
  for (const Slot& s : slots) {
    auto& p = params[s.param];
    const double analytic = static_cast<double>(p.grad[s.elem]);
    const T saved = p.value[s.elem];
    p.value[s.elem] = saved + static_cast<T>(step);
    const double up = loss_fn(net.forward(input, true)).loss;
    p.value[s.elem] = saved - static_cast<T>(step);
    const double down = loss_fn(net.forward(input, true)).loss;
    p.value[s.elem] = saved;
    const double numeric = (up - down) / (2.0 * step);
    double rel = 0.0;
    const double mag = std::max(std::abs(analytic), std::abs(numeric));
    if (mag >= 1e-7) rel = std::abs(analytic - numeric) / mag;
    result.max_rel_error = std::max(result.max_rel_error, rel);
  }
  return result;
}

}  // namespace itd::nn
