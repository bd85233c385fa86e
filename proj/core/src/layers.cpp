#include "oodmark/layers.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace oodmark {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

namespace {
void check4(const Tensor& x, const char* who) {
  if (x.ndim() != 4) throw std::invalid_argument(std::string(who) + ": expected NCHW input");
}
}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad, bool bias)
    : in_ch_(in_ch), out_ch_(out_ch), k_(ksize), stride_(stride), pad_(pad), has_bias_(bias) {
  weight = Tensor({out_ch, in_ch, ksize, ksize});
  wgrad = Tensor({out_ch, in_ch, ksize, ksize});
  if (has_bias_) {
    this->bias = Tensor({out_ch});
    bgrad = Tensor({out_ch});
  }
}

void Conv2d::init(Rng& rng) {
  const double fan_in = static_cast<double>(in_ch_) * k_ * k_;
  const double std = std::sqrt(2.0 / fan_in);
  for (auto& v : weight.data) v = static_cast<float>(rng.normal(0.0, std));
  if (has_bias_) bias.fill(0.0f);
}

void Conv2d::im2col(const float* img, float* cols, int h, int w, int oh, int ow) const {
  const int64_t ohow = static_cast<int64_t>(oh) * ow;
  for (int ic = 0; ic < in_ch_; ++ic) {
    const float* plane = img + static_cast<int64_t>(ic) * h * w;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        float* row = cols + ((static_cast<int64_t>(ic) * k_ + ky) * k_ + kx) * ohow;
        for (int oy = 0; oy < oh; ++oy) {
          const int y = oy * stride_ - pad_ + ky;
          if (y < 0 || y >= h) {
            std::fill(row + static_cast<int64_t>(oy) * ow, row + (static_cast<int64_t>(oy) + 1) * ow, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<int64_t>(y) * w;
          float* dst = row + static_cast<int64_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int x = ox * stride_ - pad_ + kx;
            dst[ox] = (x >= 0 && x < w) ? src[x] : 0.0f;
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const float* cols, float* img, int h, int w, int oh, int ow) const {
  const int64_t ohow = static_cast<int64_t>(oh) * ow;
  for (int ic = 0; ic < in_ch_; ++ic) {
    float* plane = img + static_cast<int64_t>(ic) * h * w;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        const float* row = cols + ((static_cast<int64_t>(ic) * k_ + ky) * k_ + kx) * ohow;
        for (int oy = 0; oy < oh; ++oy) {
          const int y = oy * stride_ - pad_ + ky;
          if (y < 0 || y >= h) continue;
          float* dst = plane + static_cast<int64_t>(y) * w;
          const float* src = row + static_cast<int64_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int x = ox * stride_ - pad_ + kx;
            if (x >= 0 && x < w) dst[x] += src[ox];
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x, bool) {
  check4(x, "Conv2d");
  if (x.dim(1) != in_ch_) throw std::invalid_argument("Conv2d: channel mismatch");
  input_ = x;
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int oh = (h + 2 * pad_ - k_) / stride_ + 1;
  const int ow = (w + 2 * pad_ - k_) / stride_ + 1;
  const int ickk = in_ch_ * k_ * k_;
  const int64_t ohow = static_cast<int64_t>(oh) * ow;

  Tensor out({n, out_ch_, oh, ow});
  std::vector<float> cols(static_cast<size_t>(ickk) * ohow);
  CMapMat W(weight.ptr(), out_ch_, ickk);
  for (int i = 0; i < n; ++i) {
    im2col(x.ptr() + static_cast<int64_t>(i) * in_ch_ * h * w, cols.data(), h, w, oh, ow);
    CMapMat C(cols.data(), ickk, ohow);
    MapMat O(out.ptr() + static_cast<int64_t>(i) * out_ch_ * ohow, out_ch_, ohow);
    O.noalias() = W * C;
    if (has_bias_)
      for (int oc = 0; oc < out_ch_; ++oc) O.row(oc).array() += bias[oc];
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& dy) {
  const int n = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
  const int oh = dy.dim(2), ow = dy.dim(3);
  const int ickk = in_ch_ * k_ * k_;
  const int64_t ohow = static_cast<int64_t>(oh) * ow;

  Tensor dx(input_.shape);
  std::vector<float> cols(static_cast<size_t>(ickk) * ohow);
  std::vector<float> dcols(static_cast<size_t>(ickk) * ohow);
  CMapMat W(weight.ptr(), out_ch_, ickk);
  MapMat dW(wgrad.ptr(), out_ch_, ickk);
  for (int i = 0; i < n; ++i) {
    im2col(input_.ptr() + static_cast<int64_t>(i) * in_ch_ * h * w, cols.data(), h, w, oh, ow);
    CMapMat C(cols.data(), ickk, ohow);
    CMapMat dY(dy.ptr() + static_cast<int64_t>(i) * out_ch_ * ohow, out_ch_, ohow);
    dW.noalias() += dY * C.transpose();
    MapMat dC(dcols.data(), ickk, ohow);
    dC.noalias() = W.transpose() * dY;
    col2im(dcols.data(), dx.ptr() + static_cast<int64_t>(i) * in_ch_ * h * w, h, w, oh, ow);
    if (has_bias_)
      for (int oc = 0; oc < out_ch_; ++oc) bgrad[oc] += dY.row(oc).sum();
  }
  return dx;
}

void Conv2d::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &wgrad, ParamKind::conv, true});
  if (has_bias_) out.push_back({prefix + ".bias", &bias, &bgrad, ParamKind::conv, false});
}

// ---------------------------------------------------------------- Linear

Linear::Linear(int in_f, int out_f) : in_f_(in_f), out_f_(out_f) {
  weight = Tensor({out_f, in_f});
  wgrad = Tensor({out_f, in_f});
  bias = Tensor({out_f});
  bgrad = Tensor({out_f});
}

void Linear::init(Rng& rng) {
  const double std = std::sqrt(2.0 / in_f_);
  for (auto& v : weight.data) v = static_cast<float>(rng.normal(0.0, std));
  bias.fill(0.0f);
}

Tensor Linear::forward(const Tensor& x, bool) {
  if (x.ndim() != 2 || x.dim(1) != in_f_)
    throw std::invalid_argument("Linear: expected {N," + std::to_string(in_f_) + "} input, got " +
                                x.shape_str());
  input_ = x;
  const int n = x.dim(0);
  Tensor out({n, out_f_});
  CMapMat X(x.ptr(), n, in_f_);
  CMapMat W(weight.ptr(), out_f_, in_f_);
  MapMat O(out.ptr(), n, out_f_);
  O.noalias() = X * W.transpose();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < out_f_; ++j) O(i, j) += bias[j];
  return out;
}

Tensor Linear::backward(const Tensor& dy) {
  const int n = input_.dim(0);
  CMapMat X(input_.ptr(), n, in_f_);
  CMapMat dY(dy.ptr(), n, out_f_);
  MapMat dW(wgrad.ptr(), out_f_, in_f_);
  dW.noalias() += dY.transpose() * X;
  for (int j = 0; j < out_f_; ++j) bgrad[j] += dY.col(j).sum();
  Tensor dx({n, in_f_});
  MapMat dX(dx.ptr(), n, in_f_);
  CMapMat W(weight.ptr(), out_f_, in_f_);
  dX.noalias() = dY * W;
  return dx;
}

void Linear::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &wgrad, ParamKind::linear, true});
  out.push_back({prefix + ".bias", &bias, &bgrad, ParamKind::linear, false});
}

// ---------------------------------------------------------------- ReLU

Tensor ReLU::forward(const Tensor& x, bool) {
  input_ = x;
  Tensor out = x;
  for (auto& v : out.data) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor ReLU::backward(const Tensor& dy) {
  Tensor dx = dy;
  for (size_t i = 0; i < dx.data.size(); ++i)
    if (input_.data[i] <= 0.0f) dx.data[i] = 0.0f;
  return dx;
}

// ---------------------------------------------------------------- MaxPool2

Tensor MaxPool2::forward(const Tensor& x, bool) {
  check4(x, "MaxPool2");
  shape_ = x.shape;
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h / 2, ow = w / 2;
  Tensor out({n, c, oh, ow});
  argmax_.assign(out.data.size(), 0);
  for (int i = 0; i < n * c; ++i) {
    const float* plane = x.ptr() + static_cast<int64_t>(i) * h * w;
    float* oplane = out.ptr() + static_cast<int64_t>(i) * oh * ow;
    int64_t* aplane = argmax_.data() + static_cast<int64_t>(i) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        int64_t best = static_cast<int64_t>(2 * oy) * w + 2 * ox;
        float bv = plane[best];
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int64_t idx = static_cast<int64_t>(2 * oy + dy) * w + 2 * ox + dx;
            if (plane[idx] > bv) { bv = plane[idx]; best = idx; }
          }
        oplane[static_cast<int64_t>(oy) * ow + ox] = bv;
        aplane[static_cast<int64_t>(oy) * ow + ox] = best;
      }
    }
  }
  return out;
}

Tensor MaxPool2::backward(const Tensor& dy) {
  const int n = shape_[0], c = shape_[1], h = shape_[2], w = shape_[3];
  const int oh = h / 2, ow = w / 2;
  Tensor dx({n, c, h, w});
  for (int i = 0; i < n * c; ++i) {
    float* plane = dx.ptr() + static_cast<int64_t>(i) * h * w;
    const float* dplane = dy.ptr() + static_cast<int64_t>(i) * oh * ow;
    const int64_t* aplane = argmax_.data() + static_cast<int64_t>(i) * oh * ow;
    for (int64_t j = 0; j < static_cast<int64_t>(oh) * ow; ++j) plane[aplane[j]] += dplane[j];
  }
  return dx;
}

// ---------------------------------------------------------------- GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& x, bool) {
  check4(x, "GlobalAvgPool");
  shape_ = x.shape;
  const int n = x.dim(0), c = x.dim(1);
  const int64_t plane = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  Tensor out({n, c});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const float* p = x.ptr() + (static_cast<int64_t>(i) * c + j) * plane;
      double s = 0.0;
      for (int64_t t = 0; t < plane; ++t) s += p[t];
      out[static_cast<int64_t>(i) * c + j] = static_cast<float>(s / static_cast<double>(plane));
    }
  return out;
}

Tensor GlobalAvgPool::backward(const Tensor& dy) {
  const int n = shape_[0], c = shape_[1];
  const int64_t plane = static_cast<int64_t>(shape_[2]) * shape_[3];
  Tensor dx({n, c, shape_[2], shape_[3]});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const float g = dy[static_cast<int64_t>(i) * c + j] / static_cast<float>(plane);
      float* p = dx.ptr() + (static_cast<int64_t>(i) * c + j) * plane;
      for (int64_t t = 0; t < plane; ++t) p[t] = g;
    }
  return dx;
}

// ---------------------------------------------------------------- Flatten

Tensor Flatten::forward(const Tensor& x, bool) {
  shape_ = x.shape;
  Tensor out = x;
  const int n = x.dim(0);
  out.shape = {n, static_cast<int>(x.numel() / n)};
  return out;
}

Tensor Flatten::backward(const Tensor& dy) {
  Tensor dx = dy;
  dx.shape = shape_;
  return dx;
}

// ---------------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(int ch, float eps, float momentum)
    : ch_(ch), eps_(eps), momentum_(momentum) {
  gamma = Tensor({ch});
  gamma.fill(1.0f);
  ggrad = Tensor({ch});
  beta = Tensor({ch});
  bgrad = Tensor({ch});
  running_mean = Tensor({ch});
  running_var = Tensor({ch});
  running_var.fill(1.0f);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
  check4(x, "BatchNorm2d");
  input_ = x;
  trained_forward_ = train;
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t plane = static_cast<int64_t>(h) * w;
  const int64_t m = static_cast<int64_t>(n) * plane;
  batch_mean_.assign(c, 0.0f);
  batch_inv_std_.assign(c, 0.0f);

  for (int j = 0; j < c; ++j) {
    double mean, var;
    if (train) {
      double s = 0.0, s2 = 0.0;
      for (int i = 0; i < n; ++i) {
        const float* p = x.ptr() + (static_cast<int64_t>(i) * c + j) * plane;
        for (int64_t t = 0; t < plane; ++t) { s += p[t]; s2 += static_cast<double>(p[t]) * p[t]; }
      }
      mean = s / static_cast<double>(m);
      var = s2 / static_cast<double>(m) - mean * mean;
      if (var < 0.0) var = 0.0;
      running_mean[j] = (1.0f - momentum_) * running_mean[j] + momentum_ * static_cast<float>(mean);
      running_var[j] = (1.0f - momentum_) * running_var[j] + momentum_ * static_cast<float>(var);
    } else {
      mean = running_mean[j];
      var = running_var[j];
    }
    batch_mean_[j] = static_cast<float>(mean);
    batch_inv_std_[j] = static_cast<float>(1.0 / std::sqrt(var + eps_));
  }

  Tensor out(x.shape);
  xhat_ = Tensor(x.shape);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) {
      const float* p = x.ptr() + (static_cast<int64_t>(i) * c + j) * plane;
      float* xh = xhat_.ptr() + (static_cast<int64_t>(i) * c + j) * plane;
      float* o = out.ptr() + (static_cast<int64_t>(i) * c + j) * plane;
      const float mu = batch_mean_[j], is = batch_inv_std_[j], g = gamma[j], b = beta[j];
      for (int64_t t = 0; t < plane; ++t) {
        xh[t] = (p[t] - mu) * is;
        o[t] = g * xh[t] + b;
      }
    }
  }
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  const int n = input_.dim(0), c = input_.dim(1);
  const int64_t plane = static_cast<int64_t>(input_.dim(2)) * input_.dim(3);
  const int64_t m = static_cast<int64_t>(n) * plane;
  Tensor dx(input_.shape);

  for (int j = 0; j < c; ++j) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int i = 0; i < n; ++i) {
      const float* d = dy.ptr() + (static_cast<int64_t>(i) * c + j) * plane;
      const float* xh = xhat_.ptr() + (static_cast<int64_t>(i) * c + j) * plane;
      for (int64_t t = 0; t < plane; ++t) {
        sum_dy += d[t];
        sum_dy_xhat += static_cast<double>(d[t]) * xh[t];
      }
    }
    ggrad[j] += static_cast<float>(sum_dy_xhat);
    bgrad[j] += static_cast<float>(sum_dy);

    const float g = gamma[j], is = batch_inv_std_[j];
    for (int i = 0; i < n; ++i) {
      const float* d = dy.ptr() + (static_cast<int64_t>(i) * c + j) * plane;
      const float* xh = xhat_.ptr() + (static_cast<int64_t>(i) * c + j) * plane;
      float* o = dx.ptr() + (static_cast<int64_t>(i) * c + j) * plane;
      if (trained_forward_) {
        const float a = static_cast<float>(sum_dy / static_cast<double>(m));
        const float bq = static_cast<float>(sum_dy_xhat / static_cast<double>(m));
        for (int64_t t = 0; t < plane; ++t) o[t] = g * is * (d[t] - a - xh[t] * bq);
      } else {
        for (int64_t t = 0; t < plane; ++t) o[t] = g * is * d[t];
      }
    }
  }
  return dx;
}

void BatchNorm2d::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gamma", &gamma, &ggrad, ParamKind::norm, true});
  out.push_back({prefix + ".beta", &beta, &bgrad, ParamKind::norm, false});
}

void BatchNorm2d::collect_buffers(const std::string& prefix, std::vector<BufferRef>& out) {
  out.push_back({prefix + ".running_mean", &running_mean});
  out.push_back({prefix + ".running_var", &running_var});
}

// ---------------------------------------------------------------- ResidualBlock

ResidualBlock::ResidualBlock(int in_ch, int out_ch, int stride) {
  conv1_ = std::make_unique<Conv2d>(in_ch, out_ch, 3, stride, 1, false);
  bn1_ = std::make_unique<BatchNorm2d>(out_ch);
  relu1_ = std::make_unique<ReLU>();
  conv2_ = std::make_unique<Conv2d>(out_ch, out_ch, 3, 1, 1, false);
  bn2_ = std::make_unique<BatchNorm2d>(out_ch);
  if (stride != 1 || in_ch != out_ch) {
    proj_ = std::make_unique<Conv2d>(in_ch, out_ch, 1, stride, 0, false);
    bn_proj_ = std::make_unique<BatchNorm2d>(out_ch);
  }
}

void ResidualBlock::init(Rng& rng) {
  conv1_->init(rng);
  conv2_->init(rng);
  if (proj_) proj_->init(rng);
}

Tensor ResidualBlock::forward(const Tensor& x, bool train) {
  Tensor main = bn2_->forward(
      conv2_->forward(relu1_->forward(bn1_->forward(conv1_->forward(x, train), train), train), train),
      train);
  Tensor shortcut = proj_ ? bn_proj_->forward(proj_->forward(x, train), train) : x;
  sum_ = main;
  for (size_t i = 0; i < sum_.data.size(); ++i) sum_.data[i] += shortcut.data[i];
  Tensor out = sum_;
  for (auto& v : out.data) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor ResidualBlock::backward(const Tensor& dy) {
  Tensor dsum = dy;
  for (size_t i = 0; i < dsum.data.size(); ++i)
    if (sum_.data[i] <= 0.0f) dsum.data[i] = 0.0f;

  Tensor dmain = conv1_->backward(bn1_->backward(relu1_->backward(conv2_->backward(bn2_->backward(dsum)))));
  Tensor dshort = proj_ ? proj_->backward(bn_proj_->backward(dsum)) : dsum;
  for (size_t i = 0; i < dmain.data.size(); ++i) dmain.data[i] += dshort.data[i];
  return dmain;
}

void ResidualBlock::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
  conv1_->collect_params(prefix + ".conv1", out);
  bn1_->collect_params(prefix + ".bn1", out);
  conv2_->collect_params(prefix + ".conv2", out);
  bn2_->collect_params(prefix + ".bn2", out);
  if (proj_) {
    proj_->collect_params(prefix + ".proj", out);
    bn_proj_->collect_params(prefix + ".bn_proj", out);
  }
}

void ResidualBlock::collect_buffers(const std::string& prefix, std::vector<BufferRef>& out) {
  bn1_->collect_buffers(prefix + ".bn1", out);
  bn2_->collect_buffers(prefix + ".bn2", out);
  if (proj_) bn_proj_->collect_buffers(prefix + ".bn_proj", out);
}

}  // namespace oodmark
