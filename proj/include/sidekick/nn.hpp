#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sidekick/common.hpp"
#include "sidekick/tensor.hpp"

namespace sidekick::nn {

using sidekick::Rng;
using sidekick::Shape;
using sidekick::Tensor;

// Global toggle for per-op output validation. On by default; the training hot
// path may disable it once the unit suites have vouched for the op set.
inline bool& finite_checks() {
  static bool enabled = true;
  return enabled;
}

template <typename Real>
void validate_output(const Tensor<Real>& t, const char* what) {
  if (finite_checks()) t.check_finite(what);
}

// ---------------------------------------------------------------------------
// Dense linear algebra kernels (row-major).
// ---------------------------------------------------------------------------

// y = W x + b, W is [out, in]
template <typename Real>
void matvec_bias(const Real* W, const Real* b, const Real* x, Real* y,
                 std::size_t out, std::size_t in) {
  for (std::size_t o = 0; o < out; ++o) {
    const Real* row = W + o * in;
    Real acc = b ? b[o] : Real(0);
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

// gx += W^T g
template <typename Real>
void matvec_transpose_acc(const Real* W, const Real* g, Real* gx, std::size_t out,
                          std::size_t in) {
  for (std::size_t o = 0; o < out; ++o) {
    const Real go = g[o];
    if (go == Real(0)) continue;
    const Real* row = W + o * in;
    for (std::size_t i = 0; i < in; ++i) gx[i] += row[i] * go;
  }
}

// gW += g x^T
template <typename Real>
void outer_acc(Real* gW, const Real* g, const Real* x, std::size_t out,
               std::size_t in) {
  for (std::size_t o = 0; o < out; ++o) {
    const Real go = g[o];
    if (go == Real(0)) continue;
    Real* row = gW + o * in;
    for (std::size_t i = 0; i < in; ++i) row[i] += go * x[i];
  }
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <typename Real>
struct Param {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;
  // Optimizer state, lazily sized on first step.
  Tensor<Real> adam_m, adam_v, sgd_vel;

  Param() = default;
  Param(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}

  // Group = name up to the first '/', e.g. "decode/out.W" -> "decode".
  std::string group() const {
    auto pos = name.find('/');
    return pos == std::string::npos ? name : name.substr(0, pos);
  }
};

struct AdamConfig {
  double lr = 1e-4;
  double weight_decay = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct SgdMomentumConfig {
  double lr = 1e-4;
  double weight_decay = 0.1;
  double momentum = 0.9;
};

// Registry of named parameters with matching gradient slots. Owning layers
// hold the Param objects; the store holds pointers for optimization,
// serialization and group masking.
template <typename Real>
class ParamStore {
public:
  void add(Param<Real>* p) { params_.push_back(p); }

  const std::vector<Param<Real>*>& all() const { return params_; }

  Param<Real>* find(const std::string& name) const {
    for (auto* p : params_)
      if (p->name == name) return p;
    return nullptr;
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (auto* p : params_) n += p->value.numel();
    return n;
  }

  void zero_grads() {
    for (auto* p : params_) p->grad.zero();
  }

  void freeze_group(const std::string& group) { frozen_.push_back(group); }
  void unfreeze_all() { frozen_.clear(); }
  bool is_frozen(const Param<Real>& p) const {
    return std::find(frozen_.begin(), frozen_.end(), p.group()) != frozen_.end();
  }
  const std::vector<std::string>& frozen_groups() const { return frozen_; }

  void adam_step(const AdamConfig& cfg) {
    ++adam_t_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(adam_t_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(adam_t_));
    for (auto* p : params_) {
      if (is_frozen(*p)) {
        p->grad.zero();
        continue;
      }
      check_grad_finite(*p);
      if (p->adam_m.numel() != p->value.numel()) {
        p->adam_m = Tensor<Real>(p->value.shape);
        p->adam_v = Tensor<Real>(p->value.shape);
      }
      for (std::size_t i = 0; i < p->value.numel(); ++i) {
        double g = double(p->grad[i]) + cfg.weight_decay * double(p->value[i]);
        double m = cfg.beta1 * double(p->adam_m[i]) + (1.0 - cfg.beta1) * g;
        double v = cfg.beta2 * double(p->adam_v[i]) + (1.0 - cfg.beta2) * g * g;
        p->adam_m[i] = Real(m);
        p->adam_v[i] = Real(v);
        double mhat = m / bc1;
        double vhat = v / bc2;
        p->value[i] =
            Real(double(p->value[i]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
      }
      p->grad.zero();
    }
  }

  void sgd_momentum_step(const SgdMomentumConfig& cfg) {
    for (auto* p : params_) {
      if (is_frozen(*p)) {
        p->grad.zero();
        continue;
      }
      check_grad_finite(*p);
      if (p->sgd_vel.numel() != p->value.numel())
        p->sgd_vel = Tensor<Real>(p->value.shape);
      for (std::size_t i = 0; i < p->value.numel(); ++i) {
        double g = double(p->grad[i]) + cfg.weight_decay * double(p->value[i]);
        double v = cfg.momentum * double(p->sgd_vel[i]) + g;
        p->sgd_vel[i] = Real(v);
        p->value[i] = Real(double(p->value[i]) - cfg.lr * v);
      }
      p->grad.zero();
    }
  }

  // Name-sorted flat views, used by the checkpoint format and by the
  // finite-difference driver.
  std::vector<Param<Real>*> name_sorted() const {
    auto out = params_;
    std::sort(out.begin(), out.end(),
              [](const Param<Real>* a, const Param<Real>* b) {
                return a->name < b->name;
              });
    return out;
  }

private:
  void check_grad_finite(const Param<Real>& p) const {
    if (!p.grad.all_finite())
      throw NonFiniteError("non-finite gradient in parameter group '" + p.group() +
                           "' (" + p.name + ")");
  }

  std::vector<Param<Real>*> params_;
  std::vector<std::string> frozen_;
  std::uint64_t adam_t_ = 0;
};

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

template <typename Real>
void init_uniform_fan_in(Tensor<Real>& w, std::size_t fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(double(fan_in));
  for (auto& v : w.data) v = Real(rng.uniform(-bound, bound));
}

// Gram-Schmidt orthogonalization of a square gaussian matrix.
template <typename Real>
void init_orthogonal(Tensor<Real>& w, std::size_t n, Rng& rng) {
  std::vector<double> q(n * n);
  for (auto& v : q) v = rng.gaussian();
  for (std::size_t r = 0; r < n; ++r) {
    double* row = &q[r * n];
    for (std::size_t prev = 0; prev < r; ++prev) {
      const double* prow = &q[prev * n];
      double dot = 0;
      for (std::size_t i = 0; i < n; ++i) dot += row[i] * prow[i];
      for (std::size_t i = 0; i < n; ++i) row[i] -= dot * prow[i];
    }
    double norm = 0;
    for (std::size_t i = 0; i < n; ++i) norm += row[i] * row[i];
    norm = std::sqrt(std::max(norm, 1e-12));
    for (std::size_t i = 0; i < n; ++i) row[i] /= norm;
  }
  for (std::size_t i = 0; i < n * n; ++i) w.data[i] = Real(q[i]);
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class Activation { identity, relu, tanh_act, sigmoid };

template <typename Real>
Real apply_activation(Activation act, Real x) {
  switch (act) {
    case Activation::identity: return x;
    case Activation::relu: return x > Real(0) ? x : Real(0);
    case Activation::tanh_act: return Real(std::tanh(double(x)));
    case Activation::sigmoid: return Real(1) / (Real(1) + Real(std::exp(-double(x))));
  }
  return x;
}

// Derivative expressed through the activation output.
template <typename Real>
Real activation_deriv_from_output(Activation act, Real y) {
  switch (act) {
    case Activation::identity: return Real(1);
    case Activation::relu: return y > Real(0) ? Real(1) : Real(0);
    case Activation::tanh_act: return Real(1) - y * y;
    case Activation::sigmoid: return y * (Real(1) - y);
  }
  return Real(1);
}

template <typename Real>
void softmax(const Real* logits, Real* probs, std::size_t n) {
  Real mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  Real sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = Real(std::exp(double(logits[i] - mx)));
    sum += probs[i];
  }
  for (std::size_t i = 0; i < n; ++i) probs[i] /= sum;
}

// grad_logits += J_softmax^T grad_probs, with probs from the forward pass.
template <typename Real>
void softmax_backward_acc(const Real* probs, const Real* grad_probs,
                          Real* grad_logits, std::size_t n) {
  Real dot = 0;
  for (std::size_t i = 0; i < n; ++i) dot += probs[i] * grad_probs[i];
  for (std::size_t i = 0; i < n; ++i)
    grad_logits[i] += probs[i] * (grad_probs[i] - dot);
}

// ---------------------------------------------------------------------------
// Layers. Each layer owns its parameters; forward fills a caller-provided
// cache that suffices for the exact analytic backward pass.
// ---------------------------------------------------------------------------

template <typename Real>
struct DenseCache {
  Tensor<Real> input;
  Tensor<Real> output;  // post-activation, for derivative-from-output
};

template <typename Real>
class Dense {
public:
  Dense() = default;
  Dense(const std::string& name, std::size_t in, std::size_t out, Activation act,
        Rng& rng)
      : in_(in), out_(out), act_(act), W_(name + ".W", {out, in}),
        b_(name + ".b", {out}) {
    init_uniform_fan_in(W_.value, in, rng);
    init_uniform_fan_in(b_.value, in, rng);
  }

  // Must be called once the layer occupies its final storage location.
  void register_params(ParamStore<Real>& store) {
    store.add(&W_);
    store.add(&b_);
  }

  Tensor<Real> forward(const Tensor<Real>& x, DenseCache<Real>& cache) const {
    if (x.numel() != in_)
      throw ShapeMismatchError("dense '" + W_.name + "': input size " +
                               std::to_string(x.numel()) + " != " +
                               std::to_string(in_));
    Tensor<Real> y({out_});
    matvec_bias(W_.value.ptr(), b_.value.ptr(), x.ptr(), y.ptr(), out_, in_);
    for (auto& v : y.data) v = apply_activation(act_, v);
    validate_output(y, "dense forward");
    cache.input = x;
    cache.output = y;
    return y;
  }

  // Returns grad w.r.t. input; accumulates parameter grads.
  Tensor<Real> backward(const DenseCache<Real>& cache, const Tensor<Real>& grad_out) {
    if (grad_out.numel() != out_ || cache.input.numel() != in_)
      throw ShapeMismatchError("dense '" + W_.name + "': stale or mismatched cache");
    Tensor<Real> gpre({out_});
    for (std::size_t o = 0; o < out_; ++o)
      gpre[o] = grad_out[o] * activation_deriv_from_output(act_, cache.output[o]);
    outer_acc(W_.grad.ptr(), gpre.ptr(), cache.input.ptr(), out_, in_);
    for (std::size_t o = 0; o < out_; ++o) b_.grad[o] += gpre[o];
    Tensor<Real> gx({in_});
    matvec_transpose_acc(W_.value.ptr(), gpre.ptr(), gx.ptr(), out_, in_);
    return gx;
  }

  std::size_t in_size() const { return in_; }
  std::size_t out_size() const { return out_; }
  Param<Real>& weight() { return W_; }
  Param<Real>& bias() { return b_; }

private:
  std::size_t in_ = 0, out_ = 0;
  Activation act_ = Activation::identity;
  Param<Real> W_, b_;
};

// 2D convolution, kernel 5, stride 1, zero padding 2 (same spatial size).
template <typename Real>
struct ConvCache {
  Tensor<Real> input;   // [C_in, H, W]
  Tensor<Real> output;  // [C_out, H, W] post-activation
};

template <typename Real>
class Conv2d {
public:
  static constexpr int kKernel = 5;
  static constexpr int kPad = 2;

  Conv2d() = default;
  Conv2d(const std::string& name, std::size_t in_ch, std::size_t out_ch,
         Activation act, Rng& rng)
      : in_ch_(in_ch), out_ch_(out_ch), act_(act),
        W_(name + ".W", {out_ch, in_ch, kKernel, kKernel}), b_(name + ".b", {out_ch}) {
    init_uniform_fan_in(W_.value, in_ch * kKernel * kKernel, rng);
    init_uniform_fan_in(b_.value, in_ch * kKernel * kKernel, rng);
  }

  void register_params(ParamStore<Real>& store) {
    store.add(&W_);
    store.add(&b_);
  }

  Tensor<Real> forward(const Tensor<Real>& x, ConvCache<Real>& cache) const {
    const auto [h, w] = spatial(x, in_ch_, "conv input");
    Tensor<Real> y({out_ch_, h, w});
    for (std::size_t oc = 0; oc < out_ch_; ++oc)
      for (std::size_t oy = 0; oy < h; ++oy)
        for (std::size_t ox = 0; ox < w; ++ox) {
          Real acc = b_.value[oc];
          for (std::size_t ic = 0; ic < in_ch_; ++ic)
            for (int ky = 0; ky < kKernel; ++ky) {
              int iy = int(oy) + ky - kPad;
              if (iy < 0 || iy >= int(h)) continue;
              for (int kx = 0; kx < kKernel; ++kx) {
                int ix = int(ox) + kx - kPad;
                if (ix < 0 || ix >= int(w)) continue;
                acc += W_.value[((oc * in_ch_ + ic) * kKernel + std::size_t(ky)) *
                                    kKernel +
                                std::size_t(kx)] *
                       x[(ic * h + std::size_t(iy)) * w + std::size_t(ix)];
              }
            }
          y[(oc * h + oy) * w + ox] = apply_activation(act_, acc);
        }
    validate_output(y, "conv forward");
    cache.input = x;
    cache.output = y;
    return y;
  }

  Tensor<Real> backward(const ConvCache<Real>& cache, const Tensor<Real>& grad_out) {
    const auto [h, w] = spatial(cache.input, in_ch_, "conv cache");
    require_shape(grad_out, {out_ch_, h, w}, "conv grad_out");
    Tensor<Real> gx({in_ch_, h, w});
    for (std::size_t oc = 0; oc < out_ch_; ++oc)
      for (std::size_t oy = 0; oy < h; ++oy)
        for (std::size_t ox = 0; ox < w; ++ox) {
          Real g = grad_out[(oc * h + oy) * w + ox] *
                   activation_deriv_from_output(act_, cache.output[(oc * h + oy) * w + ox]);
          if (g == Real(0)) continue;
          b_.grad[oc] += g;
          for (std::size_t ic = 0; ic < in_ch_; ++ic)
            for (int ky = 0; ky < kKernel; ++ky) {
              int iy = int(oy) + ky - kPad;
              if (iy < 0 || iy >= int(h)) continue;
              for (int kx = 0; kx < kKernel; ++kx) {
                int ix = int(ox) + kx - kPad;
                if (ix < 0 || ix >= int(w)) continue;
                std::size_t widx =
                    ((oc * in_ch_ + ic) * kKernel + std::size_t(ky)) * kKernel +
                    std::size_t(kx);
                std::size_t xidx = (ic * h + std::size_t(iy)) * w + std::size_t(ix);
                W_.grad[widx] += g * cache.input[xidx];
                gx[xidx] += g * W_.value[widx];
              }
            }
        }
    return gx;
  }

private:
  static std::pair<std::size_t, std::size_t> spatial(const Tensor<Real>& x,
                                                     std::size_t ch,
                                                     const char* what) {
    if (x.shape.size() != 3 || x.shape[0] != ch)
      throw ShapeMismatchError(std::string(what) + ": expected [C,H,W] with C=" +
                               std::to_string(ch));
    return {x.shape[1], x.shape[2]};
  }

  std::size_t in_ch_ = 0, out_ch_ = 0;
  Activation act_ = Activation::identity;
  Param<Real> W_, b_;
};

// Transposed convolution, kernel 5, stride 2, padding 2, output padding 1:
// doubles the spatial dimensions.
template <typename Real>
struct DeconvCache {
  Tensor<Real> input;
  Tensor<Real> output;
};

template <typename Real>
class Deconv2d {
public:
  static constexpr int kKernel = 5;
  static constexpr int kStride = 2;
  static constexpr int kPad = 2;

  Deconv2d() = default;
  Deconv2d(const std::string& name, std::size_t in_ch, std::size_t out_ch,
           Activation act, Rng& rng)
      : in_ch_(in_ch), out_ch_(out_ch), act_(act),
        W_(name + ".W", {in_ch, out_ch, kKernel, kKernel}), b_(name + ".b", {out_ch}) {
    init_uniform_fan_in(W_.value, in_ch * kKernel * kKernel, rng);
    init_uniform_fan_in(b_.value, in_ch * kKernel * kKernel, rng);
  }

  void register_params(ParamStore<Real>& store) {
    store.add(&W_);
    store.add(&b_);
  }

  Tensor<Real> forward(const Tensor<Real>& x, DeconvCache<Real>& cache) const {
    if (x.shape.size() != 3 || x.shape[0] != in_ch_)
      throw ShapeMismatchError("deconv input: expected [C,H,W]");
    std::size_t h = x.shape[1], w = x.shape[2];
    std::size_t oh = h * 2, ow = w * 2;
    Tensor<Real> y({out_ch_, oh, ow});
    for (std::size_t oc = 0; oc < out_ch_; ++oc)
      for (std::size_t i = 0; i < oh * ow; ++i) y[oc * oh * ow + i] = b_.value[oc];
    for (std::size_t ic = 0; ic < in_ch_; ++ic)
      for (std::size_t iy = 0; iy < h; ++iy)
        for (std::size_t ix = 0; ix < w; ++ix) {
          Real xv = x[(ic * h + iy) * w + ix];
          if (xv == Real(0)) continue;
          for (std::size_t oc = 0; oc < out_ch_; ++oc)
            for (int ky = 0; ky < kKernel; ++ky) {
              int oy = int(iy) * kStride + ky - kPad;
              if (oy < 0 || oy >= int(oh)) continue;
              for (int kx = 0; kx < kKernel; ++kx) {
                int ox = int(ix) * kStride + kx - kPad;
                if (ox < 0 || ox >= int(ow)) continue;
                y[(oc * oh + std::size_t(oy)) * ow + std::size_t(ox)] +=
                    xv * W_.value[((ic * out_ch_ + oc) * kKernel + std::size_t(ky)) *
                                      kKernel +
                                  std::size_t(kx)];
              }
            }
        }
    for (auto& v : y.data) v = apply_activation(act_, v);
    validate_output(y, "deconv forward");
    cache.input = x;
    cache.output = y;
    return y;
  }

  Tensor<Real> backward(const DeconvCache<Real>& cache, const Tensor<Real>& grad_out) {
    std::size_t h = cache.input.shape[1], w = cache.input.shape[2];
    std::size_t oh = h * 2, ow = w * 2;
    require_shape(grad_out, {out_ch_, oh, ow}, "deconv grad_out");
    Tensor<Real> gpre({out_ch_, oh, ow});
    for (std::size_t i = 0; i < gpre.numel(); ++i)
      gpre[i] = grad_out[i] * activation_deriv_from_output(act_, cache.output[i]);
    for (std::size_t oc = 0; oc < out_ch_; ++oc)
      for (std::size_t i = 0; i < oh * ow; ++i) b_.grad[oc] += gpre[oc * oh * ow + i];
    Tensor<Real> gx({in_ch_, h, w});
    for (std::size_t ic = 0; ic < in_ch_; ++ic)
      for (std::size_t iy = 0; iy < h; ++iy)
        for (std::size_t ix = 0; ix < w; ++ix) {
          Real xv = cache.input[(ic * h + iy) * w + ix];
          Real gacc = 0;
          for (std::size_t oc = 0; oc < out_ch_; ++oc)
            for (int ky = 0; ky < kKernel; ++ky) {
              int oy = int(iy) * kStride + ky - kPad;
              if (oy < 0 || oy >= int(oh)) continue;
              for (int kx = 0; kx < kKernel; ++kx) {
                int ox = int(ix) * kStride + kx - kPad;
                if (ox < 0 || ox >= int(ow)) continue;
                std::size_t widx =
                    ((ic * out_ch_ + oc) * kKernel + std::size_t(ky)) * kKernel +
                    std::size_t(kx);
                Real g = gpre[(oc * oh + std::size_t(oy)) * ow + std::size_t(ox)];
                gacc += g * W_.value[widx];
                W_.grad[widx] += g * xv;
              }
            }
          gx[(ic * h + iy) * w + ix] = gacc;
        }
    return gx;
  }

private:
  std::size_t in_ch_ = 0, out_ch_ = 0;
  Activation act_ = Activation::identity;
  Param<Real> W_, b_;
};

// 2x2 average pooling (requires even spatial dims).
template <typename Real>
struct PoolCache {
  Shape input_shape;
};

template <typename Real>
class AvgPool2 {
public:
  Tensor<Real> forward(const Tensor<Real>& x, PoolCache<Real>& cache) const {
    if (x.shape.size() != 3 || x.shape[1] % 2 || x.shape[2] % 2)
      throw ShapeMismatchError("avgpool input must be [C,H,W] with even H,W");
    std::size_t c = x.shape[0], h = x.shape[1], w = x.shape[2];
    Tensor<Real> y({c, h / 2, w / 2});
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oy = 0; oy < h / 2; ++oy)
        for (std::size_t ox = 0; ox < w / 2; ++ox) {
          Real acc = x[(ch * h + 2 * oy) * w + 2 * ox] +
                     x[(ch * h + 2 * oy) * w + 2 * ox + 1] +
                     x[(ch * h + 2 * oy + 1) * w + 2 * ox] +
                     x[(ch * h + 2 * oy + 1) * w + 2 * ox + 1];
          y[(ch * (h / 2) + oy) * (w / 2) + ox] = acc * Real(0.25);
        }
    cache.input_shape = x.shape;
    return y;
  }

  Tensor<Real> backward(const PoolCache<Real>& cache, const Tensor<Real>& grad_out) {
    std::size_t c = cache.input_shape[0], h = cache.input_shape[1],
                w = cache.input_shape[2];
    Tensor<Real> gx(cache.input_shape);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oy = 0; oy < h / 2; ++oy)
        for (std::size_t ox = 0; ox < w / 2; ++ox) {
          Real g = grad_out[(ch * (h / 2) + oy) * (w / 2) + ox] * Real(0.25);
          gx[(ch * h + 2 * oy) * w + 2 * ox] = g;
          gx[(ch * h + 2 * oy) * w + 2 * ox + 1] = g;
          gx[(ch * h + 2 * oy + 1) * w + 2 * ox] = g;
          gx[(ch * h + 2 * oy + 1) * w + 2 * ox + 1] = g;
        }
    return gx;
  }
};

// ---------------------------------------------------------------------------
// Gated recurrent cell (GRU). h' = (1-z) * h + z * tanh(Wh x + Uh (r*h) + bh)
// with update gate z and reset gate r. Zero input, zero state, zero biases
// give zero output.
// ---------------------------------------------------------------------------

template <typename Real>
struct GruCache {
  Tensor<Real> x, h_prev;
  Tensor<Real> z, r, cand;  // gate activations and candidate state
};

template <typename Real>
class GruCell {
public:
  GruCell() = default;
  GruCell(const std::string& name, std::size_t in, std::size_t hidden, Rng& rng)
      : in_(in), hidden_(hidden),
        Wz_(name + ".Wz", {hidden, in}), Uz_(name + ".Uz", {hidden, hidden}),
        bz_(name + ".bz", {hidden}),
        Wr_(name + ".Wr", {hidden, in}), Ur_(name + ".Ur", {hidden, hidden}),
        br_(name + ".br", {hidden}),
        Wh_(name + ".Wh", {hidden, in}), Uh_(name + ".Uh", {hidden, hidden}),
        bh_(name + ".bh", {hidden}) {
    init_uniform_fan_in(Wz_.value, in, rng);
    init_uniform_fan_in(Wr_.value, in, rng);
    init_uniform_fan_in(Wh_.value, in, rng);
    init_orthogonal(Uz_.value, hidden, rng);
    init_orthogonal(Ur_.value, hidden, rng);
    init_orthogonal(Uh_.value, hidden, rng);
  }

  void register_params(ParamStore<Real>& store) {
    for (auto* p : {&Wz_, &Uz_, &bz_, &Wr_, &Ur_, &br_, &Wh_, &Uh_, &bh_})
      store.add(p);
  }

  std::size_t hidden_size() const { return hidden_; }
  std::size_t input_size() const { return in_; }

  Tensor<Real> forward(const Tensor<Real>& h_prev, const Tensor<Real>& x,
                       GruCache<Real>& cache) const {
    if (x.numel() != in_ || h_prev.numel() != hidden_)
      throw ShapeMismatchError("gru: input/state size mismatch");
    Tensor<Real> az({hidden_}), ar({hidden_}), ah({hidden_});
    matvec_bias(Wz_.value.ptr(), bz_.value.ptr(), x.ptr(), az.ptr(), hidden_, in_);
    matvec_bias(Wr_.value.ptr(), br_.value.ptr(), x.ptr(), ar.ptr(), hidden_, in_);
    matvec_bias(Wh_.value.ptr(), bh_.value.ptr(), x.ptr(), ah.ptr(), hidden_, in_);
    addmatvec(Uz_.value, h_prev, az);
    addmatvec(Ur_.value, h_prev, ar);
    Tensor<Real> z({hidden_}), r({hidden_});
    for (std::size_t i = 0; i < hidden_; ++i) {
      z[i] = apply_activation(Activation::sigmoid, az[i]);
      r[i] = apply_activation(Activation::sigmoid, ar[i]);
    }
    Tensor<Real> rh({hidden_});
    for (std::size_t i = 0; i < hidden_; ++i) rh[i] = r[i] * h_prev[i];
    addmatvec(Uh_.value, rh, ah);
    Tensor<Real> cand({hidden_}), h_next({hidden_});
    for (std::size_t i = 0; i < hidden_; ++i) {
      cand[i] = apply_activation(Activation::tanh_act, ah[i]);
      h_next[i] = (Real(1) - z[i]) * h_prev[i] + z[i] * cand[i];
    }
    validate_output(h_next, "gru forward");
    cache.x = x;
    cache.h_prev = h_prev;
    cache.z = z;
    cache.r = r;
    cache.cand = cand;
    return h_next;
  }

  // Returns (grad_x, grad_h_prev); accumulates parameter grads.
  std::pair<Tensor<Real>, Tensor<Real>> backward(const GruCache<Real>& cache,
                                                 const Tensor<Real>& grad_h) {
    const auto& z = cache.z;
    const auto& r = cache.r;
    const auto& c = cache.cand;
    const auto& h = cache.h_prev;
    Tensor<Real> dz({hidden_}), dah({hidden_}), dh({hidden_});
    for (std::size_t i = 0; i < hidden_; ++i) {
      dz[i] = grad_h[i] * (c[i] - h[i]);
      dah[i] = grad_h[i] * z[i] * (Real(1) - c[i] * c[i]);
      dh[i] = grad_h[i] * (Real(1) - z[i]);
    }
    Tensor<Real> rh({hidden_});
    for (std::size_t i = 0; i < hidden_; ++i) rh[i] = r[i] * h[i];

    // candidate path
    outer_acc(Wh_.grad.ptr(), dah.ptr(), cache.x.ptr(), hidden_, in_);
    outer_acc(Uh_.grad.ptr(), dah.ptr(), rh.ptr(), hidden_, hidden_);
    for (std::size_t i = 0; i < hidden_; ++i) bh_.grad[i] += dah[i];
    Tensor<Real> drh({hidden_});
    matvec_transpose_acc(Uh_.value.ptr(), dah.ptr(), drh.ptr(), hidden_, hidden_);
    Tensor<Real> dr({hidden_});
    for (std::size_t i = 0; i < hidden_; ++i) {
      dr[i] = drh[i] * h[i];
      dh[i] += drh[i] * r[i];
    }

    // gate pre-activations
    Tensor<Real> daz({hidden_}), dar({hidden_});
    for (std::size_t i = 0; i < hidden_; ++i) {
      daz[i] = dz[i] * z[i] * (Real(1) - z[i]);
      dar[i] = dr[i] * r[i] * (Real(1) - r[i]);
    }
    outer_acc(Wz_.grad.ptr(), daz.ptr(), cache.x.ptr(), hidden_, in_);
    outer_acc(Uz_.grad.ptr(), daz.ptr(), h.ptr(), hidden_, hidden_);
    outer_acc(Wr_.grad.ptr(), dar.ptr(), cache.x.ptr(), hidden_, in_);
    outer_acc(Ur_.grad.ptr(), dar.ptr(), h.ptr(), hidden_, hidden_);
    for (std::size_t i = 0; i < hidden_; ++i) {
      bz_.grad[i] += daz[i];
      br_.grad[i] += dar[i];
    }
    matvec_transpose_acc(Uz_.value.ptr(), daz.ptr(), dh.ptr(), hidden_, hidden_);
    matvec_transpose_acc(Ur_.value.ptr(), dar.ptr(), dh.ptr(), hidden_, hidden_);

    Tensor<Real> dx({in_});
    matvec_transpose_acc(Wz_.value.ptr(), daz.ptr(), dx.ptr(), hidden_, in_);
    matvec_transpose_acc(Wr_.value.ptr(), dar.ptr(), dx.ptr(), hidden_, in_);
    matvec_transpose_acc(Wh_.value.ptr(), dah.ptr(), dx.ptr(), hidden_, in_);
    return {std::move(dx), std::move(dh)};
  }

private:
  void addmatvec(const Tensor<Real>& W, const Tensor<Real>& x,
                 Tensor<Real>& y) const {
    for (std::size_t o = 0; o < hidden_; ++o) {
      const Real* row = W.ptr() + o * hidden_;
      Real acc = y[o];
      for (std::size_t i = 0; i < hidden_; ++i) acc += row[i] * x[i];
      y[o] = acc;
    }
  }

  std::size_t in_ = 0, hidden_ = 0;
  Param<Real> Wz_, Uz_, bz_, Wr_, Ur_, br_, Wh_, Uh_, bh_;
};

// ---------------------------------------------------------------------------
// Finite-difference verification. rel-err = |ga - gf| / max(|ga|,|gf|,1e-7);
// the absolute floor sits well above the ~1e-11 roundoff noise a full unroll
// accumulates, so vanishing gradients don't fail on numerical dust while any
// real error still trips the relative tolerance.
// ---------------------------------------------------------------------------

struct FdGroupReport {
  std::string group;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct FdReport {
  std::vector<FdGroupReport> groups;
  double max_rel_err = 0.0;
  bool pass = true;
};

// `loss_fn` recomputes the scalar loss from the current parameter values.
// Analytic gradients must already be in the grad slots when called.
//
// The central difference at a single step size cannot satisfy the tolerance
// for every element at once: tiny gradients (~1e-8) need a coarse step to
// beat cancellation noise while steep directions need a fine step to bound
// truncation error. Elements failing at `eps` are therefore retried on a
// coarser ladder and the best estimate kept; a genuinely wrong analytic
// gradient fails at every step size.
template <typename Real>
FdReport finite_diff_check(ParamStore<Real>& store,
                           const std::function<double()>& loss_fn,
                           double eps = 1e-5, double tolerance = 1e-4) {
  static_assert(sizeof(Real) == 8, "finite-difference checking requires 64-bit mode");
  FdReport report;
  std::map<std::string, FdGroupReport> by_group;
  for (auto* p : store.all()) {
    auto& gr = by_group[p->group()];
    gr.group = p->group();
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      Real saved = p->value[i];
      double ga = double(p->grad[i]);
      double rel = std::numeric_limits<double>::infinity();
      for (double h : {eps, 10.0 * eps, 30.0 * eps, 100.0 * eps, 300.0 * eps}) {
        p->value[i] = saved + Real(h);
        double lp = loss_fn();
        p->value[i] = saved - Real(h);
        double lm = loss_fn();
        p->value[i] = saved;
        double gf = (lp - lm) / (2.0 * h);
        rel = std::min(rel, std::abs(ga - gf) /
                                std::max({std::abs(ga), std::abs(gf), 1e-7}));
        if (rel < tolerance) break;
      }
      gr.max_rel_err = std::max(gr.max_rel_err, rel);
    }
  }
  for (auto& [name, gr] : by_group) {
    gr.pass = gr.max_rel_err < tolerance;
    report.max_rel_err = std::max(report.max_rel_err, gr.max_rel_err);
    report.pass = report.pass && gr.pass;
    report.groups.push_back(gr);
  }
  return report;
}

}  // namespace sidekick::nn
