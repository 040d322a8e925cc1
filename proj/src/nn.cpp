#include "calcx/nn.hpp"

#include <algorithm>
#include <cmath>

#include "calcx/error.hpp"

namespace calcx::nn {

Tensor tensor_from_image(const Image& img) {
  Tensor t(1, img.height(), img.width());
  std::copy(img.data().begin(), img.data().end(), t.v.begin());
  return t;
}

Image image_from_tensor(const Tensor& t) {
  if (t.c != 1) throw ShapeError("image_from_tensor: tensor must have one channel");
  Image img(t.w, t.h);
  for (std::size_t i = 0; i < t.v.size(); ++i)
    img.data()[i] = std::clamp(t.v[i], 0.f, 1.f);
  return img;
}

void ParamTensor::resize(std::vector<int> s) {
  shape = std::move(s);
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  w.assign(n, 0.f);
  g.assign(n, 0.f);
}

namespace {

void he_init(ParamTensor& p, std::size_t fan_in, Rng& rng) {
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (float& v : p.w) v = static_cast<float>(rng.normal(0.0, std_dev));
}

}  // namespace

Conv2d::Conv2d(const std::string& name, int in_c_, int out_c_, int k_, int stride_, int pad)
    : in_c(in_c_), out_c(out_c_), k(k_), stride(stride_),
      pad_t(pad), pad_l(pad), pad_b(pad), pad_r(pad) {
  weight.name = name + ".weight";
  weight.resize({out_c, in_c, k, k});
  bias.name = name + ".bias";
  bias.resize({out_c});
}

void Conv2d::set_padding(int t, int l, int b, int r) {
  pad_t = t;
  pad_l = l;
  pad_b = b;
  pad_r = r;
}

void Conv2d::init(Rng& rng) {
  he_init(weight, static_cast<std::size_t>(in_c) * k * k, rng);
  std::fill(bias.w.begin(), bias.w.end(), 0.f);
}

Tensor Conv2d::forward(const Tensor& x) const {
  if (x.c != in_c) throw ShapeError("conv: channel mismatch");
  const int oh = out_h(x.h), ow = out_w(x.w);
  if (oh < 1 || ow < 1) throw ShapeError("conv: output would be empty");
  Tensor y(out_c, oh, ow);
  for (int oc = 0; oc < out_c; ++oc) {
    const float* wbase = &weight.w[static_cast<std::size_t>(oc) * in_c * k * k];
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias.w[oc];
        for (int ic = 0; ic < in_c; ++ic) {
          const float* wc = wbase + static_cast<std::size_t>(ic) * k * k;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride + ky - pad_t;
            if (iy < 0 || iy >= x.h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * stride + kx - pad_l;
              if (ix < 0 || ix >= x.w) continue;
              acc += static_cast<double>(wc[ky * k + kx]) * x.at(ic, iy, ix);
            }
          }
        }
        y.at(oc, oy, ox) = static_cast<float>(acc);
      }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& gy) {
  const int oh = out_h(x.h), ow = out_w(x.w);
  if (gy.c != out_c || gy.h != oh || gy.w != ow)
    throw ShapeError("conv backward: gradient shape mismatch");
  Tensor gx(x.c, x.h, x.w);
  for (int oc = 0; oc < out_c; ++oc) {
    float* gwbase = &weight.g[static_cast<std::size_t>(oc) * in_c * k * k];
    const float* wbase = &weight.w[static_cast<std::size_t>(oc) * in_c * k * k];
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const float g = gy.at(oc, oy, ox);
        bias.g[oc] += g;
        for (int ic = 0; ic < in_c; ++ic) {
          float* gwc = gwbase + static_cast<std::size_t>(ic) * k * k;
          const float* wc = wbase + static_cast<std::size_t>(ic) * k * k;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride + ky - pad_t;
            if (iy < 0 || iy >= x.h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * stride + kx - pad_l;
              if (ix < 0 || ix >= x.w) continue;
              gwc[ky * k + kx] += g * x.at(ic, iy, ix);
              gx.at(ic, iy, ix) += g * wc[ky * k + kx];
            }
          }
        }
      }
  }
  return gx;
}

ConvT2d::ConvT2d(const std::string& name, int in_c_, int out_c_, int k_, int stride_, int pad_)
    : in_c(in_c_), out_c(out_c_), k(k_), stride(stride_), pad(pad_) {
  weight.name = name + ".weight";
  weight.resize({in_c, out_c, k, k});
  bias.name = name + ".bias";
  bias.resize({out_c});
}

void ConvT2d::init(Rng& rng) {
  he_init(weight, static_cast<std::size_t>(in_c) * k * k, rng);
  std::fill(bias.w.begin(), bias.w.end(), 0.f);
}

Tensor ConvT2d::forward(const Tensor& x) const {
  if (x.c != in_c) throw ShapeError("tconv: channel mismatch");
  const int oh = out_h(x.h), ow = out_w(x.w);
  if (oh < 1 || ow < 1) throw ShapeError("tconv: output would be empty");
  Tensor y(out_c, oh, ow);
  for (int oc = 0; oc < out_c; ++oc)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) y.at(oc, oy, ox) = bias.w[oc];
  for (int ic = 0; ic < in_c; ++ic) {
    const float* wbase = &weight.w[static_cast<std::size_t>(ic) * out_c * k * k];
    for (int iy = 0; iy < x.h; ++iy)
      for (int ix = 0; ix < x.w; ++ix) {
        const float v = x.at(ic, iy, ix);
        for (int oc = 0; oc < out_c; ++oc) {
          const float* wc = wbase + static_cast<std::size_t>(oc) * k * k;
          for (int ky = 0; ky < k; ++ky) {
            const int oy = iy * stride + ky - pad;
            if (oy < 0 || oy >= oh) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ox = ix * stride + kx - pad;
              if (ox < 0 || ox >= ow) continue;
              y.at(oc, oy, ox) += v * wc[ky * k + kx];
            }
          }
        }
      }
  }
  return y;
}

Tensor ConvT2d::backward(const Tensor& x, const Tensor& gy) {
  const int oh = out_h(x.h), ow = out_w(x.w);
  if (gy.c != out_c || gy.h != oh || gy.w != ow)
    throw ShapeError("tconv backward: gradient shape mismatch");
  Tensor gx(x.c, x.h, x.w);
  for (int oc = 0; oc < out_c; ++oc) {
    double acc = 0.0;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) acc += gy.at(oc, oy, ox);
    bias.g[oc] += static_cast<float>(acc);
  }
  for (int ic = 0; ic < in_c; ++ic) {
    const float* wbase = &weight.w[static_cast<std::size_t>(ic) * out_c * k * k];
    float* gwbase = &weight.g[static_cast<std::size_t>(ic) * out_c * k * k];
    for (int iy = 0; iy < x.h; ++iy)
      for (int ix = 0; ix < x.w; ++ix) {
        const float v = x.at(ic, iy, ix);
        double acc = 0.0;
        for (int oc = 0; oc < out_c; ++oc) {
          const float* wc = wbase + static_cast<std::size_t>(oc) * k * k;
          float* gwc = gwbase + static_cast<std::size_t>(oc) * k * k;
          for (int ky = 0; ky < k; ++ky) {
            const int oy = iy * stride + ky - pad;
            if (oy < 0 || oy >= oh) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ox = ix * stride + kx - pad;
              if (ox < 0 || ox >= ow) continue;
              const float g = gy.at(oc, oy, ox);
              gwc[ky * k + kx] += g * v;
              acc += static_cast<double>(g) * wc[ky * k + kx];
            }
          }
        }
        gx.at(ic, iy, ix) = static_cast<float>(acc);
      }
  }
  return gx;
}

Linear::Linear(const std::string& name, int in_n_, int out_n_) : in_n(in_n_), out_n(out_n_) {
  weight.name = name + ".weight";
  weight.resize({out_n, in_n});
  bias.name = name + ".bias";
  bias.resize({out_n});
}

void Linear::init(Rng& rng) {
  he_init(weight, static_cast<std::size_t>(in_n), rng);
  std::fill(bias.w.begin(), bias.w.end(), 0.f);
}

std::vector<float> Linear::forward(const std::vector<float>& x) const {
  if (static_cast<int>(x.size()) != in_n) throw ShapeError("linear: input size mismatch");
  std::vector<float> y(static_cast<std::size_t>(out_n));
  for (int o = 0; o < out_n; ++o) {
    const float* wr = &weight.w[static_cast<std::size_t>(o) * in_n];
    double acc = bias.w[o];
    for (int i = 0; i < in_n; ++i) acc += static_cast<double>(wr[i]) * x[i];
    y[o] = static_cast<float>(acc);
  }
  return y;
}

std::vector<float> Linear::backward(const std::vector<float>& x, const std::vector<float>& gy) {
  if (static_cast<int>(gy.size()) != out_n)
    throw ShapeError("linear backward: gradient size mismatch");
  std::vector<float> gx(static_cast<std::size_t>(in_n), 0.f);
  for (int o = 0; o < out_n; ++o) {
    const float g = gy[o];
    bias.g[o] += g;
    const float* wr = &weight.w[static_cast<std::size_t>(o) * in_n];
    float* gwr = &weight.g[static_cast<std::size_t>(o) * in_n];
    for (int i = 0; i < in_n; ++i) {
      gwr[i] += g * x[i];
      gx[i] += g * wr[i];
    }
  }
  return gx;
}

Tensor leaky_relu(const Tensor& x, float slope) {
  Tensor y = x;
  for (float& v : y.v) v = v > 0.f ? v : slope * v;
  return y;
}

Tensor leaky_relu_backward(const Tensor& x, const Tensor& gy, float slope) {
  Tensor gx = gy;
  for (std::size_t i = 0; i < x.v.size(); ++i)
    if (x.v[i] <= 0.f) gx.v[i] *= slope;
  return gx;
}

Tensor relu(const Tensor& x) { return leaky_relu(x, 0.f); }
Tensor relu_backward(const Tensor& x, const Tensor& gy) {
  return leaky_relu_backward(x, gy, 0.f);
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (float& v : y.v) {
    const double z = v;
    v = static_cast<float>(z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                    : std::exp(z) / (1.0 + std::exp(z)));
  }
  return y;
}

Tensor sigmoid_backward_from_output(const Tensor& y, const Tensor& gy) {
  Tensor gx = gy;
  for (std::size_t i = 0; i < y.v.size(); ++i) gx.v[i] *= y.v[i] * (1.f - y.v[i]);
  return gx;
}

std::vector<float> global_avg_pool(const Tensor& x) {
  std::vector<float> y(static_cast<std::size_t>(x.c));
  const double inv = 1.0 / (static_cast<double>(x.h) * x.w);
  for (int c = 0; c < x.c; ++c) {
    double acc = 0.0;
    for (int yy = 0; yy < x.h; ++yy)
      for (int xx = 0; xx < x.w; ++xx) acc += x.at(c, yy, xx);
    y[static_cast<std::size_t>(c)] = static_cast<float>(acc * inv);
  }
  return y;
}

Tensor global_avg_pool_backward(int c, int h, int w, const std::vector<float>& gy) {
  Tensor gx(c, h, w);
  const float inv = 1.f / (static_cast<float>(h) * w);
  for (int ci = 0; ci < c; ++ci) {
    const float g = gy[static_cast<std::size_t>(ci)] * inv;
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx) gx.at(ci, yy, xx) = g;
  }
  return gx;
}

std::vector<float> flatten(const Tensor& x) { return x.v; }

Tensor unflatten(int c, int h, int w, const std::vector<float>& x) {
  Tensor t(c, h, w);
  if (x.size() != t.v.size()) throw ShapeError("unflatten: size mismatch");
  t.v = x;
  return t;
}

std::vector<double> softmax(const std::vector<float>& logits) {
  double m = -1e300;
  for (float v : logits) m = std::max(m, static_cast<double>(v));
  double denom = 0.0;
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - m);
    denom += p[i];
  }
  for (double& v : p) v /= denom;
  return p;
}

double softmax_cross_entropy(const std::vector<float>& logits, int target,
                             std::vector<float>* grad) {
  if (target < 0 || target >= static_cast<int>(logits.size()))
    throw ValueError("cross-entropy: target out of range");
  double m = -1e300;
  for (float v : logits) m = std::max(m, static_cast<double>(v));
  double denom = 0.0;
  for (float v : logits) denom += std::exp(static_cast<double>(v) - m);
  const double log_denom = std::log(denom);
  const double loss = -(static_cast<double>(logits[target]) - m - log_denom);
  if (grad) {
    grad->resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double p = std::exp(static_cast<double>(logits[i]) - m - log_denom);
      (*grad)[i] = static_cast<float>(p - (static_cast<int>(i) == target ? 1.0 : 0.0));
    }
  }
  return loss;
}

double bce_with_logit(double logit, double target, double* dlogit) {
  const double loss =
      std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
  if (dlogit) {
    const double s = logit >= 0.0 ? 1.0 / (1.0 + std::exp(-logit))
                                  : std::exp(logit) / (1.0 + std::exp(logit));
    *dlogit = s - target;
  }
  return loss;
}

void Adam::init(const std::vector<ParamTensor*>& ps) {
  slots.assign(ps.size(), {});
  for (std::size_t i = 0; i < ps.size(); ++i) {
    slots[i].m.assign(ps[i]->count(), 0.f);
    slots[i].v.assign(ps[i]->count(), 0.f);
  }
  t = 0;
}

void Adam::step(const std::vector<ParamTensor*>& ps, double grad_scale) {
  if (slots.size() != ps.size()) throw ValueError("adam: step before init");
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ParamTensor& p = *ps[i];
    Slot& s = slots[i];
    for (std::size_t j = 0; j < p.count(); ++j) {
      const double g = static_cast<double>(p.g[j]) * grad_scale;
      const double m = beta1 * s.m[j] + (1.0 - beta1) * g;
      const double v = beta2 * s.v[j] + (1.0 - beta2) * g * g;
      s.m[j] = static_cast<float>(m);
      s.v[j] = static_cast<float>(v);
      p.w[j] -= static_cast<float>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
    }
  }
}

void zero_grads(const std::vector<ParamTensor*>& ps) {
  for (ParamTensor* p : ps) p->zero_grad();
}

}  // namespace calcx::nn
