#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "calcx/image.hpp"
#include "calcx/rng.hpp"

namespace calcx::nn {

// CHW float tensor. All layers below run single-threaded with fixed loop
// order, so results are bit-reproducible for a given seed.
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_, float fill = 0.f)
      : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, fill) {}

  float& at(int ci, int y, int x) {
    return v[(static_cast<std::size_t>(ci) * h + y) * w + x];
  }
  float at(int ci, int y, int x) const {
    return v[(static_cast<std::size_t>(ci) * h + y) * w + x];
  }
  std::size_t size() const { return v.size(); }
};

Tensor tensor_from_image(const Image& img);
Image image_from_tensor(const Tensor& t);  // single channel, values clamped to [0,1]

// A named parameter block with its gradient accumulator.
struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> w;
  std::vector<float> g;

  void resize(std::vector<int> s);
  void zero_grad() { std::fill(g.begin(), g.end(), 0.f); }
  std::size_t count() const { return w.size(); }
};

struct Conv2d {
  int in_c = 0, out_c = 0, k = 0, stride = 1;
  int pad_t = 0, pad_l = 0, pad_b = 0, pad_r = 0;
  ParamTensor weight;  // {out_c, in_c, k, k}
  ParamTensor bias;    // {out_c}

  Conv2d() = default;
  Conv2d(const std::string& name, int in_c, int out_c, int k, int stride, int pad);
  void set_padding(int t, int l, int b, int r);
  void init(Rng& rng);  // He initialization, zero bias
  int out_h(int in_h) const { return (in_h + pad_t + pad_b - k) / stride + 1; }
  int out_w(int in_w) const { return (in_w + pad_l + pad_r - k) / stride + 1; }
  Tensor forward(const Tensor& x) const;
  // Accumulates into weight.g / bias.g and returns the input gradient.
  Tensor backward(const Tensor& x, const Tensor& gy);
  std::vector<ParamTensor*> params() { return {&weight, &bias}; }
};

// Transposed convolution with symmetric padding: out = (in-1)*stride - 2*pad + k.
struct ConvT2d {
  int in_c = 0, out_c = 0, k = 0, stride = 1, pad = 0;
  ParamTensor weight;  // {in_c, out_c, k, k}
  ParamTensor bias;    // {out_c}

  ConvT2d() = default;
  ConvT2d(const std::string& name, int in_c, int out_c, int k, int stride, int pad);
  void init(Rng& rng);
  int out_h(int in_h) const { return (in_h - 1) * stride - 2 * pad + k; }
  int out_w(int in_w) const { return (in_w - 1) * stride - 2 * pad + k; }
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& gy);
  std::vector<ParamTensor*> params() { return {&weight, &bias}; }
};

struct Linear {
  int in_n = 0, out_n = 0;
  ParamTensor weight;  // {out_n, in_n}
  ParamTensor bias;    // {out_n}

  Linear() = default;
  Linear(const std::string& name, int in_n, int out_n);
  void init(Rng& rng);
  std::vector<float> forward(const std::vector<float>& x) const;
  std::vector<float> backward(const std::vector<float>& x, const std::vector<float>& gy);
  std::vector<ParamTensor*> params() { return {&weight, &bias}; }
};

// Elementwise activations. Backward variants take the pre-activation input
// (or the output for sigmoid) plus the upstream gradient.
Tensor leaky_relu(const Tensor& x, float slope);
Tensor leaky_relu_backward(const Tensor& x, const Tensor& gy, float slope);
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& gy);
Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward_from_output(const Tensor& y, const Tensor& gy);

// Global average pooling (C,H,W) -> C and its backward.
std::vector<float> global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(int c, int h, int w, const std::vector<float>& gy);

std::vector<float> flatten(const Tensor& x);
Tensor unflatten(int c, int h, int w, const std::vector<float>& x);

// Numerically stable 2-class (or n-class) softmax cross-entropy.
// Returns the loss; writes d(loss)/d(logits) when grad is non-null.
double softmax_cross_entropy(const std::vector<float>& logits, int target,
                             std::vector<float>* grad);
std::vector<double> softmax(const std::vector<float>& logits);

// Stable binary cross-entropy on a logit. target is 0 or 1.
double bce_with_logit(double logit, double target, double* dlogit);

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long t = 0;
  struct Slot {
    std::vector<float> m, v;
  };
  std::vector<Slot> slots;

  void init(const std::vector<ParamTensor*>& ps);
  // w -= lr * mhat / (sqrt(vhat) + eps), using g * grad_scale as the gradient.
  void step(const std::vector<ParamTensor*>& ps, double grad_scale);
};

void zero_grads(const std::vector<ParamTensor*>& ps);

}  // namespace calcx::nn
