#include "viteraser/layers.hpp"

#include <cmath>

namespace viteraser {

void trunc_normal_(torch::Tensor& tensor, double std) {
  torch::NoGradGuard no_grad;
  // Sample uniformly between the CDF values of the bounds, then invert.
  const double lower = std::erf(-2.0 / std::sqrt(2.0));
  const double upper = -lower;
  tensor.uniform_(lower, upper);
  tensor.erfinv_();
  tensor.mul_(std * std::sqrt(2.0));
  tensor.clamp_(-2.0 * std, 2.0 * std);
}

namespace {

// Visits `module` and every descendant. modules(include_self=true) needs the
// module to live in a shared_ptr, which is not yet the case inside a
// constructor.
template <typename Fn>
void visit_modules(torch::nn::Module& module, Fn&& fn) {
  fn(module);
  for (auto& m : module.modules(/*include_self=*/false)) fn(*m);
}

}  // namespace

void init_transformer_weights(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  visit_modules(module, [](torch::nn::Module& m) {
    if (auto* dense = m.as<DenseImpl>()) {
      trunc_normal_(dense->weight, 0.02);
      if (dense->bias.defined()) dense->bias.zero_();
    } else if (auto* linear = m.as<torch::nn::Linear>()) {
      trunc_normal_(linear->weight, 0.02);
      if (linear->bias.defined()) linear->bias.zero_();
    } else if (auto* norm = m.as<torch::nn::LayerNorm>()) {
      if (norm->weight.defined()) norm->weight.fill_(1.0);
      if (norm->bias.defined()) norm->bias.zero_();
    }
  });
}

void init_conv_weights(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  visit_modules(module, [](torch::nn::Module& m) {
    if (auto* conv = m.as<ConvImpl>()) {
      const auto fan_in = conv->weight.numel() / conv->weight.size(0);
      conv->weight.normal_(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* conv = m.as<torch::nn::Conv2d>()) {
      const auto fan_in = conv->weight.numel() / conv->weight.size(0);
      conv->weight.normal_(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
      if (conv->bias.defined()) conv->bias.zero_();
    }
  });
}

DenseImpl::DenseImpl(std::int64_t in, std::int64_t out, bool with_bias) {
  weight = register_parameter("weight", torch::empty({out, in}));
  if (with_bias) bias = register_parameter("bias", torch::zeros({out}));
}

ConvImpl::ConvImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride,
                   std::int64_t padding, bool with_bias)
    : stride(stride), padding(padding) {
  weight = register_parameter("weight", torch::empty({out, in, kernel, kernel}));
  if (with_bias) bias = register_parameter("bias", torch::zeros({out}));
}

Conv conv1x1(std::int64_t in, std::int64_t out, bool bias) { return Conv(in, out, 1, 1, 0, bias); }

Conv conv3x3(std::int64_t in, std::int64_t out, bool bias) { return Conv(in, out, 3, 1, 1, bias); }

SpectralNorm::SpectralNorm(torch::nn::Module& owner, const torch::Tensor& weight, std::int64_t dim)
    : dim_(dim) {
  torch::NoGradGuard no_grad;
  const auto mat = as_matrix(weight);
  u_ = owner.register_buffer("sn_u", torch::nn::functional::normalize(
                                         torch::randn({mat.size(0)}, weight.options()),
                                         torch::nn::functional::NormalizeFuncOptions().dim(0)));
  v_ = owner.register_buffer("sn_v", torch::nn::functional::normalize(
                                         torch::randn({mat.size(1)}, weight.options()),
                                         torch::nn::functional::NormalizeFuncOptions().dim(0)));
  // A few warm-up iterations so that an untrained module in eval mode
  // already divides by a sensible estimate.
  for (int i = 0; i < 3; ++i) normalize(weight, /*update=*/true);
}

torch::Tensor SpectralNorm::as_matrix(const torch::Tensor& weight) const {
  auto w = weight;
  if (dim_ != 0) {
    std::vector<std::int64_t> order{dim_};
    for (std::int64_t d = 0; d < w.dim(); ++d) {
      if (d != dim_) order.push_back(d);
    }
    w = w.permute(order);
  }
  return w.reshape({w.size(0), -1});
}

torch::Tensor SpectralNorm::normalize(const torch::Tensor& weight, bool update) {
  const auto mat = as_matrix(weight);
  const auto opts = torch::nn::functional::NormalizeFuncOptions().dim(0).eps(1e-12);
  if (update) {
    torch::NoGradGuard no_grad;
    const auto w = mat.detach();
    v_.copy_(torch::nn::functional::normalize(torch::mv(w.t(), u_), opts));
    u_.copy_(torch::nn::functional::normalize(torch::mv(w, v_), opts));
  }
  // The graph must not alias the persistent buffers, which the next forward
  // updates in place.
  const auto u = u_.clone();
  const auto v = v_.clone();
  const auto sigma = torch::dot(u, torch::mv(mat, v));
  // An all-zero weight has sigma 0; keep it zero instead of 0/0.
  return weight / sigma.clamp_min(1e-12);
}

torch::Tensor SpectralNorm::sigma(const torch::Tensor& weight) const {
  torch::NoGradGuard no_grad;
  return torch::dot(u_, torch::mv(as_matrix(weight), v_));
}

SNConv2dImpl::SNConv2dImpl(std::int64_t in, std::int64_t out, std::int64_t kernel,
                           std::int64_t stride_, std::int64_t padding_)
    : stride(stride_), padding(padding_) {
  weight = register_parameter("weight", torch::empty({out, in, kernel, kernel}));
  bias = register_parameter("bias", torch::zeros({out}));
  {
    torch::NoGradGuard no_grad;
    weight.normal_(0.0, 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel)));
  }
  sn = SpectralNorm(*this, weight, 0);
}

torch::Tensor SNConv2dImpl::normalized_weight() { return sn.normalize(weight, is_training()); }

torch::Tensor SNConv2dImpl::forward(const torch::Tensor& x) {
  return torch::conv2d(x, normalized_weight(), bias, stride, padding);
}

SNConvTranspose2dImpl::SNConvTranspose2dImpl(std::int64_t in, std::int64_t out,
                                             std::int64_t kernel, std::int64_t stride_,
                                             std::int64_t padding_, std::int64_t output_padding_)
    : stride(stride_), padding(padding_), output_padding(output_padding_) {
  weight = register_parameter("weight", torch::empty({in, out, kernel, kernel}));
  bias = register_parameter("bias", torch::zeros({out}));
  {
    torch::NoGradGuard no_grad;
    weight.normal_(0.0, 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel)));
  }
  sn = SpectralNorm(*this, weight, 1);
}

torch::Tensor SNConvTranspose2dImpl::normalized_weight() {
  return sn.normalize(weight, is_training());
}

torch::Tensor SNConvTranspose2dImpl::forward(const torch::Tensor& x) {
  return torch::conv_transpose2d(x, normalized_weight(), bias, stride, padding, output_padding);
}

}  // namespace viteraser
