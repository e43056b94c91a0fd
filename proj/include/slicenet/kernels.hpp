#pragma once

// Plain loop kernels on tensors. No recording; the autodiff ops and the
// incremental-inference engine both call into these.

#include <cstddef>

#include "slicenet/tensor.hpp"

namespace slicenet::kernels {

/// [N x K] * [K x M] -> [N x M]
Tensor matmul(const Tensor& a, const Tensor& b);
/// x [B x K] times w^T where w is [N x K] -> [B x N]
Tensor matmul_nt(const Tensor& x, const Tensor& w);
Tensor transpose(const Tensor& a);

/// Output extent of a convolution along one spatial axis. Throws ConfigError
/// when (extent + 2*padding - kernel) is not divisible by stride.
std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

/// Cross-correlation. x [B x C x H x W], k [N x C x kh x kw] -> [B x N x H' x W'].
Tensor conv2d(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t padding);
/// Accumulates d(out)/d(x) contracted with grad_out into grad_x.
void conv2d_backward_input(const Tensor& grad_out, const Tensor& k, std::size_t stride,
                           std::size_t padding, Tensor& grad_x);
/// Accumulates d(out)/d(k) contracted with grad_out into grad_k.
void conv2d_backward_kernel(const Tensor& grad_out, const Tensor& x, std::size_t stride,
                            std::size_t padding, Tensor& grad_k);

/// Contiguous sub-range [start, start+length) along one axis.
Tensor narrow(const Tensor& t, std::size_t axis, std::size_t start, std::size_t length);
/// Adds `part` into the [start, start+length) range of `target` along `axis`.
void narrow_add(Tensor& target, const Tensor& part, std::size_t axis, std::size_t start);
/// Concatenates along `axis`; all other extents must agree.
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);

void add_inplace(Tensor& target, const Tensor& other);

}  // namespace slicenet::kernels
