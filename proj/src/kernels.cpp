#include "slicenet/kernels.hpp"

#include <algorithm>

#include "slicenet/error.hpp"

namespace slicenet::kernels {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + to_string(t.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner extents disagree, " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor out({n, m});
  auto o = out.data();
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = &bv[p * m];
      double* orow = &o[i * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& x, const Tensor& w) {
  require_rank(x, 2, "matmul_nt");
  require_rank(w, 2, "matmul_nt");
  if (x.dim(1) != w.dim(1)) {
    throw DimensionError("matmul_nt: inner extents disagree, " + to_string(x.shape()) + " x " +
                         to_string(w.shape()) + "^T");
  }
  const std::size_t b = x.dim(0), k = x.dim(1), n = w.dim(0);
  Tensor out({b, n});
  auto o = out.data();
  auto xv = x.data();
  auto wv = w.data();
  for (std::size_t i = 0; i < b; ++i) {
    const double* xrow = &xv[i * k];
    for (std::size_t j = 0; j < n; ++j) {
      const double* wrow = &wv[j * k];
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += xrow[p] * wrow[p];
      o[i * n + j] = acc;
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t n = a.dim(0), m = a.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = a[i * m + j];
  return out;
}

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  if (stride == 0) throw ConfigError("convolution stride must be positive");
  const std::size_t padded = extent + 2 * padding;
  if (padded < kernel) {
    throw ConfigError("convolution kernel " + std::to_string(kernel) + " exceeds padded extent " +
                      std::to_string(padded));
  }
  if ((padded - kernel) % stride != 0) {
    throw ConfigError("convolution output extent is not integral: (" + std::to_string(extent) +
                      " + 2*" + std::to_string(padding) + " - " + std::to_string(kernel) + ") / " +
                      std::to_string(stride));
  }
  return (padded - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t padding) {
  require_rank(x, 4, "conv2d input");
  require_rank(k, 4, "conv2d kernels");
  if (x.dim(1) != k.dim(1)) {
    throw DimensionError("conv2d: input channels " + std::to_string(x.dim(1)) +
                         " do not match kernel channels " + std::to_string(k.dim(1)) + " (" +
                         to_string(x.shape()) + " vs " + to_string(k.shape()) + ")");
  }
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t ho = conv_output_extent(h, kh, stride, padding);
  const std::size_t wo = conv_output_extent(w, kw, stride, padding);
  Tensor out({batch, cout, ho, wo});
  auto o = out.data();
  auto xv = x.data();
  auto kv = k.data();
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t n = 0; n < cout; ++n) {
      double* oplane = &o[((b * cout) + n) * ho * wo];
      for (std::size_t c = 0; c < cin; ++c) {
        const double* xplane = &xv[((b * cin) + c) * h * w];
        const double* kplane = &kv[((n * cin) + c) * kh * kw];
        for (std::size_t oy = 0; oy < ho; ++oy) {
          for (std::size_t ox = 0; ox < wo; ++ox) {
            double acc = 0.0;
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                acc += xplane[iy * static_cast<std::ptrdiff_t>(w) + ix] * kplane[ky * kw + kx];
              }
            }
            oplane[oy * wo + ox] += acc;
          }
        }
      }
    }
  }
  return out;
}

void conv2d_backward_input(const Tensor& grad_out, const Tensor& k, std::size_t stride,
                           std::size_t padding, Tensor& grad_x) {
  const std::size_t batch = grad_x.dim(0), cin = grad_x.dim(1), h = grad_x.dim(2),
                    w = grad_x.dim(3);
  const std::size_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t ho = grad_out.dim(2), wo = grad_out.dim(3);
  auto g = grad_out.data();
  auto kv = k.data();
  auto gx = grad_x.data();
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t n = 0; n < cout; ++n) {
      const double* gplane = &g[((b * cout) + n) * ho * wo];
      for (std::size_t c = 0; c < cin; ++c) {
        double* gxplane = &gx[((b * cin) + c) * h * w];
        const double* kplane = &kv[((n * cin) + c) * kh * kw];
        for (std::size_t oy = 0; oy < ho; ++oy) {
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const double go = gplane[oy * wo + ox];
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                gxplane[iy * static_cast<std::ptrdiff_t>(w) + ix] += go * kplane[ky * kw + kx];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_kernel(const Tensor& grad_out, const Tensor& x, std::size_t stride,
                            std::size_t padding, Tensor& grad_k) {
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = grad_k.dim(0), kh = grad_k.dim(2), kw = grad_k.dim(3);
  const std::size_t ho = grad_out.dim(2), wo = grad_out.dim(3);
  auto g = grad_out.data();
  auto xv = x.data();
  auto gk = grad_k.data();
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t n = 0; n < cout; ++n) {
      const double* gplane = &g[((b * cout) + n) * ho * wo];
      for (std::size_t c = 0; c < cin; ++c) {
        const double* xplane = &xv[((b * cin) + c) * h * w];
        double* gkplane = &gk[((n * cin) + c) * kh * kw];
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            double acc = 0.0;
            for (std::size_t oy = 0; oy < ho; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t ox = 0; ox < wo; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                acc += gplane[oy * wo + ox] * xplane[iy * static_cast<std::ptrdiff_t>(w) + ix];
              }
            }
            gkplane[ky * kw + kx] += acc;
          }
        }
      }
    }
  }
}

Tensor narrow(const Tensor& t, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= t.rank()) {
    throw DimensionError("narrow: axis " + std::to_string(axis) + " out of range for " +
                         to_string(t.shape()));
  }
  if (length == 0 || start + length > t.dim(axis)) {
    throw DimensionError("narrow: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") invalid for axis " +
                         std::to_string(axis) + " of " + to_string(t.shape()));
  }
  const AxisSplit s = split_at(t.shape(), axis);
  Shape shape = t.shape();
  shape[axis] = length;
  Tensor out(shape);
  auto src = t.data();
  auto dst = out.data();
  const std::size_t chunk = length * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((o * s.extent + start) * s.inner), chunk,
                dst.begin() + static_cast<std::ptrdiff_t>(o * chunk));
  }
  return out;
}

void narrow_add(Tensor& target, const Tensor& part, std::size_t axis, std::size_t start) {
  const AxisSplit s = split_at(target.shape(), axis);
  const std::size_t length = part.dim(axis);
  const std::size_t chunk = length * s.inner;
  auto dst = target.data();
  auto src = part.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    double* d = &dst[(o * s.extent + start) * s.inner];
    const double* p = &src[o * chunk];
    for (std::size_t i = 0; i < chunk; ++i) d[i] += p[i];
  }
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != b.rank() || axis >= a.rank()) {
    throw DimensionError("concat: incompatible " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis && a.dim(i) != b.dim(i)) {
      throw DimensionError("concat: extents disagree off-axis, " + to_string(a.shape()) +
                           " and " + to_string(b.shape()));
    }
  }
  Shape shape = a.shape();
  shape[axis] += b.dim(axis);
  Tensor out(shape);
  narrow_add(out, a, axis, 0);
  narrow_add(out, b, axis, a.dim(axis));
  return out;
}

void add_inplace(Tensor& target, const Tensor& other) {
  if (target.shape() != other.shape()) {
    throw DimensionError("add: shape mismatch " + to_string(target.shape()) + " vs " +
                         to_string(other.shape()));
  }
  auto t = target.data();
  auto o = other.data();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += o[i];
}

}  // namespace slicenet::kernels
