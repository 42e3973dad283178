#include "pcnssm/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>

#include "pcnssm/error.hpp"

namespace pcnssm::ad {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(std::span<const double> data, std::size_t rows,
                   std::size_t cols) {
  return ConstMap(data.data(), static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::span<double> data, std::size_t rows, std::size_t cols) {
  return MutMap(data.data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

}  // namespace

Tensor linear(Graph& g, const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() < 1 || w.rank() != 2 || x.shape().back() != w.dim(0)) {
    throw DimensionError("linear: input " + to_string(x.shape()) +
                         " incompatible with weight " + to_string(w.shape()));
  }
  const std::size_t din = w.dim(0);
  const std::size_t dout = w.dim(1);
  if (b.defined() && (b.rank() != 1 || b.dim(0) != dout)) {
    throw DimensionError("linear: bias " + to_string(b.shape()) +
                         " incompatible with weight " + to_string(w.shape()));
  }
  const std::size_t rows = x.size() / din;
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  const bool tracked = g.tracks({&x, &w, &b});
  Tensor out = Tensor::zeros(out_shape, tracked);

  auto y = as_matrix(out.mutable_values(), rows, dout);
  y.noalias() = as_matrix(x.values(), rows, din) * as_matrix(w.values(), din, dout);
  if (b.defined()) {
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(
        b.values().data(), static_cast<Eigen::Index>(dout));
  }

  if (tracked) {
    g.record("linear", {x, w, b}, out, [x, w, b, out, rows, din, dout]() mutable {
      auto dy = as_matrix(out.grad(), rows, dout);
      if (x.requires_grad()) {
        as_matrix(x.grad_buffer(), rows, din).noalias() +=
            dy * as_matrix(w.values(), din, dout).transpose();
      }
      if (w.requires_grad()) {
        as_matrix(w.grad_buffer(), din, dout).noalias() +=
            as_matrix(x.values(), rows, din).transpose() * dy;
      }
      if (b.defined() && b.requires_grad()) {
        Eigen::Map<Eigen::RowVectorXd>(b.grad_buffer().data(),
                                       static_cast<Eigen::Index>(dout)) +=
            dy.colwise().sum();
      }
    });
  }
  return out;
}

Tensor relu(Graph& g, const Tensor& x) {
  const bool tracked = g.tracks({&x});
  Tensor out = Tensor::zeros(x.shape(), tracked);
  auto in = x.values();
  auto y = out.mutable_values();
  for (std::size_t i = 0; i < in.size(); ++i) y[i] = in[i] < 0.0 ? 0.0 : in[i];  // NaN propagates
  if (tracked) {
    g.record("relu", {x}, out, [x, out]() mutable {
      auto in = x.values();
      auto dy = out.grad();
      auto dx = x.grad_buffer();
      for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i] > 0.0) dx[i] += dy[i];
      }
    });
  }
  return out;
}

Tensor max_over_set(Graph& g, const Tensor& x) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw DimensionError("max_over_set: expected [B,N,D] or [N,D], got " +
                         to_string(x.shape()));
  }
  const std::size_t batch = x.rank() == 3 ? x.dim(0) : 1;
  const std::size_t n = x.dim(x.rank() - 2);
  const std::size_t d = x.dim(x.rank() - 1);
  if (n == 0) throw EmptySetError("max_over_set: set axis is empty");

  Shape out_shape = x.rank() == 3 ? Shape{batch, d} : Shape{d};
  const bool tracked = g.tracks({&x});
  Tensor out = Tensor::zeros(out_shape, tracked);
  std::vector<std::size_t> argmax(batch * d, 0);
  auto in = x.values();
  auto y = out.mutable_values();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* base = in.data() + b * n * d;
    double* best = y.data() + b * d;
    std::size_t* arg = argmax.data() + b * d;
    std::copy(base, base + d, best);
    for (std::size_t i = 1; i < n; ++i) {
      const double* row = base + i * d;
      for (std::size_t c = 0; c < d; ++c) {
        if (row[c] > best[c]) {
          best[c] = row[c];
          arg[c] = i;
        }
      }
    }
  }
  if (tracked) {
    g.record("max_over_set", {x}, out,
             [x, out, argmax = std::move(argmax), batch, n, d]() mutable {
               auto dy = out.grad();
               auto dx = x.grad_buffer();
               for (std::size_t b = 0; b < batch; ++b) {
                 for (std::size_t c = 0; c < d; ++c) {
                   dx[(b * n + argmax[b * d + c]) * d + c] += dy[b * d + c];
                 }
               }
             });
  }
  return out;
}

Tensor tile(Graph& g, const Tensor& x, std::size_t n) {
  if (x.rank() != 2) {
    throw DimensionError("tile: expected [B,D], got " + to_string(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t d = x.dim(1);
  const bool tracked = g.tracks({&x});
  Tensor out = Tensor::zeros({batch, n, d}, tracked);
  auto in = x.values();
  auto y = out.mutable_values();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(in.data() + b * d, d, y.data() + (b * n + i) * d);
    }
  }
  if (tracked) {
    g.record("tile", {x}, out, [x, out, batch, n, d]() mutable {
      auto dy = out.grad();
      auto dx = x.grad_buffer();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
          const double* src = dy.data() + (b * n + i) * d;
          double* dst = dx.data() + b * d;
          for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
        }
      }
    });
  }
  return out;
}

Tensor concat(Graph& g, const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw EmptySetError("concat: no inputs");
  const Shape& first = xs.front().shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) +
                         " out of range for " + to_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& t : xs) {
    const Shape& s = t.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) ok = false;
    }
    if (!ok || s[axis] == 0) {
      throw DimensionError("concat: cannot join " + to_string(first) +
                           " with " + to_string(s) + " along axis " +
                           std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_stride = out_shape[axis] * inner;

  const bool tracked = g.tracks(std::span<const Tensor>(xs));
  Tensor out = Tensor::zeros(out_shape, tracked);
  auto y = out.mutable_values();
  std::size_t offset = 0;
  for (const Tensor& t : xs) {
    const std::size_t chunk = t.dim(axis) * inner;
    auto in = t.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(in.data() + o * chunk, chunk, y.data() + o * out_stride + offset);
    }
    offset += chunk;
  }
  if (tracked) {
    g.record("concat", xs, out, [xs, out, axis, outer, inner, out_stride]() mutable {
      auto dy = out.grad();
      std::size_t offset = 0;
      for (const Tensor& t : xs) {
        const std::size_t chunk = t.dim(axis) * inner;
        if (t.requires_grad()) {
          auto dx = t.grad_buffer();
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = dy.data() + o * out_stride + offset;
            double* dst = dx.data() + o * chunk;
            for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
          }
        }
        offset += chunk;
      }
    });
  }
  return out;
}

Tensor reshape(Graph& g, const Tensor& x, Shape shape) {
  if (element_count(shape) != x.size()) {
    throw DimensionError("reshape: " + to_string(x.shape()) + " to " +
                         to_string(shape) + " changes the element count");
  }
  const bool tracked = g.tracks({&x});
  auto in = x.values();
  Tensor out = Tensor::from(std::move(shape),
                            std::vector<double>(in.begin(), in.end()), tracked);
  if (tracked) {
    g.record("reshape", {x}, out, [x, out]() mutable {
      auto dy = out.grad();
      auto dx = x.grad_buffer();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    });
  }
  return out;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
  const bool tracked = g.tracks({&a, &b});
  Tensor out = Tensor::zeros(a.shape(), tracked);
  auto y = out.mutable_values();
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = va[i] + vb[i];
  if (tracked) {
    g.record("add", {a, b}, out, [a, b, out]() mutable {
      auto dy = out.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto dx = t->grad_buffer();
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
      }
    });
  }
  return out;
}

Tensor scale(Graph& g, const Tensor& x, double factor) {
  const bool tracked = g.tracks({&x});
  Tensor out = Tensor::zeros(x.shape(), tracked);
  auto y = out.mutable_values();
  auto in = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = factor * in[i];
  if (tracked) {
    g.record("scale", {x}, out, [x, out, factor]() mutable {
      auto dy = out.grad();
      auto dx = x.grad_buffer();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += factor * dy[i];
    });
  }
  return out;
}

Tensor sum(Graph& g, const Tensor& x) {
  const bool tracked = g.tracks({&x});
  double total = 0.0;
  for (double v : x.values()) total += v;
  Tensor out = Tensor::scalar(total, tracked);
  if (tracked) {
    g.record("sum", {x}, out, [x, out]() mutable {
      const double dy = out.grad()[0];
      for (double& d : x.grad_buffer()) d += dy;
    });
  }
  return out;
}

}  // namespace pcnssm::ad
