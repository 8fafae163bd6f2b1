#include "facecap/autodiff/ops.hpp"

#include <cmath>
#include <numbers>

namespace facecap::ad {
namespace {

template <typename T>
void same_tape(Var<T> a, Var<T> b, const char* op) {
  if (a.tape != b.tape || a.tape == nullptr) {
    throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
  }
}

template <typename T>
[[noreturn]] void shape_mismatch(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

// c[m x n] += a[m x k] * b[k x n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      if (aip == T(0)) continue;
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m x k] += g[m x n] * b[k x n]^T
template <typename T>
void gemm_nt(const T* g, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* bp = b + p * n;
      T s = 0;
      for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
      c[i * k + p] += s;
    }
  }
}

// c[k x n] += a[m x k]^T * g[m x n]
template <typename T>
void gemm_tn(const T* a, const T* g, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      if (aip == T(0)) continue;
      T* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * gi[j];
    }
  }
}

template <typename T>
Var<T> unary(Var<T> a, Tensor<T> out, T (*dfdx)(T x, T y)) {
  return a.tape->record(std::move(out), {a.id}, [ia = a.id, dfdx](Tape<T>& t, std::size_t self) {
    const auto& x = t.value(ia).data;
    const auto& y = t.value(self).data;
    const auto& g = t.grad_buffer(self);
    auto& gx = t.grad_buffer(ia);
    for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * dfdx(x[k], y[k]);
  });
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  same_tape(a, b, "matmul");
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.rows()) shape_mismatch("matmul", av, bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor<T> out(m, n);
  gemm_nn(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
  return a.tape->record(std::move(out), {a.id, b.id},
                        [ia = a.id, ib = b.id, m, k, n](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad_buffer(self);
                          if (t.requires_grad(ia)) {
                            gemm_nt(g.data(), t.value(ib).data.data(), t.grad_buffer(ia).data(), m,
                                    n, k);
                          }
                          if (t.requires_grad(ib)) {
                            gemm_tn(t.value(ia).data.data(), g.data(), t.grad_buffer(ib).data(), m,
                                    k, n);
                          }
                        });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  same_tape(a, b, "add");
  const auto& av = a.value();
  const auto& bv = b.value();
  const bool broadcast = !av.same_shape(bv);
  if (broadcast && !(bv.rows() == 1 && bv.cols() == av.cols())) shape_mismatch("add", av, bv);
  Tensor<T> out = av;
  const std::size_t n = av.cols();
  for (std::size_t k = 0; k < out.size(); ++k) out.data[k] += bv.data[broadcast ? k % n : k];
  return a.tape->record(std::move(out), {a.id, b.id},
                        [ia = a.id, ib = b.id, broadcast, n](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad_buffer(self);
                          if (t.requires_grad(ia)) {
                            auto& ga = t.grad_buffer(ia);
                            for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
                          }
                          if (t.requires_grad(ib)) {
                            auto& gb = t.grad_buffer(ib);
                            for (std::size_t k = 0; k < g.size(); ++k) gb[broadcast ? k % n : k] += g[k];
                          }
                        });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return add(a, scale(b, T(-1)));
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  same_tape(a, b, "mul");
  const auto& av = a.value();
  const auto& bv = b.value();
  if (!av.same_shape(bv)) shape_mismatch("mul", av, bv);
  Tensor<T> out = av;
  for (std::size_t k = 0; k < out.size(); ++k) out.data[k] *= bv.data[k];
  return a.tape->record(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    if (t.requires_grad(ia)) {
      const auto& y = t.value(ib).data;
      auto& ga = t.grad_buffer(ia);
      for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * y[k];
    }
    if (t.requires_grad(ib)) {
      const auto& x = t.value(ia).data;
      auto& gb = t.grad_buffer(ib);
      for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * x[k];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v *= s;
  return a.tape->record(std::move(out), {a.id}, [ia = a.id, s](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * s;
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T s = 0;
  for (T v : a.value().data) s += v;
  return a.tape->record(Tensor<T>(1, 1, s), {a.id}, [ia = a.id](Tape<T>& t, std::size_t self) {
    const T g = t.grad_buffer(self)[0];
    for (auto& v : t.grad_buffer(ia)) v += g;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const auto n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(n));
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  const auto& first = parts.front().value();
  std::size_t rows = 0, cols = 0;
  for (const auto& p : parts) {
    same_tape(parts.front(), p, "concat");
    const auto& v = p.value();
    if (axis == 0) {
      if (v.cols() != first.cols()) shape_mismatch("concat", first, v);
      rows += v.rows();
    } else {
      if (v.rows() != first.rows()) shape_mismatch("concat", first, v);
      cols += v.cols();
    }
  }
  if (axis == 0) cols = first.cols();
  else rows = first.rows();

  Tensor<T> out(rows, cols);
  std::vector<std::size_t> ids;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    ids.push_back(p.id);
    for (std::size_t r = 0; r < v.rows(); ++r) {
      for (std::size_t c = 0; c < v.cols(); ++c) {
        if (axis == 0) out.at(off + r, c) = v.at(r, c);
        else out.at(r, off + c) = v.at(r, c);
      }
    }
    off += axis == 0 ? v.rows() : v.cols();
  }
  return parts.front().tape->record(std::move(out), ids, [ids, axis, cols](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const auto& v = t.value(id);
      const std::size_t pr = v.rows(), pc = v.cols();
      if (t.requires_grad(id)) {
        auto& gp = t.grad_buffer(id);
        for (std::size_t r = 0; r < pr; ++r) {
          for (std::size_t c = 0; c < pc; ++c) {
            gp[r * pc + c] += axis == 0 ? g[(off + r) * cols + c] : g[r * cols + off + c];
          }
        }
      }
      off += axis == 0 ? pr : pc;
    }
  });
}

template <typename T>
Var<T> slice(Var<T> a, int axis, std::size_t begin, std::size_t count) {
  const auto& av = a.value();
  if (axis != 0 && axis != 1) throw ShapeError("slice: axis must be 0 or 1");
  const std::size_t extent = axis == 0 ? av.rows() : av.cols();
  if (begin + count > extent) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") exceeds axis " + std::to_string(axis) + " of " + av.shape_string());
  }
  const std::size_t rows = axis == 0 ? count : av.rows();
  const std::size_t cols = axis == 1 ? count : av.cols();
  const std::size_t r0 = axis == 0 ? begin : 0, c0 = axis == 1 ? begin : 0;
  const std::size_t src_cols = av.cols();
  Tensor<T> out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = av.at(r0 + r, c0 + c);
  }
  return a.tape->record(std::move(out), {a.id},
                        [ia = a.id, rows, cols, r0, c0, src_cols](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad_buffer(self);
                          auto& ga = t.grad_buffer(ia);
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t c = 0; c < cols; ++c) {
                              ga[(r0 + r) * src_cols + c0 + c] += g[r * cols + c];
                            }
                          }
                        });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  const auto& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor<T> out(n, m);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out.at(c, r) = av.at(r, c);
  }
  return a.tape->record(std::move(out), {a.id}, [ia = a.id, m, n](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    auto& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[c * m + r];
    }
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  same_tape(x, gain, "layer_norm");
  same_tape(x, bias, "layer_norm");
  const auto& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gain.value().shape != std::vector<std::size_t>{1, n}) shape_mismatch("layer_norm", xv, gain.value());
  if (bias.value().shape != std::vector<std::size_t>{1, n}) shape_mismatch("layer_norm", xv, bias.value());
  const auto& gv = gain.value().data;
  const auto& bv = bias.value().data;

  Tensor<T> out(m, n);
  std::vector<T> xhat(m * n), inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    T mu = 0;
    for (std::size_t c = 0; c < n; ++c) mu += xv.at(r, c);
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t c = 0; c < n; ++c) var += (xv.at(r, c) - mu) * (xv.at(r, c) - mu);
    var /= static_cast<T>(n);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat[r * n + c] = (xv.at(r, c) - mu) * inv_std[r];
      out.at(r, c) = xhat[r * n + c] * gv[c] + bv[c];
    }
  }
  return x.tape->record(
      std::move(out), {x.id, gain.id, bias.id},
      [ix = x.id, ig = gain.id, ib = bias.id, m, n, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad_buffer(self);
        if (t.requires_grad(ig)) {
          auto& gg = t.grad_buffer(ig);
          for (std::size_t k = 0; k < g.size(); ++k) gg[k % n] += g[k] * xhat[k];
        }
        if (t.requires_grad(ib)) {
          auto& gb = t.grad_buffer(ib);
          for (std::size_t k = 0; k < g.size(); ++k) gb[k % n] += g[k];
        }
        if (t.requires_grad(ix)) {
          const auto& gv = t.value(ig).data;
          auto& gx = t.grad_buffer(ix);
          for (std::size_t r = 0; r < m; ++r) {
            T mean_d = 0, mean_dx = 0;
            for (std::size_t c = 0; c < n; ++c) {
              const T d = g[r * n + c] * gv[c];
              mean_d += d;
              mean_dx += d * xhat[r * n + c];
            }
            mean_d /= static_cast<T>(n);
            mean_dx /= static_cast<T>(n);
            for (std::size_t c = 0; c < n; ++c) {
              const T d = g[r * n + c] * gv[c];
              gx[r * n + c] += inv_std[r] * (d - mean_d - xhat[r * n + c] * mean_dx);
            }
          }
        }
      });
}

template <typename T>
Var<T> softmax(Var<T> a, int axis) {
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  const auto& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  // Lines run along `axis`: for axis 1 each row is normalised.
  const std::size_t lines = axis == 1 ? m : n;
  const std::size_t len = axis == 1 ? n : m;
  const std::size_t stride = axis == 1 ? 1 : n;
  const std::size_t line_step = axis == 1 ? n : 1;
  Tensor<T> out(m, n);
  for (std::size_t l = 0; l < lines; ++l) {
    const std::size_t base = l * line_step;
    T mx = av.data[base];
    for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, av.data[base + k * stride]);
    T z = 0;
    for (std::size_t k = 0; k < len; ++k) {
      const T e = std::exp(av.data[base + k * stride] - mx);
      out.data[base + k * stride] = e;
      z += e;
    }
    for (std::size_t k = 0; k < len; ++k) out.data[base + k * stride] /= z;
  }
  return a.tape->record(std::move(out), {a.id},
                        [ia = a.id, lines, len, stride, line_step](Tape<T>& t, std::size_t self) {
                          const auto& g = t.grad_buffer(self);
                          const auto& y = t.value(self).data;
                          auto& ga = t.grad_buffer(ia);
                          for (std::size_t l = 0; l < lines; ++l) {
                            const std::size_t base = l * line_step;
                            T dot = 0;
                            for (std::size_t k = 0; k < len; ++k) {
                              dot += g[base + k * stride] * y[base + k * stride];
                            }
                            for (std::size_t k = 0; k < len; ++k) {
                              const std::size_t i = base + k * stride;
                              ga[i] += y[i] * (g[i] - dot);
                            }
                          }
                        });
}

template <typename T>
Var<T> gelu(Var<T> a) {
  Tensor<T> out = a.value();
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (auto& v : out.data) v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  return unary<T>(a, std::move(out), [](T x, T) {
    const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    const T pdf = std::exp(T(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
    return T(0.5) * (T(1) + std::erf(x * inv_sqrt2)) + x * pdf;
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  return unary<T>(a, std::move(out), [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  return add(matmul(x, w), b);
}

template <typename T>
Var<T> l1_loss(Var<T> pred, Var<T> target) {
  same_tape(pred, target, "l1_loss");
  const auto& pv = pred.value();
  const auto& tv = target.value();
  if (!pv.same_shape(tv)) shape_mismatch("l1_loss", pv, tv);
  if (pv.size() == 0) throw ShapeError("l1_loss: empty tensors");
  T s = 0;
  for (std::size_t k = 0; k < pv.size(); ++k) s += std::abs(pv.data[k] - tv.data[k]);
  const T inv_n = T(1) / static_cast<T>(pv.size());
  return pred.tape->record(Tensor<T>(1, 1, s * inv_n), {pred.id, target.id},
                           [ip = pred.id, it = target.id, inv_n](Tape<T>& t, std::size_t self) {
                             const T g = t.grad_buffer(self)[0] * inv_n;
                             const auto& p = t.value(ip).data;
                             const auto& q = t.value(it).data;
                             const bool gp = t.requires_grad(ip), gt = t.requires_grad(it);
                             for (std::size_t k = 0; k < p.size(); ++k) {
                               const T d = p[k] - q[k];
                               const T sgn = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
                               if (gp) t.grad_buffer(ip)[k] += g * sgn;
                               if (gt) t.grad_buffer(it)[k] -= g * sgn;
                             }
                           });
}

#define FACECAP_AD_INSTANTIATE(T)                                                   \
  template Var<T> matmul(Var<T>, Var<T>);                                           \
  template Var<T> add(Var<T>, Var<T>);                                              \
  template Var<T> sub(Var<T>, Var<T>);                                              \
  template Var<T> mul(Var<T>, Var<T>);                                              \
  template Var<T> scale(Var<T>, T);                                                 \
  template Var<T> sum(Var<T>);                                                      \
  template Var<T> mean(Var<T>);                                                     \
  template Var<T> concat(const std::vector<Var<T>>&, int);                          \
  template Var<T> slice(Var<T>, int, std::size_t, std::size_t);                     \
  template Var<T> transpose(Var<T>);                                                \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                            \
  template Var<T> softmax(Var<T>, int);                                             \
  template Var<T> gelu(Var<T>);                                                     \
  template Var<T> relu(Var<T>);                                                     \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                   \
  template Var<T> l1_loss(Var<T>, Var<T>);

FACECAP_AD_INSTANTIATE(float)
FACECAP_AD_INSTANTIATE(double)

#undef FACECAP_AD_INSTANTIATE

}  // namespace facecap::ad
