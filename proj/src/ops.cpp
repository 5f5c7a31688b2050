#include "cabin/ops.hpp"

#include <cmath>
#include <string>

#include "cabin/random.hpp"

namespace cabin::num {

namespace {

thread_local bool g_finite_checks = false;

std::string shape_of(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

void finite_guard(const Tensor& out, const char* op) {
  if (!g_finite_checks) return;
  const double* v = out.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!std::isfinite(v[i]))
      throw NumericError(std::string("non-finite output of op ") + op);
}

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("add: " + shape_of(a) + " vs " + shape_of(b));
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = a.data()[i] + b.data()[i];
  finite_guard(out, "add");
  if (recording({&a, &b})) {
    out.ensure_grad();
    Tensor ca = a, cb = b, co = out;
    Tape::active()->record("add", [ca, cb, co]() mutable {
      const double* g = co.grad_data();
      if (ca.requires_grad())
        for (std::size_t i = 0; i < ca.size(); ++i) ca.grad_data()[i] += g[i];
      if (cb.requires_grad())
        for (std::size_t i = 0; i < cb.size(); ++i) cb.grad_data()[i] += g[i];
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = s * a.data()[i];
  finite_guard(out, "scale");
  if (recording({&a})) {
    out.ensure_grad();
    Tensor ca = a, co = out;
    Tape::active()->record("scale", [ca, co, s]() mutable {
      const double* g = co.grad_data();
      for (std::size_t i = 0; i < ca.size(); ++i) ca.grad_data()[i] += s * g[i];
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: " + shape_of(a) + " vs " + shape_of(b));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(m, n);
  // ikj order so the inner loop streams both b and out rows
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    const double* arow = a.data() + i * k;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = arow[t];
      if (av == 0.0) continue;
      const double* brow = b.data() + t * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  finite_guard(out, "matmul");
  if (recording({&a, &b})) {
    out.ensure_grad();
    Tensor ca = a, cb = b, co = out;
    Tape::active()->record("matmul", [ca, cb, co, m, k, n]() mutable {
      const double* g = co.grad_data();
      if (ca.requires_grad()) {
        // dA = dOut * B^T
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * n;
          double* darow = ca.grad_data() + i * k;
          for (std::size_t t = 0; t < k; ++t) {
            const double* brow = cb.data() + t * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            darow[t] += acc;
          }
        }
      }
      if (cb.requires_grad()) {
        // dB = A^T * dOut
        for (std::size_t i = 0; i < m; ++i) {
          const double* arow = ca.data() + i * k;
          const double* grow = g + i * n;
          for (std::size_t t = 0; t < k; ++t) {
            const double av = arow[t];
            if (av == 0.0) continue;
            double* dbrow = cb.grad_data() + t * n;
            for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  finite_guard(out, "transpose");
  if (recording({&a})) {
    out.ensure_grad();
    Tensor ca = a, co = out;
    Tape::active()->record("transpose", [ca, co]() mutable {
      for (std::size_t i = 0; i < ca.rows(); ++i)
        for (std::size_t j = 0; j < ca.cols(); ++j)
          ca.grad_at(i, j) += co.grad_at(j, i);
    });
  }
  return out;
}

Tensor tanh_op(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = std::tanh(a.data()[i]);
  finite_guard(out, "tanh");
  if (recording({&a})) {
    out.ensure_grad();
    Tensor ca = a, co = out;
    Tape::active()->record("tanh", [ca, co]() mutable {
      const double* y = co.data();
      const double* g = co.grad_data();
      for (std::size_t i = 0; i < ca.size(); ++i)
        ca.grad_data()[i] += (1.0 - y[i] * y[i]) * g[i];
    });
  }
  return out;
}

Tensor conv1d(const Tensor& input, const Tensor& kernel, std::size_t kw,
              std::size_t stride) {
  const std::size_t cin = input.rows(), t_in = input.cols();
  if (kw == 0 || stride == 0)
    throw DimensionError("conv1d: kernel width and stride must be positive");
  if (t_in < kw)
    throw SizeError("conv1d: input length " + std::to_string(t_in) +
                    " shorter than kernel width " + std::to_string(kw));
  if (kernel.cols() != cin * kw)
    throw DimensionError("conv1d: kernel " + shape_of(kernel) +
                         " does not match Cin*Kw = " + std::to_string(cin) +
                         "*" + std::to_string(kw));
  const std::size_t cout = kernel.rows();
  const std::size_t t_out = (t_in - kw) / stride + 1;
  Tensor out(cout, t_out);
  for (std::size_t co = 0; co < cout; ++co) {
    const double* krow = kernel.data() + co * cin * kw;
    double* orow = out.data() + co * t_out;
    for (std::size_t tp = 0; tp < t_out; ++tp) {
      double acc = 0.0;
      const std::size_t base = tp * stride;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* irow = input.data() + ci * t_in + base;
        const double* kk = krow + ci * kw;
        for (std::size_t k = 0; k < kw; ++k) acc += irow[k] * kk[k];
      }
      orow[tp] = acc;
    }
  }
  finite_guard(out, "conv1d");
  if (recording({&input, &kernel})) {
    out.ensure_grad();
    Tensor ci_t = input, ck = kernel, co_t = out;
    Tape::active()->record(
        "conv1d", [ci_t, ck, co_t, cin, cout, kw, stride, t_in, t_out]() mutable {
          for (std::size_t co = 0; co < cout; ++co) {
            const double* grow = co_t.grad_data() + co * t_out;
            const double* krow = ck.data() + co * cin * kw;
            double* dkrow = ck.requires_grad() ? ck.grad_data() + co * cin * kw
                                               : nullptr;
            for (std::size_t tp = 0; tp < t_out; ++tp) {
              const double g = grow[tp];
              if (g == 0.0) continue;
              const std::size_t base = tp * stride;
              for (std::size_t ci = 0; ci < cin; ++ci) {
                const double* irow = ci_t.data() + ci * t_in + base;
                if (ci_t.requires_grad()) {
                  double* dirow = ci_t.grad_data() + ci * t_in + base;
                  const double* kk = krow + ci * kw;
                  for (std::size_t k = 0; k < kw; ++k) dirow[k] += g * kk[k];
                }
                if (dkrow) {
                  double* dkk = dkrow + ci * kw;
                  for (std::size_t k = 0; k < kw; ++k) dkk[k] += g * irow[k];
                }
              }
            }
          }
        });
  }
  return out;
}

Tensor broadcast_add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw DimensionError("broadcast_add_row: " + shape_of(a) + " vs " +
                         shape_of(row));
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      out.at(i, j) = a.at(i, j) + row.at(0, j);
  finite_guard(out, "broadcast_add_row");
  if (recording({&a, &row})) {
    out.ensure_grad();
    Tensor ca = a, cr = row, co = out;
    Tape::active()->record("broadcast_add_row", [ca, cr, co]() mutable {
      if (ca.requires_grad())
        for (std::size_t i = 0; i < ca.size(); ++i)
          ca.grad_data()[i] += co.grad_data()[i];
      if (cr.requires_grad())
        for (std::size_t i = 0; i < ca.rows(); ++i)
          for (std::size_t j = 0; j < ca.cols(); ++j)
            cr.grad_at(0, j) += co.grad_at(i, j);
    });
  }
  return out;
}

Tensor broadcast_add_col(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows())
    throw DimensionError("broadcast_add_col: " + shape_of(a) + " vs " +
                         shape_of(col));
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      out.at(i, j) = a.at(i, j) + col.at(i, 0);
  finite_guard(out, "broadcast_add_col");
  if (recording({&a, &col})) {
    out.ensure_grad();
    Tensor ca = a, cc = col, co = out;
    Tape::active()->record("broadcast_add_col", [ca, cc, co]() mutable {
      if (ca.requires_grad())
        for (std::size_t i = 0; i < ca.size(); ++i)
          ca.grad_data()[i] += co.grad_data()[i];
      if (cc.requires_grad())
        for (std::size_t i = 0; i < ca.rows(); ++i)
          for (std::size_t j = 0; j < ca.cols(); ++j)
            cc.grad_at(i, 0) += co.grad_at(i, j);
    });
  }
  return out;
}

namespace {

// Shared softmax forward for a contiguous span.
void softmax_span(const double* x, double* y, std::size_t n) {
  double mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  for (std::size_t j = 0; j < n; ++j) y[j] /= sum;
}

}  // namespace

Tensor softmax_rows(const Tensor& a) {
  if (a.cols() == 0) throw DimensionError("softmax over empty rows");
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    softmax_span(a.data() + i * a.cols(), out.data() + i * a.cols(), a.cols());
  finite_guard(out, "softmax");
  if (recording({&a})) {
    out.ensure_grad();
    Tensor ca = a, co = out;
    Tape::active()->record("softmax", [ca, co]() mutable {
      const std::size_t n = ca.cols();
      for (std::size_t i = 0; i < ca.rows(); ++i) {
        const double* y = co.data() + i * n;
        const double* gy = co.grad_data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
        double* gx = ca.grad_data() + i * n;
        for (std::size_t j = 0; j < n; ++j) gx[j] += y[j] * (gy[j] - dot);
      }
    });
  }
  return out;
}

Tensor causal_softmax(const Tensor& scores) {
  if (scores.rows() != scores.cols())
    throw DimensionError("causal_softmax expects square scores, got " +
                         shape_of(scores));
  const std::size_t t = scores.rows();
  Tensor out(t, t);
  for (std::size_t i = 0; i < t; ++i)
    softmax_span(scores.data() + i * t, out.data() + i * t, i + 1);
  finite_guard(out, "causal_softmax");
  if (recording({&scores})) {
    out.ensure_grad();
    Tensor ca = scores, co = out;
    Tape::active()->record("causal_softmax", [ca, co, t]() mutable {
      for (std::size_t i = 0; i < t; ++i) {
        const double* y = co.data() + i * t;
        const double* gy = co.grad_data() + i * t;
        double dot = 0.0;
        for (std::size_t j = 0; j <= i; ++j) dot += gy[j] * y[j];
        double* gx = ca.grad_data() + i * t;
        for (std::size_t j = 0; j <= i; ++j) gx[j] += y[j] * (gy[j] - dot);
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<char>& mask) {
  const std::size_t t = logits.rows(), v = logits.cols();
  if (targets.size() != t || mask.size() != t)
    throw DimensionError("cross_entropy: " + std::to_string(t) +
                         " logit rows vs " + std::to_string(targets.size()) +
                         " targets, " + std::to_string(mask.size()) + " mask");
  std::size_t n_masked = 0;
  for (char m : mask) n_masked += m ? 1 : 0;
  Tensor out(1, 1);
  if (n_masked == 0) return out;

  // Probabilities are kept for the backward pass.
  Tensor probs(t, v);
  double total = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    if (!mask[i]) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v)
      throw IndexError("cross_entropy: target " + std::to_string(targets[i]) +
                       " out of range at row " + std::to_string(i) +
                       " (vocab " + std::to_string(v) + ")");
    const double* x = logits.data() + i * v;
    double mx = x[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    double* p = probs.data() + i * v;
    for (std::size_t j = 0; j < v; ++j) {
      p[j] = std::exp(x[j] - mx);
      sum += p[j];
    }
    for (std::size_t j = 0; j < v; ++j) p[j] /= sum;
    total += std::log(sum) + mx - x[targets[i]];
  }
  out.data()[0] = total / static_cast<double>(n_masked);
  finite_guard(out, "cross_entropy");
  if (recording({&logits})) {
    out.ensure_grad();
    Tensor cl = logits, co = out;
    Tape::active()->record(
        "cross_entropy", [cl, co, probs, targets, mask, n_masked]() mutable {
          const double g = co.grad_at(0, 0) / static_cast<double>(n_masked);
          const std::size_t v = cl.cols();
          for (std::size_t i = 0; i < cl.rows(); ++i) {
            if (!mask[i]) continue;
            const double* p = probs.data() + i * v;
            double* gx = cl.grad_data() + i * v;
            for (std::size_t j = 0; j < v; ++j) gx[j] += g * p[j];
            gx[targets[i]] -= g;
          }
        });
  }
  return out;
}

Tensor l1_norm(const Tensor& a) {
  Tensor out(1, 1);
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::fabs(a.data()[i]);
  out.data()[0] = total;
  finite_guard(out, "l1_norm");
  if (recording({&a})) {
    out.ensure_grad();
    Tensor ca = a, co = out;
    Tape::active()->record("l1_norm", [ca, co]() mutable {
      const double g = co.grad_at(0, 0);
      for (std::size_t i = 0; i < ca.size(); ++i) {
        const double x = ca.data()[i];
        if (x > 0.0)
          ca.grad_data()[i] += g;
        else if (x < 0.0)
          ca.grad_data()[i] -= g;
        // sign(0) stays 0
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  const std::size_t r = x.rows(), c = x.cols();
  if (c < 2) throw DimensionError("layer_norm needs at least 2 columns");
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 ||
      bias.cols() != c)
    throw DimensionError("layer_norm: gain/bias must be 1x" +
                         std::to_string(c));
  constexpr double eps = 1e-5;
  Tensor out(r, c);
  Tensor xhat(r, c);
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = x.data() + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xi[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = xi[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    double* xh = xhat.data() + i * c;
    double* oi = out.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      xh[j] = (xi[j] - mean) * is;
      oi[j] = gain.at(0, j) * xh[j] + bias.at(0, j);
    }
  }
  finite_guard(out, "layer_norm");
  if (recording({&x, &gain, &bias})) {
    out.ensure_grad();
    Tensor cx = x, cg = gain, cb = bias, co = out;
    Tape::active()->record(
        "layer_norm", [cx, cg, cb, co, xhat, inv_std, r, c]() mutable {
          std::vector<double> dxhat(c);
          for (std::size_t i = 0; i < r; ++i) {
            const double* xh = xhat.data() + i * c;
            const double* gy = co.grad_data() + i * c;
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              dxhat[j] = gy[j] * cg.at(0, j);
              mean_dxh += dxhat[j];
              mean_dxh_xh += dxhat[j] * xh[j];
            }
            mean_dxh /= static_cast<double>(c);
            mean_dxh_xh /= static_cast<double>(c);
            if (cx.requires_grad()) {
              double* gx = cx.grad_data() + i * c;
              for (std::size_t j = 0; j < c; ++j)
                gx[j] += inv_std[i] * (dxhat[j] - mean_dxh - xh[j] * mean_dxh_xh);
            }
            if (cg.requires_grad())
              for (std::size_t j = 0; j < c; ++j)
                cg.grad_at(0, j) += gy[j] * xh[j];
            if (cb.requires_grad())
              for (std::size_t j = 0; j < c; ++j) cb.grad_at(0, j) += gy[j];
          }
        });
  }
  return out;
}

Tensor embed_rows(const Tensor& table, const std::vector<int>& ids) {
  const std::size_t c = table.cols();
  Tensor out(ids.size(), c);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table.rows())
      throw IndexError("embed_rows: id " + std::to_string(ids[i]) +
                       " out of range (table has " +
                       std::to_string(table.rows()) + " rows)");
    const double* src = table.data() + static_cast<std::size_t>(ids[i]) * c;
    double* dst = out.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) dst[j] = src[j];
  }
  finite_guard(out, "embed_rows");
  if (recording({&table})) {
    out.ensure_grad();
    Tensor ct = table, co = out;
    Tape::active()->record("embed_rows", [ct, co, ids, c]() mutable {
      for (std::size_t i = 0; i < ids.size(); ++i) {
        double* dst = ct.grad_data() + static_cast<std::size_t>(ids[i]) * c;
        const double* g = co.grad_data() + i * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += g[j];
      }
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c)
      throw DimensionError("concat_rows: column mismatch " + shape_of(p) +
                           " vs expected *x" + std::to_string(c));
    r += p.rows();
  }
  Tensor out(r, c);
  std::size_t at = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.size(); ++i)
      out.data()[at * c + i] = p.data()[i];
    at += p.rows();
  }
  finite_guard(out, "concat_rows");
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (Tape::active() && any) {
    out.ensure_grad();
    Tensor co = out;
    std::vector<Tensor> cp = parts;
    Tape::active()->record("concat_rows", [cp, co, c]() mutable {
      std::size_t at = 0;
      for (auto& p : cp) {
        if (p.requires_grad()) {
          const double* g = co.grad_data() + at * c;
          for (std::size_t i = 0; i < p.size(); ++i) p.grad_data()[i] += g[i];
        }
        at += p.rows();
      }
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t r = parts.front().rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r)
      throw DimensionError("concat_cols: row mismatch " + shape_of(p) +
                           " vs expected " + std::to_string(r) + "x*");
    c += p.cols();
  }
  Tensor out(r, c);
  std::size_t at = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j)
        out.at(i, at + j) = p.at(i, j);
    at += p.cols();
  }
  finite_guard(out, "concat_cols");
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (Tape::active() && any) {
    out.ensure_grad();
    Tensor co = out;
    std::vector<Tensor> cp = parts;
    Tape::active()->record("concat_cols", [cp, co, r]() mutable {
      std::size_t at = 0;
      for (auto& p : cp) {
        if (p.requires_grad())
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < p.cols(); ++j)
              p.grad_at(i, j) += co.grad_at(i, at + j);
        at += p.cols();
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows())
    throw IndexError("slice_rows: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " +
                     std::to_string(a.rows()) + " rows");
  const std::size_t c = a.cols();
  Tensor out(count, c);
  for (std::size_t i = 0; i < count * c; ++i)
    out.data()[i] = a.data()[begin * c + i];
  if (recording({&a})) {
    out.ensure_grad();
    Tensor ca = a, co = out;
    Tape::active()->record("slice_rows", [ca, co, begin, c]() mutable {
      for (std::size_t i = 0; i < co.size(); ++i)
        ca.grad_data()[begin * c + i] += co.grad_data()[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols())
    throw IndexError("slice_cols: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " +
                     std::to_string(a.cols()) + " columns");
  Tensor out(a.rows(), count);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = a.at(i, begin + j);
  if (recording({&a})) {
    out.ensure_grad();
    Tensor ca = a, co = out;
    Tape::active()->record("slice_cols", [ca, co, begin]() mutable {
      for (std::size_t i = 0; i < co.rows(); ++i)
        for (std::size_t j = 0; j < co.cols(); ++j)
          ca.grad_at(i, begin + j) += co.grad_at(i, j);
    });
  }
  return out;
}

Tensor mean_rows(const Tensor& a) {
  if (a.rows() == 0) throw DimensionError("mean_rows of empty tensor");
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out(1, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(0, j) += a.at(i, j);
  for (std::size_t j = 0; j < c; ++j) out.at(0, j) /= static_cast<double>(r);
  finite_guard(out, "mean_rows");
  if (recording({&a})) {
    out.ensure_grad();
    Tensor ca = a, co = out;
    Tape::active()->record("mean_rows", [ca, co, r, c]() mutable {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          ca.grad_at(i, j) += co.grad_at(0, j) / static_cast<double>(r);
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.size())
    throw SizeError("reshape: " + shape_of(a) + " to " + std::to_string(rows) +
                    "x" + std::to_string(cols));
  Tensor out(rows, cols);
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i];
  if (recording({&a})) {
    out.ensure_grad();
    Tensor ca = a, co = out;
    Tape::active()->record("reshape", [ca, co]() mutable {
      for (std::size_t i = 0; i < ca.size(); ++i)
        ca.grad_data()[i] += co.grad_data()[i];
    });
  }
  return out;
}

Tensor cosine_rows(const Tensor& query, const Tensor& keys) {
  if (query.rows() != 1 || query.cols() != keys.cols())
    throw DimensionError("cosine_rows: query " + shape_of(query) +
                         " vs keys " + shape_of(keys));
  const std::size_t n = keys.rows(), c = keys.cols();
  double qn2 = 0.0;
  for (std::size_t j = 0; j < c; ++j) qn2 += query.at(0, j) * query.at(0, j);
  const double qn = std::sqrt(qn2);
  Tensor out(1, n);
  std::vector<double> kns(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double kn2 = 0.0, dot = 0.0;
    const double* ki = keys.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      kn2 += ki[j] * ki[j];
      dot += query.at(0, j) * ki[j];
    }
    kns[i] = std::sqrt(kn2);
    out.at(0, i) = (qn == 0.0 || kns[i] == 0.0) ? 0.0 : dot / (qn * kns[i]);
  }
  finite_guard(out, "cosine_rows");
  if (recording({&query, &keys})) {
    out.ensure_grad();
    Tensor cq = query, ck = keys, co = out;
    Tape::active()->record("cosine_rows", [cq, ck, co, kns, qn, n, c]() mutable {
      for (std::size_t i = 0; i < n; ++i) {
        const double g = co.grad_at(0, i);
        if (g == 0.0 || qn == 0.0 || kns[i] == 0.0) continue;
        const double sim = co.at(0, i);
        const double* ki = ck.data() + i * c;
        const double denom = qn * kns[i];
        if (cq.requires_grad())
          for (std::size_t j = 0; j < c; ++j)
            cq.grad_at(0, j) +=
                g * (ki[j] / denom - sim * cq.at(0, j) / (qn * qn));
        if (ck.requires_grad()) {
          double* gk = ck.grad_data() + i * c;
          for (std::size_t j = 0; j < c; ++j)
            gk[j] +=
                g * (cq.at(0, j) / denom - sim * ki[j] / (kns[i] * kns[i]));
        }
      }
    });
  }
  return out;
}

double grad_check(const std::function<Tensor()>& f,
                  const std::vector<Tensor*>& leaves,
                  std::size_t samples_per_leaf, double h, std::uint64_t seed) {
  const bool was_checking = finite_checks_enabled();
  set_finite_checks(true);

  // Analytic pass on a private tape.
  std::vector<std::vector<double>> analytic(leaves.size());
  {
    for (Tensor* leaf : leaves) leaf->zero_grad();
    Tape tape;
    TapeScope scope(&tape);
    Tensor loss = f();
    tape.backward(loss);
    for (std::size_t l = 0; l < leaves.size(); ++l) {
      analytic[l].assign(leaves[l]->grad_data(),
                         leaves[l]->grad_data() + leaves[l]->size());
    }
  }

  // Numeric passes never record.
  double max_rel = 0.0;
  TapeScope off(nullptr);
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    Tensor* leaf = leaves[l];
    if (leaf->size() == 0) continue;
    Rng rng(Rng::mix(seed, l));
    auto coords = rng.sample_indices(
        leaf->size(), std::min<std::size_t>(samples_per_leaf, leaf->size()));
    for (std::size_t idx : coords) {
      const double saved = leaf->data()[idx];
      leaf->data()[idx] = saved + h;
      const double up = f().item();
      leaf->data()[idx] = saved - h;
      const double dn = f().item();
      leaf->data()[idx] = saved;
      if (!std::isfinite(up) || !std::isfinite(dn))
        throw NumericError("non-finite loss during finite-difference probe");
      const double numeric = (up - dn) / (2.0 * h);
      const double a = analytic[l][idx];
      const double rel =
          std::fabs(a - numeric) /
          std::max(1e-8, std::fabs(a) + std::fabs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  set_finite_checks(was_checking);
  return max_rel;
}

}  // namespace cabin::num
