// Copyright 2026 The msgen Authors
// SPDX-License-Identifier: Apache-2.0

#include "msgen/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "msgen/errors.hpp"
#include "msgen/gemm.hpp"
#include "msgen/rope.hpp"

namespace msgen::ops {
namespace {

Graph& graph_of(Var a) {
  if (!a.valid()) throw std::logic_error("operation on an empty Var");
  return *a.graph();
}

Graph& graph_of(Var a, Var b) {
  if (a.graph() != b.graph()) throw std::logic_error("operands belong to different graphs");
  return graph_of(a);
}

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

void add_into(Tensor& dst, const Tensor& src, double s = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

template <class F>
Var unary(const char* op, Var a, F&& forward_and_deriv) {
  Graph& g = graph_of(a);
  require_rank2(op, a.shape());
  const Tensor& x = a.value();
  Tensor out(x.shape(), 0.0);
  auto deriv = std::make_shared<Tensor>(x.shape(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto [y, dy] = forward_and_deriv(x[i]);
    out[i] = y;
    (*deriv)[i] = dy;
  }
  return g.record(std::move(out), {a}, [a, deriv](Graph& gr, const Tensor& go) {
    Tensor& ga = gr.grad_mut(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * (*deriv)[i];
  });
}

}  // namespace

std::vector<std::string_view> primitive_catalog() {
  return {"matmul",     "matmul_nt",   "linear",   "add",        "sub",          "mul",
          "scale",      "add_row",     "broadcast_rows", "sum",  "mean",         "silu",
          "tanh",       "softmax",     "layer_norm", "rms_norm", "embedding",    "concat_cols",
          "concat_rows", "slice_rows", "resample", "cross_entropy", "patchify",  "unpatchify",
          "rope",       "dropout",     "straight_through", "attention"};
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_rank2("matmul", a.shape());
  require_rank2("matmul", b.shape());
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.cols() != y.rows()) mismatch("matmul", x.shape(), y.shape());
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  Tensor out = Tensor::matrix(m, n);
  gemm::nn(m, n, k, x.data(), k, y.data(), n, out.data(), n);
  return g.record(std::move(out), {a, b}, [a, b, m, k, n](Graph& gr, const Tensor& go) {
    if (gr.requires_grad(a)) gemm::nt(m, k, n, go.data(), n, b.value().data(), n, gr.grad_mut(a).data(), k, true);
    if (gr.requires_grad(b)) gemm::tn(k, n, m, a.value().data(), k, go.data(), n, gr.grad_mut(b).data(), n, true);
  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_rank2("matmul_nt", a.shape());
  require_rank2("matmul_nt", b.shape());
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.cols() != y.cols()) mismatch("matmul_nt", x.shape(), y.shape());
  const std::size_t m = x.rows(), k = x.cols(), n = y.rows();
  Tensor out = Tensor::matrix(m, n);
  gemm::nt(m, n, k, x.data(), k, y.data(), k, out.data(), n);
  return g.record(std::move(out), {a, b}, [a, b, m, k, n](Graph& gr, const Tensor& go) {
    if (gr.requires_grad(a)) gemm::nn(m, k, n, go.data(), n, b.value().data(), k, gr.grad_mut(a).data(), k, true);
    if (gr.requires_grad(b)) gemm::tn(n, k, m, go.data(), n, a.value().data(), k, gr.grad_mut(b).data(), k, true);
  });
}

Var linear(Var x, Var weight, std::optional<Var> bias) {
  Graph& g = graph_of(x, weight);
  require_rank2("linear", x.shape());
  require_rank2("linear", weight.shape());
  const Tensor& in = x.value();
  const Tensor& w = weight.value();
  if (in.cols() != w.cols()) mismatch("linear", in.shape(), w.shape());
  const std::size_t n = in.rows(), k = in.cols(), out_dim = w.rows();
  if (bias) {
    graph_of(x, *bias);
    if (bias->shape() != Shape{1, out_dim}) mismatch("linear(bias)", bias->shape(), Shape{1, out_dim});
  }
  Tensor out = Tensor::matrix(n, out_dim);
  gemm::nt(n, out_dim, k, in.data(), k, w.data(), k, out.data(), out_dim);
  if (bias) {
    const Tensor& b = bias->value();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < out_dim; ++c) out(r, c) += b[c];
  }
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return g.record(std::move(out), inputs, [x, weight, bias, n, k, out_dim](Graph& gr, const Tensor& go) {
    if (gr.requires_grad(x))
      gemm::nn(n, k, out_dim, go.data(), out_dim, weight.value().data(), k, gr.grad_mut(x).data(), k, true);
    if (gr.requires_grad(weight))
      gemm::tn(out_dim, k, n, go.data(), out_dim, x.value().data(), k, gr.grad_mut(weight).data(), k, true);
    if (bias && gr.requires_grad(*bias)) {
      Tensor& gb = gr.grad_mut(*bias);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < out_dim; ++c) gb[c] += go(r, c);
    }
  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  if (a.shape() != b.shape()) mismatch("add", a.shape(), b.shape());
  Tensor out = a.value();
  add_into(out, b.value());
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Tensor& go) {
    if (gr.requires_grad(a)) add_into(gr.grad_mut(a), go);
    if (gr.requires_grad(b)) add_into(gr.grad_mut(b), go);
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  if (a.shape() != b.shape()) mismatch("sub", a.shape(), b.shape());
  Tensor out = a.value();
  add_into(out, b.value(), -1.0);
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Tensor& go) {
    if (gr.requires_grad(a)) add_into(gr.grad_mut(a), go);
    if (gr.requires_grad(b)) add_into(gr.grad_mut(b), go, -1.0);
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  if (a.shape() != b.shape()) mismatch("mul", a.shape(), b.shape());
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out(x.shape(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, const Tensor& go) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (gr.requires_grad(a)) {
      Tensor& ga = gr.grad_mut(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * y[i];
    }
    if (gr.requires_grad(b)) {
      Tensor& gb = gr.grad_mut(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * x[i];
    }
  });
}

Var scale(Var a, double s) {
  Graph& g = graph_of(a);
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  return g.record(std::move(out), {a}, [a, s](Graph& gr, const Tensor& go) { add_into(gr.grad_mut(a), go, s); });
}

Var add_row(Var a, Var row) {
  Graph& g = graph_of(a, row);
  require_rank2("add_row", a.shape());
  if (row.shape() != Shape{1, a.cols()}) mismatch("add_row", a.shape(), row.shape());
  Tensor out = a.value();
  const Tensor& r = row.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += r[j];
  return g.record(std::move(out), {a, row}, [a, row](Graph& gr, const Tensor& go) {
    if (gr.requires_grad(a)) add_into(gr.grad_mut(a), go);
    if (gr.requires_grad(row)) {
      Tensor& gr_row = gr.grad_mut(row);
      for (std::size_t i = 0; i < go.rows(); ++i)
        for (std::size_t j = 0; j < go.cols(); ++j) gr_row[j] += go(i, j);
    }
  });
}

Var broadcast_rows(Var row, std::size_t n) {
  Graph& g = graph_of(row);
  require_rank2("broadcast_rows", row.shape());
  if (row.rows() != 1) throw ShapeError("broadcast_rows: expected a [1, d] row, got " + to_string(row.shape()));
  if (n == 0) throw ShapeError("broadcast_rows: zero rows requested");
  const std::size_t d = row.cols();
  Tensor out = Tensor::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(row.value().data(), d, out.data() + i * d);
  return g.record(std::move(out), {row}, [row](Graph& gr, const Tensor& go) {
    Tensor& gr_row = gr.grad_mut(row);
    for (std::size_t i = 0; i < go.rows(); ++i)
      for (std::size_t j = 0; j < go.cols(); ++j) gr_row[j] += go(i, j);
  });
}

Var sum(Var a) {
  Graph& g = graph_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return g.record(Tensor::scalar(s), {a}, [a](Graph& gr, const Tensor& go) {
    Tensor& ga = gr.grad_mut(a);
    for (double& v : ga.values()) v += go[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var silu(Var a) {
  return unary("silu", a, [](double x) {
    const double sig = 1.0 / (1.0 + std::exp(-x));
    return std::pair{x * sig, sig * (1.0 + x * (1.0 - sig))};
  });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double x) {
    const double t = std::tanh(x);
    return std::pair{t, 1.0 - t * t};
  });
}

Var softmax(Var a) {
  Graph& g = graph_of(a);
  require_rank2("softmax", a.shape());
  const Tensor& x = a.value();
  Tensor out(x.shape(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row_span(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      out(r, c) = std::exp(row[c] - mx);
      total += out(r, c);
    }
    for (std::size_t c = 0; c < row.size(); ++c) out(r, c) /= total;
  }
  auto y = std::make_shared<Tensor>(out);
  return g.record(std::move(out), {a}, [a, y](Graph& gr, const Tensor& go) {
    Tensor& ga = gr.grad_mut(a);
    for (std::size_t r = 0; r < y->rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y->cols(); ++c) dot += go(r, c) * (*y)(r, c);
      for (std::size_t c = 0; c < y->cols(); ++c) ga(r, c) += (*y)(r, c) * (go(r, c) - dot);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Graph& g = graph_of(x, gamma);
  graph_of(x, beta);
  require_rank2("layer_norm", x.shape());
  const std::size_t n = x.rows(), d = x.cols();
  if (gamma.shape() != Shape{1, d}) mismatch("layer_norm(gamma)", x.shape(), gamma.shape());
  if (beta.shape() != Shape{1, d}) mismatch("layer_norm(beta)", x.shape(), beta.shape());
  const Tensor& in = x.value();
  auto xhat = std::make_shared<Tensor>(in.shape(), 0.0);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  Tensor out(in.shape(), 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += in(r, c);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (in(r, c) - mu) * (in(r, c) - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      (*xhat)(r, c) = (in(r, c) - mu) * is;
      out(r, c) = (*xhat)(r, c) * gamma.value()[c] + beta.value()[c];
    }
  }
  return g.record(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std, n, d](Graph& gr, const Tensor& go) {
    const Tensor& gm = gamma.value();
    if (gr.requires_grad(gamma)) {
      Tensor& gg = gr.grad_mut(gamma);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) gg[c] += go(r, c) * (*xhat)(r, c);
    }
    if (gr.requires_grad(beta)) {
      Tensor& gb = gr.grad_mut(beta);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) gb[c] += go(r, c);
    }
    if (gr.requires_grad(x)) {
      Tensor& gx = gr.grad_mut(x);
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t r = 0; r < n; ++r) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double gh = go(r, c) * gm[c];
          s1 += gh;
          s2 += gh * (*xhat)(r, c);
        }
        for (std::size_t c = 0; c < d; ++c) {
          const double gh = go(r, c) * gm[c];
          gx(r, c) += (*inv_std)[r] * (gh - inv_d * s1 - (*xhat)(r, c) * inv_d * s2);
        }
      }
    }
  });
}

Var rms_norm(Var x, Var gamma, double eps) {
  Graph& g = graph_of(x, gamma);
  require_rank2("rms_norm", x.shape());
  const std::size_t n = x.rows(), d = x.cols();
  if (gamma.shape() != Shape{1, d}) mismatch("rms_norm(gamma)", x.shape(), gamma.shape());
  const Tensor& in = x.value();
  auto inv_rms = std::make_shared<std::vector<double>>(n);
  Tensor out(in.shape(), 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double ms = 0.0;
    for (std::size_t c = 0; c < d; ++c) ms += in(r, c) * in(r, c);
    const double ir = 1.0 / std::sqrt(ms / static_cast<double>(d) + eps);
    (*inv_rms)[r] = ir;
    for (std::size_t c = 0; c < d; ++c) out(r, c) = in(r, c) * ir * gamma.value()[c];
  }
  return g.record(std::move(out), {x, gamma}, [x, gamma, inv_rms, n, d](Graph& gr, const Tensor& go) {
    const Tensor& in = x.value();
    const Tensor& gm = gamma.value();
    if (gr.requires_grad(gamma)) {
      Tensor& gg = gr.grad_mut(gamma);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) gg[c] += go(r, c) * in(r, c) * (*inv_rms)[r];
    }
    if (gr.requires_grad(x)) {
      Tensor& gx = gr.grad_mut(x);
      for (std::size_t r = 0; r < n; ++r) {
        const double ir = (*inv_rms)[r];
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += go(r, c) * gm[c] * in(r, c);
        const double k = ir * ir * ir * dot / static_cast<double>(d);
        for (std::size_t c = 0; c < d; ++c) gx(r, c) += go(r, c) * gm[c] * ir - in(r, c) * k;
      }
    }
  });
}

Var embedding(Var table, std::span<const int> indices) {
  Graph& g = graph_of(table);
  require_rank2("embedding", table.shape());
  const Tensor& t = table.value();
  const std::size_t d = t.cols();
  if (indices.empty()) throw ShapeError("embedding: no indices");
  Tensor out = Tensor::matrix(indices.size(), d);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || static_cast<std::size_t>(indices[i]) >= t.rows()) {
      throw ShapeError("embedding: index " + std::to_string(indices[i]) + " out of range for table " +
                       to_string(t.shape()));
    }
    std::copy_n(t.data() + static_cast<std::size_t>(indices[i]) * d, d, out.data() + i * d);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return g.record(std::move(out), {table}, [table, idx = std::move(idx), d](Graph& gr, const Tensor& go) {
    Tensor& gt = gr.grad_mut(table);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) gt(static_cast<std::size_t>(idx[i]), c) += go(i, c);
  });
}

Var concat_cols(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_rank2("concat_cols", a.shape());
  require_rank2("concat_cols", b.shape());
  if (a.rows() != b.rows()) mismatch("concat_cols", a.shape(), b.shape());
  const std::size_t n = a.rows(), da = a.cols(), db = b.cols();
  Tensor out = Tensor::matrix(n, da + db);
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(a.value().data() + r * da, da, out.data() + r * (da + db));
    std::copy_n(b.value().data() + r * db, db, out.data() + r * (da + db) + da);
  }
  return g.record(std::move(out), {a, b}, [a, b, n, da, db](Graph& gr, const Tensor& go) {
    if (gr.requires_grad(a)) {
      Tensor& ga = gr.grad_mut(a);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < da; ++c) ga(r, c) += go(r, c);
    }
    if (gr.requires_grad(b)) {
      Tensor& gb = gr.grad_mut(b);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < db; ++c) gb(r, c) += go(r, da + c);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Graph& g = graph_of(parts[0]);
  const std::size_t d = parts[0].cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    graph_of(parts[0], p);
    require_rank2("concat_rows", p.shape());
    if (p.cols() != d) mismatch("concat_rows", parts[0].shape(), p.shape());
    total += p.rows();
  }
  Tensor out = Tensor::matrix(total, d);
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + off * d);
    off += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.record(std::move(out), inputs, [inputs, d](Graph& gr, const Tensor& go) {
    std::size_t off = 0;
    for (const Var& p : inputs) {
      const std::size_t n = p.rows();
      if (gr.requires_grad(p)) {
        Tensor& gp = gr.grad_mut(p);
        for (std::size_t i = 0; i < n * d; ++i) gp[i] += go[off * d + i];
      }
      off += n;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Graph& g = graph_of(a);
  require_rank2("slice_rows", a.shape());
  if (count == 0 || begin + count > a.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + to_string(a.shape()));
  }
  const std::size_t d = a.cols();
  Tensor out = Tensor::matrix(count, d);
  std::copy_n(a.value().data() + begin * d, count * d, out.data());
  return g.record(std::move(out), {a}, [a, begin, d](Graph& gr, const Tensor& go) {
    Tensor& ga = gr.grad_mut(a);
    for (std::size_t i = 0; i < go.size(); ++i) ga[begin * d + i] += go[i];
  });
}

Var resample(Var grid, std::size_t side_out, Interpolation kernel) {
  Graph& g = graph_of(grid);
  const std::size_t side_in = grid_side(grid.value());
  Tensor out = msgen::resample(grid.value(), side_out, kernel);
  return g.record(std::move(out), {grid}, [grid, side_in, kernel](Graph& gr, const Tensor& go) {
    add_into(gr.grad_mut(grid), resample_adjoint(go, side_in, kernel));
  });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  Graph& g = graph_of(logits);
  require_rank2("cross_entropy", logits.shape());
  const Tensor& z = logits.value();
  const std::size_t n = z.rows(), v = z.cols();
  if (targets.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " + to_string(z.shape()));
  }
  auto probs = std::make_shared<Tensor>(z.shape(), 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= v) {
      throw ShapeError("cross_entropy: target " + std::to_string(targets[r]) + " outside vocabulary of " +
                       std::to_string(v));
    }
    const auto row = z.row_span(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (std::size_t c = 0; c < v; ++c) {
      (*probs)(r, c) = std::exp(row[c] - mx);
      s += (*probs)(r, c);
    }
    for (std::size_t c = 0; c < v; ++c) (*probs)(r, c) /= s;
    total += (std::log(s) + mx) - row[static_cast<std::size_t>(targets[r])];
  }
  std::vector<int> t(targets.begin(), targets.end());
  return g.record(Tensor::scalar(total / static_cast<double>(n)), {logits},
                  [logits, probs, t = std::move(t), n, v](Graph& gr, const Tensor& go) {
                    Tensor& gz = gr.grad_mut(logits);
                    const double s = go[0] / static_cast<double>(n);
                    for (std::size_t r = 0; r < n; ++r) {
                      for (std::size_t c = 0; c < v; ++c) gz(r, c) += s * (*probs)(r, c);
                      gz(r, static_cast<std::size_t>(t[r])) -= s;
                    }
                  });
}

namespace {

// Index map shared by patchify/unpatchify: for each (coarse position, packed
// feature) the fine-grid element it corresponds to.
std::vector<std::size_t> patch_map(std::size_t side, std::size_t f, std::size_t c) {
  const std::size_t cs = side / f;
  std::vector<std::size_t> map(side * side * c);
  for (std::size_t y = 0; y < cs; ++y)
    for (std::size_t x = 0; x < cs; ++x)
      for (std::size_t dy = 0; dy < f; ++dy)
        for (std::size_t dx = 0; dx < f; ++dx)
          for (std::size_t k = 0; k < c; ++k) {
            const std::size_t coarse = ((y * cs + x) * f * f + dy * f + dx) * c + k;
            const std::size_t fine = ((y * f + dy) * side + x * f + dx) * c + k;
            map[coarse] = fine;
          }
  return map;
}

}  // namespace

Var patchify(Var grid, std::size_t factor) {
  Graph& g = graph_of(grid);
  const std::size_t side = grid_side(grid.value());
  if (factor == 0 || side % factor != 0) {
    throw ShapeError("patchify: side " + std::to_string(side) + " not divisible by " + std::to_string(factor));
  }
  const std::size_t c = grid.cols(), cs = side / factor;
  auto map = std::make_shared<std::vector<std::size_t>>(patch_map(side, factor, c));
  Tensor out = Tensor::matrix(cs * cs, factor * factor * c);
  for (std::size_t i = 0; i < map->size(); ++i) out[i] = grid.value()[(*map)[i]];
  return g.record(std::move(out), {grid}, [grid, map](Graph& gr, const Tensor& go) {
    Tensor& gg = gr.grad_mut(grid);
    for (std::size_t i = 0; i < map->size(); ++i) gg[(*map)[i]] += go[i];
  });
}

Var unpatchify(Var grid, std::size_t factor) {
  Graph& g = graph_of(grid);
  const std::size_t cs = grid_side(grid.value());
  if (factor == 0 || grid.cols() % (factor * factor) != 0) {
    throw ShapeError("unpatchify: " + std::to_string(grid.cols()) + " features not divisible by " +
                     std::to_string(factor * factor));
  }
  const std::size_t c = grid.cols() / (factor * factor), side = cs * factor;
  auto map = std::make_shared<std::vector<std::size_t>>(patch_map(side, factor, c));
  Tensor out = Tensor::matrix(side * side, c);
  for (std::size_t i = 0; i < map->size(); ++i) out[(*map)[i]] = grid.value()[i];
  return g.record(std::move(out), {grid}, [grid, map](Graph& gr, const Tensor& go) {
    Tensor& gg = gr.grad_mut(grid);
    for (std::size_t i = 0; i < map->size(); ++i) gg[i] += go[(*map)[i]];
  });
}

Var rope(Var x, std::span<const std::size_t> positions, std::size_t heads, double base) {
  Graph& g = graph_of(x);
  Tensor out = rope_apply(x.value(), positions, heads, base);
  std::vector<std::size_t> pos(positions.begin(), positions.end());
  return g.record(std::move(out), {x}, [x, pos = std::move(pos), heads, base](Graph& gr, const Tensor& go) {
    add_into(gr.grad_mut(x), rope_apply(go, pos, heads, base, /*inverse=*/true));
  });
}

Var dropout(Var x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be below 1");
  Graph& g = graph_of(x);
  const double keep = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<Tensor>(x.shape(), 0.0);
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? 0.0 : keep;
    out[i] *= (*mask)[i];
  }
  return g.record(std::move(out), {x}, [x, mask](Graph& gr, const Tensor& go) {
    Tensor& gx = gr.grad_mut(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * (*mask)[i];
  });
}

Var straight_through(Var x, const Tensor& target) {
  Graph& g = graph_of(x);
  if (x.shape() != target.shape()) mismatch("straight_through", x.shape(), target.shape());
  return g.record(target, {x}, [x](Graph& gr, const Tensor& go) { add_into(gr.grad_mut(x), go); });
}

namespace {

// Copies columns [h*hd, (h+1)*hd) of a [L, w] matrix into a contiguous [L, hd] block.
std::vector<double> head_slice(const Tensor& t, std::size_t h, std::size_t hd) {
  const std::size_t L = t.rows(), w = t.cols();
  std::vector<double> out(L * hd);
  for (std::size_t i = 0; i < L; ++i) std::copy_n(t.data() + i * w + h * hd, hd, out.data() + i * hd);
  return out;
}

}  // namespace

Var attention(Var q, Var k, Var v, const AttentionMask& mask, std::size_t heads, const AttentionOptions& opts) {
  Graph& g = graph_of(q, k);
  graph_of(q, v);
  require_rank2("attention", q.shape());
  if (k.shape() != q.shape()) mismatch("attention(k)", q.shape(), k.shape());
  if (v.shape() != q.shape()) mismatch("attention(v)", q.shape(), v.shape());
  const std::size_t L = q.rows(), w = q.cols();
  if (mask.size() != L) {
    throw ShapeError("attention: mask covers " + std::to_string(mask.size()) + " tokens, sequence has " +
                     std::to_string(L));
  }
  if (heads == 0 || w % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(w) + " not divisible by " + std::to_string(heads) + " heads");
  }
  if (opts.dropout > 0.0 && opts.rng == nullptr) throw std::invalid_argument("attention: dropout needs an Rng");
  const std::size_t hd = w / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  // Per head: post-softmax weights P, the weights actually applied, and the dropout scale per entry.
  auto probs = std::make_shared<std::vector<Tensor>>();
  auto applied = std::make_shared<std::vector<Tensor>>();
  auto drops = std::make_shared<std::vector<Tensor>>();
  Tensor out = Tensor::matrix(L, w);
  std::vector<double> scores(L * L), ctx(L * hd);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto qh = head_slice(q.value(), h, hd);
    const auto kh = head_slice(k.value(), h, hd);
    const auto vh = head_slice(v.value(), h, hd);
    gemm::nt(L, L, hd, qh.data(), hd, kh.data(), hd, scores.data(), L);
    Tensor p = Tensor::matrix(L, L, 0.0);
    for (std::size_t i = 0; i < L; ++i) {
      const auto [first, last] = mask.key_range(i);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = first; j < last; ++j) mx = std::max(mx, scores[i * L + j] * inv_sqrt);
      double total = 0.0;
      for (std::size_t j = first; j < last; ++j) {
        p(i, j) = std::exp(scores[i * L + j] * inv_sqrt - mx);
        total += p(i, j);
      }
      for (std::size_t j = first; j < last; ++j) p(i, j) /= total;
    }
    if (opts.probe) opts.probe->weights.push_back(p);
    Tensor used = p;
    Tensor drop;
    if (opts.dropout > 0.0) {
      const double keep = 1.0 / (1.0 - opts.dropout);
      drop = Tensor::matrix(L, L, 0.0);
      for (std::size_t i = 0; i < L; ++i) {
        const auto [first, last] = mask.key_range(i);
        for (std::size_t j = first; j < last; ++j) {
          drop(i, j) = opts.rng->uniform() < opts.dropout ? 0.0 : keep;
          used(i, j) *= drop(i, j);
        }
      }
    }
    gemm::nn(L, hd, L, used.data(), L, vh.data(), hd, ctx.data(), hd);
    for (std::size_t i = 0; i < L; ++i) std::copy_n(ctx.data() + i * hd, hd, out.data() + i * w + h * hd);
    if (g.tracks_gradients()) {
      probs->push_back(std::move(p));
      applied->push_back(std::move(used));
      drops->push_back(std::move(drop));
    }
  }

  auto mask_copy = std::make_shared<AttentionMask>(mask);
  return g.record(std::move(out), {q, k, v},
                  [q, k, v, probs, applied, drops, mask_copy, heads, hd, L, inv_sqrt](Graph& gr, const Tensor& go) {
                    const bool need_q = gr.requires_grad(q), need_k = gr.requires_grad(k),
                               need_v = gr.requires_grad(v);
                    std::vector<double> dp(L * L), ds(L * L), tmp(L * hd);
                    for (std::size_t h = 0; h < heads; ++h) {
                      const Tensor& p = (*probs)[h];
                      const Tensor& used = (*applied)[h];
                      const Tensor& drop = (*drops)[h];
                      const bool dropped = drop.size() > 0;
                      const auto goh = head_slice(go, h, hd);
                      if (need_v) {
                        gemm::tn(L, hd, L, used.data(), L, goh.data(), hd, tmp.data(), hd);
                        Tensor& gv = gr.grad_mut(v);
                        for (std::size_t i = 0; i < L; ++i)
                          for (std::size_t c = 0; c < hd; ++c) gv(i, h * hd + c) += tmp[i * hd + c];
                      }
                      if (!need_q && !need_k) continue;
                      const auto vh = head_slice(v.value(), h, hd);
                      gemm::nt(L, L, hd, goh.data(), hd, vh.data(), hd, dp.data(), L);
                      std::fill(ds.begin(), ds.end(), 0.0);
                      for (std::size_t i = 0; i < L; ++i) {
                        const auto [first, last] = mask_copy->key_range(i);
                        double dot = 0.0;
                        for (std::size_t j = first; j < last; ++j) {
                          if (dropped) dp[i * L + j] *= drop(i, j);
                          dot += dp[i * L + j] * p(i, j);
                        }
                        for (std::size_t j = first; j < last; ++j)
                          ds[i * L + j] = p(i, j) * (dp[i * L + j] - dot) * inv_sqrt;
                      }
                      if (need_q) {
                        const auto kh = head_slice(k.value(), h, hd);
                        gemm::nn(L, hd, L, ds.data(), L, kh.data(), hd, tmp.data(), hd);
                        Tensor& gq = gr.grad_mut(q);
                        for (std::size_t i = 0; i < L; ++i)
                          for (std::size_t c = 0; c < hd; ++c) gq(i, h * hd + c) += tmp[i * hd + c];
                      }
                      if (need_k) {
                        const auto qh = head_slice(q.value(), h, hd);
                        gemm::tn(L, hd, L, ds.data(), L, qh.data(), hd, tmp.data(), hd);
                        Tensor& gk = gr.grad_mut(k);
                        for (std::size_t i = 0; i < L; ++i)
                          for (std::size_t c = 0; c < hd; ++c) gk(i, h * hd + c) += tmp[i * hd + c];
                      }
                    }
                  });
}

}  // namespace msgen::ops
