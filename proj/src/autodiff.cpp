#include "ivg/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ivg/errors.hpp"

namespace ivg::ad {

namespace {

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw std::logic_error("Var is not attached to a tape");
  return *a.tape;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ConfigError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, {}, false, -1});
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::input(Matrix value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, {}, true, -1});
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(const Matrix& value, int slot) {
  if (auto it = slot_nodes_.find(slot); it != slot_nodes_.end()) return {this, it->second};
  nodes_.push_back(Node{{}, &value, {}, {}, record_, slot});
  const int id = static_cast<int>(nodes_.size() - 1);
  slot_nodes_.emplace(slot, id);
  return {this, id};
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, Backward back) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || requires_grad(v.id);
  return push(std::move(value), needs, std::move(back));
}

Var Tape::push(Matrix value, bool needs, Backward back) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, needs ? std::move(back) : Backward{}, needs, -1});
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Matrix& Tape::grad_buffer(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    const Matrix& v = value(id);
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::backward(Var root) {
  const Matrix& rv = value(root.id);
  if (rv.rows() != 1 || rv.cols() != 1) throw std::logic_error("backward() needs a 1x1 root");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[static_cast<std::size_t>(root.id)].grad = Matrix::Ones(1, 1);
  for (int i = root.id; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.back || n.grad.size() == 0) continue;
    n.back(*this, i, n.grad);
  }
}

void Tape::flush_param_grads(std::span<Matrix> grads) const {
  for (const auto& [slot, id] : slot_nodes_) {
    const auto& g = nodes_[static_cast<std::size_t>(id)].grad;
    if (g.size() == 0) continue;
    auto& dst = grads[static_cast<std::size_t>(slot)];
    if (dst.size() == 0)
      dst = g;
    else
      dst += g;
  }
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  if (a.cols() != b.rows()) throw ConfigError("matmul: inner dimensions differ");
  return t.push(a.value() * b.value(), {a, b}, [a, b](Tape& t, int, const Matrix& g) {
    if (t.requires_grad(a.id)) t.accumulate(a.id, g * b.value().transpose());
    if (t.requires_grad(b.id)) t.accumulate(b.id, a.value().transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a);
  if (a.cols() != b.cols()) throw ConfigError("matmul_nt: inner dimensions differ");
  return t.push(a.value() * b.value().transpose(), {a, b}, [a, b](Tape& t, int, const Matrix& g) {
    if (t.requires_grad(a.id)) t.accumulate(a.id, g * b.value());
    if (t.requires_grad(b.id)) t.accumulate(b.id, g.transpose() * a.value());
  });
}

Var transpose(Var a) {
  return tape_of(a).push(a.value().transpose(), {a},
                         [a](Tape& t, int, const Matrix& g) { t.accumulate(a.id, g.transpose()); });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  return tape_of(a).push(a.value() + b.value(), {a, b}, [a, b](Tape& t, int, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  return tape_of(a).push(a.value() - b.value(), {a, b}, [a, b](Tape& t, int, const Matrix& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, -g);
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "hadamard");
  return tape_of(a).push(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, int, const Matrix& g) {
    if (t.requires_grad(a.id)) t.accumulate(a.id, g.cwiseProduct(b.value()));
    if (t.requires_grad(b.id)) t.accumulate(b.id, g.cwiseProduct(a.value()));
  });
}

Var scale(Var a, double s) {
  return tape_of(a).push(a.value() * s, {a}, [a, s](Tape& t, int, const Matrix& g) { t.accumulate(a.id, g * s); });
}

Var relu(Var a) {
  return tape_of(a).push(a.value().cwiseMax(0.0), {a}, [a](Tape& t, int, const Matrix& g) {
    t.accumulate(a.id, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var softplus(Var a) {
  return tape_of(a).push(a.value().unaryExpr(&stable_softplus), {a}, [a](Tape& t, int, const Matrix& g) {
    t.accumulate(a.id, g.cwiseProduct(a.value().unaryExpr(&sigmoid)));
  });
}

Var add_row(Var a, Var r) {
  if (r.rows() != 1 || r.cols() != a.cols()) throw ConfigError("add_row: row vector width mismatch");
  Matrix out = a.value().rowwise() + r.value().row(0);
  return tape_of(a).push(std::move(out), {a, r}, [a, r](Tape& t, int, const Matrix& g) {
    t.accumulate(a.id, g);
    if (t.requires_grad(r.id)) t.accumulate(r.id, g.colwise().sum());
  });
}

Var add_col(Var a, Var c) {
  if (c.cols() != 1 || c.rows() != a.rows()) throw ConfigError("add_col: column vector height mismatch");
  Matrix out = a.value().colwise() + c.value().col(0);
  return tape_of(a).push(std::move(out), {a, c}, [a, c](Tape& t, int, const Matrix& g) {
    t.accumulate(a.id, g);
    if (t.requires_grad(c.id)) t.accumulate(c.id, g.rowwise().sum());
  });
}

Var mul_row(Var a, Var r) {
  if (r.rows() != 1 || r.cols() != a.cols()) throw ConfigError("mul_row: row vector width mismatch");
  Matrix out = a.value().array().rowwise() * r.value().row(0).array();
  return tape_of(a).push(std::move(out), {a, r}, [a, r](Tape& t, int, const Matrix& g) {
    if (t.requires_grad(a.id)) t.accumulate(a.id, (g.array().rowwise() * r.value().row(0).array()).matrix());
    if (t.requires_grad(r.id)) t.accumulate(r.id, g.cwiseProduct(a.value()).colwise().sum());
  });
}

Var repeat_rows(Var r, Eigen::Index count) {
  if (r.rows() != 1) throw ConfigError("repeat_rows: expects a single row");
  return tape_of(r).push(r.value().replicate(count, 1), {r},
                         [r](Tape& t, int, const Matrix& g) { t.accumulate(r.id, g.colwise().sum()); });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ConfigError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index off = 0;
  bool needs = false;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
    needs = needs || p.tape->requires_grad(p.id);
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return parts[0].tape->push(std::move(out), needs, [saved](Tape& t, int, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& p : saved) {
      t.accumulate(p.id, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > a.cols()) throw ConfigError("slice_cols: out of range");
  return tape_of(a).push(a.value().middleCols(start, count), {a}, [a, start, count](Tape& t, int, const Matrix& g) {
    t.grad_buffer(a.id).middleCols(start, count) += g;
  });
}

Var row(Var a, Eigen::Index i) {
  if (i < 0 || i >= a.rows()) throw ConfigError("row: index out of range");
  return tape_of(a).push(a.value().row(i), {a},
                         [a, i](Tape& t, int, const Matrix& g) { t.grad_buffer(a.id).row(i) += g.row(0); });
}

Var gather_rows(Var table, std::span<const int> indices) {
  const Matrix& v = table.value();
  Matrix out(static_cast<Eigen::Index>(indices.size()), v.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= v.rows()) throw ConfigError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = v.row(indices[i]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return tape_of(table).push(std::move(out), {table}, [table, idx](Tape& t, int, const Matrix& g) {
    Matrix& gt = t.grad_buffer(table.id);
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return tape_of(a).push(std::move(out), {a}, [a](Tape& t, int, const Matrix& g) {
    t.accumulate(a.id, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean_rows(Var a) {
  const double n = static_cast<double>(a.rows());
  return tape_of(a).push(a.value().colwise().mean(), {a}, [a, n](Tape& t, int, const Matrix& g) {
    t.accumulate(a.id, (g / n).replicate(a.rows(), 1));
  });
}

Var max_rows(Var a, const RowMask& mask) {
  const Matrix& v = a.value();
  if (!mask.empty() && static_cast<Eigen::Index>(mask.size()) != v.rows())
    throw ConfigError("max_rows: mask length mismatch");
  Matrix out(1, v.cols());
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(v.cols()), -1);
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      if (!mask.empty() && !mask[static_cast<std::size_t>(r)]) continue;
      if (arg[static_cast<std::size_t>(c)] < 0 || v(r, c) > best) {
        best = v(r, c);
        arg[static_cast<std::size_t>(c)] = r;
      }
    }
    if (arg[static_cast<std::size_t>(c)] < 0) throw ConfigError("max_rows: every row is masked");
    out(0, c) = best;
  }
  return tape_of(a).push(std::move(out), {a}, [a, arg](Tape& t, int, const Matrix& g) {
    Matrix& ga = t.grad_buffer(a.id);
    for (Eigen::Index c = 0; c < g.cols(); ++c) ga(arg[static_cast<std::size_t>(c)], c) += g(0, c);
  });
}

Var masked_mean(Var a, const RowMask& mask) {
  if (a.rows() != 1 || static_cast<Eigen::Index>(mask.size()) != a.cols())
    throw ConfigError("masked_mean: expects a 1 x T row and a length-T mask");
  double total = 0.0;
  int n = 0;
  for (std::size_t j = 0; j < mask.size(); ++j)
    if (mask[j]) {
      total += a.value()(0, static_cast<Eigen::Index>(j));
      ++n;
    }
  if (n == 0) throw ConfigError("masked_mean: empty selection");
  Matrix out(1, 1);
  out(0, 0) = total / n;
  return tape_of(a).push(std::move(out), {a}, [a, mask, n](Tape& t, int, const Matrix& g) {
    Matrix& ga = t.grad_buffer(a.id);
    for (std::size_t j = 0; j < mask.size(); ++j)
      if (mask[j]) ga(0, static_cast<Eigen::Index>(j)) += g(0, 0) / n;
  });
}

Var linear_combination(std::span<const std::pair<double, Var>> terms) {
  if (terms.empty()) throw ConfigError("linear_combination: no terms");
  Tape& t = *terms[0].second.tape;
  Matrix out = Matrix::Zero(1, 1);
  bool needs = false;
  for (const auto& [w, v] : terms) {
    out(0, 0) += w * v.scalar();
    needs = needs || t.requires_grad(v.id);
  }
  std::vector<std::pair<double, Var>> saved(terms.begin(), terms.end());
  return t.push(std::move(out), needs, [saved](Tape& t, int, const Matrix& g) {
    for (const auto& [w, v] : saved) t.accumulate(v.id, g * w);
  });
}

Var softmax_rows(Var a, const RowMask& col_mask) {
  const Matrix& v = a.value();
  if (!col_mask.empty() && static_cast<Eigen::Index>(col_mask.size()) != v.cols())
    throw ConfigError("softmax_rows: mask length mismatch");
  bool any = col_mask.empty();
  for (bool m : col_mask) any = any || m;
  if (!any || v.cols() == 0) throw ConfigError("softmax_rows: every position is masked");

  Matrix p = Matrix::Zero(v.rows(), v.cols());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < v.cols(); ++c)
      if (col_mask.empty() || col_mask[static_cast<std::size_t>(c)]) mx = std::max(mx, v(r, c));
    double z = 0.0;
    for (Eigen::Index c = 0; c < v.cols(); ++c)
      if (col_mask.empty() || col_mask[static_cast<std::size_t>(c)]) {
        p(r, c) = std::exp(v(r, c) - mx);
        z += p(r, c);
      }
    p.row(r) /= z;
  }
  return tape_of(a).push(std::move(p), {a}, [a](Tape& t, int self, const Matrix& g) {
    const Matrix& p = t.value(self);
    const Eigen::VectorXd dot = g.cwiseProduct(p).rowwise().sum();
    t.accumulate(a.id, p.cwiseProduct(g.colwise() - dot));
  });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  const Matrix& v = x.value();
  const Eigen::Index d = v.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d)
    throw ConfigError("layer_norm_rows: gain/bias width mismatch");
  Matrix xhat(v.rows(), d);
  Eigen::VectorXd inv_std(v.rows());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double mu = v.row(r).mean();
    const double var = (v.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (v.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  return tape_of(x).push(std::move(out), {x, gamma, beta},
                         [x, gamma, beta, xhat, inv_std](Tape& t, int, const Matrix& g) {
                           if (t.requires_grad(gamma.id)) t.accumulate(gamma.id, g.cwiseProduct(xhat).colwise().sum());
                           if (t.requires_grad(beta.id)) t.accumulate(beta.id, g.colwise().sum());
                           if (!t.requires_grad(x.id)) return;
                           const Matrix dxhat = g.array().rowwise() * gamma.value().row(0).array();
                           const Eigen::VectorXd m1 = dxhat.rowwise().mean();
                           const Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
                           Matrix dx = dxhat.colwise() - m1;
                           dx -= (xhat.array().colwise() * m2.array()).matrix();
                           dx = dx.array().colwise() * inv_std.array();
                           t.accumulate(x.id, dx);
                         });
}

Var depthwise_conv1d(Var x, Var kernel, Var bias) {
  const Matrix& v = x.value();
  const Matrix& w = kernel.value();
  const Eigen::Index L = v.rows();
  const Eigen::Index k = w.rows();
  if (k % 2 == 0) throw ConfigError("depthwise_conv1d: kernel size must be odd");
  if (w.cols() != v.cols() || bias.rows() != 1 || bias.cols() != v.cols())
    throw ConfigError("depthwise_conv1d: channel mismatch");
  const Eigen::Index half = k / 2;
  Matrix out = bias.value().replicate(L, 1);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index shift = j - half;
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index t1 = std::min<Eigen::Index>(L, L - shift);
    if (t1 <= t0) continue;
    out.middleRows(t0, t1 - t0).array() +=
        v.middleRows(t0 + shift, t1 - t0).array().rowwise() * w.row(j).array();
  }
  return tape_of(x).push(std::move(out), {x, kernel, bias}, [x, kernel, bias, half](Tape& t, int, const Matrix& g) {
    const Matrix& v = x.value();
    const Matrix& w = kernel.value();
    const Eigen::Index L = v.rows();
    if (t.requires_grad(bias.id)) t.accumulate(bias.id, g.colwise().sum());
    const bool gx = t.requires_grad(x.id);
    const bool gw = t.requires_grad(kernel.id);
    Matrix* dx = gx ? &t.grad_buffer(x.id) : nullptr;
    Matrix* dw = gw ? &t.grad_buffer(kernel.id) : nullptr;
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
      const Eigen::Index shift = j - half;
      const Eigen::Index t0 = std::max<Eigen::Index>(0, -shift);
      const Eigen::Index t1 = std::min<Eigen::Index>(L, L - shift);
      if (t1 <= t0) continue;
      const auto gs = g.middleRows(t0, t1 - t0);
      if (dx) dx->middleRows(t0 + shift, t1 - t0).array() += gs.array().rowwise() * w.row(j).array();
      if (dw) dw->row(j) += gs.cwiseProduct(v.middleRows(t0 + shift, t1 - t0)).colwise().sum();
    }
  });
}

Var neg_log_pick(Var p, Eigen::Index idx, double eps) {
  if (p.rows() != 1 || idx < 0 || idx >= p.cols()) throw ConfigError("neg_log_pick: index out of range");
  const double v = p.value()(0, idx);
  const bool clamped = !(v >= eps);
  Matrix out(1, 1);
  out(0, 0) = -std::log(clamped ? eps : v);
  return tape_of(p).push(std::move(out), {p}, [p, idx, v, clamped](Tape& t, int, const Matrix& g) {
    if (clamped) return;
    t.grad_buffer(p.id)(0, idx) -= g(0, 0) / v;
  });
}

}  // namespace ivg::ad
