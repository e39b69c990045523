#include "mmrec/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mmrec {

std::string_view to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::kPredictor: return "predictor";
    case ParamGroup::kExtractor: return "extractor";
    case ParamGroup::kRepresentation: return "representation";
    case ParamGroup::kFusion: return "fusion";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// ParameterSet

template <typename Real>
Parameter<Real>& ParameterSet<Real>::add(std::string name, ParamGroup group, Matrix<Real> init) {
  if (index_.contains(name)) throw std::invalid_argument("parameter '" + name + "' already exists");
  if (!init.all_finite()) throw NumericError("parameter '" + name + "' initialised non-finite");
  index_.emplace(name, params_.size());
  Matrix<Real> grad(init.rows(), init.cols());
  params_.push_back({std::move(name), group, std::move(init), std::move(grad)});
  return params_.back();
}

template <typename Real>
Parameter<Real>& ParameterSet<Real>::get(std::string_view name) {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("no parameter '" + std::string(name) + "'");
  return params_[it->second];
}

template <typename Real>
const Parameter<Real>& ParameterSet<Real>::get(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("no parameter '" + std::string(name) + "'");
  return params_[it->second];
}

template <typename Real>
bool ParameterSet<Real>::owns(const Parameter<Real>* p) const {
  return std::any_of(params_.begin(), params_.end(), [p](const auto& q) { return &q == p; });
}

template <typename Real>
void ParameterSet<Real>::zero_grad() {
  for (auto& p : params_) p.grad.fill(Real{0});
}

template <typename Real>
std::map<ParamGroup, std::vector<std::string>> ParameterSet<Real>::census() const {
  std::map<ParamGroup, std::vector<std::string>> out{{ParamGroup::kPredictor, {}},
                                                     {ParamGroup::kExtractor, {}},
                                                     {ParamGroup::kRepresentation, {}},
                                                     {ParamGroup::kFusion, {}}};
  for (const auto& p : params_) out[p.group].push_back(p.name);
  return out;
}

template <typename Real>
std::size_t ParameterSet<Real>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename Real>
typename ParameterSet<Real>::Snapshot ParameterSet<Real>::snapshot() const {
  Snapshot s;
  s.reserve(params_.size());
  for (const auto& p : params_) s.push_back(p.value);
  return s;
}

template <typename Real>
void ParameterSet<Real>::restore(const Snapshot& snapshot) {
  if (snapshot.size() != params_.size()) throw std::invalid_argument("snapshot size mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!snapshot[i].same_shape(params_[i].value)) {
      throw ShapeError("snapshot shape mismatch for '" + params_[i].name + "'");
    }
    params_[i].value = snapshot[i];
  }
}

// ---------------------------------------------------------------------------
// Tape bookkeeping

namespace {

template <typename Real>
void check_finite(const char* op, const Matrix<Real>& m) {
  if (!m.all_finite()) throw NumericError(std::string(op) + ": non-finite value produced");
}

template <typename Real>
void add_into(Matrix<Real>& dst, const Matrix<Real>& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

std::size_t broadcast_dim(const char* op, std::size_t a, std::size_t b) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw ShapeError(std::string(op) + ": cannot broadcast " + std::to_string(a) + " against " +
                   std::to_string(b));
}

// Sums g over the dimensions that were broadcast to reach g's shape.
template <typename Real>
Matrix<Real> reduce_to(const Matrix<Real>& g, std::size_t rows, std::size_t cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix<Real> out(rows, cols);
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j)
      out(rows == 1 ? 0 : i, cols == 1 ? 0 : j) += g(i, j);
  return out;
}

// a^T * g
template <typename Real>
Matrix<Real> matmul_tn(const Matrix<Real>& a, const Matrix<Real>& g) {
  Matrix<Real> out(a.cols(), g.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto gi = g.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const Real s = a(i, k);
      if (s == Real{0}) continue;
      auto dst = out.row(k);
      for (std::size_t j = 0; j < gi.size(); ++j) dst[j] += s * gi[j];
    }
  }
  return out;
}

}  // namespace

template <typename Real>
Var<Real> Tape<Real>::push(const char* op, Mat value, bool requires_grad, Backward backward) {
  check_finite(op, value);
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.op = op;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return V(this, static_cast<std::uint32_t>(nodes_.size() - 1), generation_);
}

template <typename Real>
const typename Tape<Real>::Node& Tape<Real>::node(V v) const {
  if (v.tape_ != this) throw std::logic_error("var: belongs to a different tape");
  if (v.generation_ != generation_) throw std::logic_error("tensor used after tape reset");
  return nodes_[v.id_];
}

template <typename Real>
const Matrix<Real>& Tape<Real>::value(V v) const {
  return node(v).value;
}

template <typename Real>
Matrix<Real>& Tape<Real>::grad_buffer(std::uint32_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Mat(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename Real>
void Tape<Real>::accumulate(std::uint32_t id, const Mat& contribution) {
  if (!nodes_[id].requires_grad) return;
  add_into(grad_buffer(id), contribution);
}

template <typename Real>
Var<Real> Tape<Real>::constant(Mat value) {
  return push("constant", std::move(value), false, {});
}

template <typename Real>
Var<Real> Tape<Real>::variable(Mat value) {
  return push("variable", std::move(value), true, [](Tape&, std::uint32_t) {});
}

template <typename Real>
Var<Real> Tape<Real>::param(Parameter<Real>& p) {
  if (const auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return V(this, it->second, generation_);
  }
  auto v = push("parameter", p.value, true, [](Tape&, std::uint32_t) {});
  nodes_[v.id_].param = &p;
  param_nodes_.emplace(&p, v.id_);
  return v;
}

template <typename Real>
void Tape<Real>::backward(V loss) {
  const auto& root = node(loss);
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                shape_string(root.value.rows(), root.value.cols()));
  }
  if (replayed_) throw std::logic_error("backward: tape already replayed; reset() first");
  replayed_ = true;
  for (auto& n : nodes_) n.grad = Mat();
  if (!root.requires_grad) return;
  grad_buffer(loss.id_)(0, 0) = Real{1};
  for (std::int64_t i = loss.id_; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.empty()) continue;
    check_finite(n.op, n.grad);
    if (n.backward) n.backward(*this, static_cast<std::uint32_t>(i));
    if (n.param != nullptr) add_into(n.param->grad, n.grad);
  }
}

template <typename Real>
Matrix<Real> Tape<Real>::grad(V v) const {
  const auto& n = node(v);
  if (n.grad.empty()) return Mat(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename Real>
void Tape<Real>::reset() {
  nodes_.clear();
  param_nodes_.clear();
  stages_.clear();
  ++generation_;
  replayed_ = false;
}

template <typename Real>
std::vector<const Parameter<Real>*> Tape<Real>::parameters() const {
  std::vector<const Parameter<Real>*> out;
  for (const auto& n : nodes_)
    if (n.param != nullptr) out.push_back(n.param);
  return out;
}

template <typename Real>
std::vector<std::string_view> Tape<Real>::ops() const {
  std::vector<std::string_view> out;
  out.reserve(nodes_.size());
  for (const auto& n : nodes_) out.emplace_back(n.op);
  return out;
}

// ---------------------------------------------------------------------------
// Generic elementwise helpers

template <typename Real>
Var<Real> Tape<Real>::unary(const char* op, V a, const std::function<Real(Real)>& f,
                            const std::function<Real(Real, Real)>& df) {
  const auto& x = value(a);
  Mat out(x.rows(), x.cols());
  auto xs = x.values();
  auto ys = out.values();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = f(xs[i]);
  const auto aid = a.id_;
  return push(op, std::move(out), needs(a), [aid, df](Tape& t, std::uint32_t self) {
    const auto& g = t.out_grad(self);
    const auto& xv = t.val(aid);
    const auto& yv = t.val(self);
    Mat dx(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < dx.size(); ++i)
      dx.values()[i] = g.values()[i] * df(xv.values()[i], yv.values()[i]);
    t.accumulate(aid, dx);
  });
}

template <typename Real>
Var<Real> Tape<Real>::broadcast_binary(const char* op, V a, V b,
                                       const std::function<Real(Real, Real)>& f,
                                       const std::function<Real(Real, Real)>& da,
                                       const std::function<Real(Real, Real)>& db) {
  const auto& x = value(a);
  const auto& y = value(b);
  const std::size_t rows = broadcast_dim(op, x.rows(), y.rows());
  const std::size_t cols = broadcast_dim(op, x.cols(), y.cols());
  Mat out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out(i, j) = f(x(x.rows() == 1 ? 0 : i, x.cols() == 1 ? 0 : j),
                    y(y.rows() == 1 ? 0 : i, y.cols() == 1 ? 0 : j));
  const auto aid = a.id_;
  const auto bid = b.id_;
  return push(op, std::move(out), needs(a) || needs(b),
              [aid, bid, da, db](Tape& t, std::uint32_t self) {
                const auto& g = t.out_grad(self);
                const auto& xv = t.val(aid);
                const auto& yv = t.val(bid);
                Mat gx(g.rows(), g.cols());
                Mat gy(g.rows(), g.cols());
                for (std::size_t i = 0; i < g.rows(); ++i) {
                  for (std::size_t j = 0; j < g.cols(); ++j) {
                    const Real xe = xv(xv.rows() == 1 ? 0 : i, xv.cols() == 1 ? 0 : j);
                    const Real ye = yv(yv.rows() == 1 ? 0 : i, yv.cols() == 1 ? 0 : j);
                    gx(i, j) = g(i, j) * da(xe, ye);
                    gy(i, j) = g(i, j) * db(xe, ye);
                  }
                }
                t.accumulate(aid, reduce_to(gx, xv.rows(), xv.cols()));
                t.accumulate(bid, reduce_to(gy, yv.rows(), yv.cols()));
              });
}

// ---------------------------------------------------------------------------
// Primitives

template <typename Real>
Var<Real> Tape<Real>::matmul(V a, V b) {
  auto out = mmrec::matmul(value(a), value(b));
  const auto aid = a.id_;
  const auto bid = b.id_;
  return push("matmul", std::move(out), needs(a) || needs(b), [aid, bid](Tape& t, std::uint32_t self) {
    const auto& g = t.out_grad(self);
    if (t.nodes_[aid].requires_grad) t.accumulate(aid, matmul_transposed(g, t.val(bid)));
    if (t.nodes_[bid].requires_grad) t.accumulate(bid, matmul_tn(t.val(aid), g));
  });
}

template <typename Real>
Var<Real> Tape<Real>::spmm(const SparseMatrix<Real>& a, V x) {
  auto out = a.multiply(value(x));
  const auto xid = x.id_;
  return push("spmm", std::move(out), needs(x), [a, xid](Tape& t, std::uint32_t self) {
    t.accumulate(xid, a.multiply_transposed(t.out_grad(self)));
  });
}

template <typename Real>
Var<Real> Tape<Real>::spmm_values(const SparsityPattern::Ptr& pattern, V values, V x) {
  const auto& v = value(values);
  if (v.rows() != pattern->nnz() || v.cols() != 1) {
    throw ShapeError("spmm_values: expected " + std::to_string(pattern->nnz()) + "x1 values");
  }
  SparseMatrix<Real> a(pattern, std::vector<Real>(v.values().begin(), v.values().end()));
  auto out = a.multiply(value(x));
  const auto vid = values.id_;
  const auto xid = x.id_;
  return push("spmm_values", std::move(out), needs(values) || needs(x),
              [pattern, vid, xid](Tape& t, std::uint32_t self) {
                const auto& g = t.out_grad(self);
                const auto& xv = t.val(xid);
                const auto& vv = t.val(vid);
                const auto rows = pattern->row_ids();
                const auto cols = pattern->col_ids();
                if (t.nodes_[vid].requires_grad) {
                  Mat gv(pattern->nnz(), 1);
                  for (std::size_t e = 0; e < pattern->nnz(); ++e)
                    gv(e, 0) = dot<Real>(g.row(rows[e]), xv.row(cols[e]));
                  t.accumulate(vid, gv);
                }
                if (t.nodes_[xid].requires_grad) {
                  SparseMatrix<Real> a(pattern,
                                       std::vector<Real>(vv.values().begin(), vv.values().end()));
                  t.accumulate(xid, a.multiply_transposed(g));
                }
              });
}

template <typename Real>
Var<Real> Tape<Real>::add(V a, V b) {
  return broadcast_binary(
      "add", a, b, [](Real x, Real y) { return x + y; }, [](Real, Real) { return Real{1}; },
      [](Real, Real) { return Real{1}; });
}

template <typename Real>
Var<Real> Tape<Real>::sub(V a, V b) {
  return broadcast_binary(
      "sub", a, b, [](Real x, Real y) { return x - y; }, [](Real, Real) { return Real{1}; },
      [](Real, Real) { return Real{-1}; });
}

template <typename Real>
Var<Real> Tape<Real>::mul(V a, V b) {
  return broadcast_binary(
      "mul", a, b, [](Real x, Real y) { return x * y; }, [](Real, Real y) { return y; },
      [](Real x, Real) { return x; });
}

template <typename Real>
Var<Real> Tape<Real>::div(V a, V b) {
  return broadcast_binary(
      "div", a, b, [](Real x, Real y) { return x / y; }, [](Real, Real y) { return Real{1} / y; },
      [](Real x, Real y) { return -x / (y * y); });
}

template <typename Real>
Var<Real> Tape<Real>::scale(V a, Real s) {
  return unary(
      "scale", a, [s](Real x) { return s * x; }, [s](Real, Real) { return s; });
}

template <typename Real>
Var<Real> Tape<Real>::add_scalar(V a, Real s) {
  return unary(
      "add_scalar", a, [s](Real x) { return x + s; }, [](Real, Real) { return Real{1}; });
}

template <typename Real>
Var<Real> Tape<Real>::sigmoid(V a) {
  return unary(
      "sigmoid", a,
      [](Real x) {
        if (x >= Real{0}) return Real{1} / (Real{1} + std::exp(-x));
        const Real e = std::exp(x);
        return e / (Real{1} + e);
      },
      [](Real, Real y) { return y * (Real{1} - y); });
}

template <typename Real>
Var<Real> Tape<Real>::softplus(V a) {
  return unary(
      "softplus", a,
      [](Real x) {
        return x > Real{0} ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
      },
      [](Real x, Real) {
        if (x >= Real{0}) return Real{1} / (Real{1} + std::exp(-x));
        const Real e = std::exp(x);
        return e / (Real{1} + e);
      });
}

template <typename Real>
Var<Real> Tape<Real>::log(V a) {
  return unary(
      "log", a, [](Real x) { return std::log(x); }, [](Real x, Real) { return Real{1} / x; });
}

template <typename Real>
Var<Real> Tape<Real>::exp(V a) {
  return unary(
      "exp", a, [](Real x) { return std::exp(x); }, [](Real, Real y) { return y; });
}

template <typename Real>
Var<Real> Tape<Real>::relu(V a) {
  return leaky_relu(a, Real{0});
}

template <typename Real>
Var<Real> Tape<Real>::leaky_relu(V a, Real slope) {
  return unary(
      "leaky_relu", a, [slope](Real x) { return x > Real{0} ? x : slope * x; },
      [slope](Real x, Real) { return x > Real{0} ? Real{1} : slope; });
}

template <typename Real>
Var<Real> Tape<Real>::maximum(V a, V b) {
  return broadcast_binary(
      "maximum", a, b, [](Real x, Real y) { return x >= y ? x : y; },
      [](Real x, Real y) { return x >= y ? Real{1} : Real{0}; },
      [](Real x, Real y) { return x >= y ? Real{0} : Real{1}; });
}

template <typename Real>
Var<Real> Tape<Real>::l2_normalize(V a) {
  const auto& x = value(a);
  Mat out(x.rows(), x.cols());
  std::vector<Real> norms(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const Real n = std::sqrt(dot<Real>(x.row(i), x.row(i)));
    norms[i] = n;
    if (n == Real{0}) continue;
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) / n;
  }
  const auto aid = a.id_;
  return push("l2_normalize", std::move(out), needs(a),
              [aid, norms = std::move(norms)](Tape& t, std::uint32_t self) {
                const auto& g = t.out_grad(self);
                const auto& y = t.val(self);
                Mat dx(g.rows(), g.cols());
                for (std::size_t i = 0; i < g.rows(); ++i) {
                  if (norms[i] == Real{0}) continue;
                  const Real yg = dot<Real>(y.row(i), g.row(i));
                  for (std::size_t j = 0; j < g.cols(); ++j)
                    dx(i, j) = (g(i, j) - y(i, j) * yg) / norms[i];
                }
                t.accumulate(aid, dx);
              });
}

template <typename Real>
Var<Real> Tape<Real>::concat(std::span<const V> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  bool grad = false;
  for (const auto& p : parts) {
    if (value(p).rows() != rows) throw ShapeError("concat: row count mismatch");
    cols += value(p).cols();
    grad = grad || needs(p);
  }
  Mat out(rows, cols);
  std::vector<std::uint32_t> ids;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& m = value(p);
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(m.row(i).begin(), m.cols(), out.row(i).begin() + static_cast<std::ptrdiff_t>(offset));
    offset += m.cols();
    ids.push_back(p.id_);
  }
  return push("concat", std::move(out), grad, [ids](Tape& t, std::uint32_t self) {
    const auto& g = t.out_grad(self);
    std::size_t off = 0;
    for (auto id : ids) {
      const auto& m = t.val(id);
      if (t.nodes_[id].requires_grad) {
        Mat part(m.rows(), m.cols());
        for (std::size_t i = 0; i < m.rows(); ++i)
          for (std::size_t j = 0; j < m.cols(); ++j) part(i, j) = g(i, off + j);
        t.accumulate(id, part);
      }
      off += m.cols();
    }
  });
}

template <typename Real>
Var<Real> Tape<Real>::concat_rows(std::span<const V> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const std::size_t cols = value(parts[0]).cols();
  std::size_t rows = 0;
  bool grad = false;
  for (const auto& p : parts) {
    if (value(p).cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    rows += value(p).rows();
    grad = grad || needs(p);
  }
  Mat out(rows, cols);
  std::vector<std::uint32_t> ids;
  auto dst = out.values().begin();
  for (const auto& p : parts) {
    const auto src = value(p).values();
    dst = std::copy(src.begin(), src.end(), dst);
    ids.push_back(p.id_);
  }
  return push("concat_rows", std::move(out), grad, [ids](Tape& t, std::uint32_t self) {
    const auto g = t.out_grad(self).values();
    std::size_t off = 0;
    for (auto id : ids) {
      const auto& m = t.val(id);
      if (t.nodes_[id].requires_grad) {
        Mat part(m.rows(), m.cols());
        std::copy_n(g.begin() + static_cast<std::ptrdiff_t>(off), m.size(), part.values().begin());
        t.accumulate(id, part);
      }
      off += m.size();
    }
  });
}

template <typename Real>
Var<Real> Tape<Real>::slice_rows(V a, std::size_t begin, std::size_t end) {
  const auto& x = value(a);
  if (begin > end || end > x.rows()) throw ShapeError("slice_rows: range out of bounds");
  Mat out(end - begin, x.cols());
  std::copy_n(x.values().begin() + static_cast<std::ptrdiff_t>(begin * x.cols()), out.size(),
              out.values().begin());
  const auto aid = a.id_;
  return push("slice_rows", std::move(out), needs(a), [aid, begin](Tape& t, std::uint32_t self) {
    const auto& g = t.out_grad(self);
    auto& dst = t.grad_buffer(aid);
    const auto src = g.values();
    for (std::size_t k = 0; k < src.size(); ++k) dst.values()[begin * dst.cols() + k] += src[k];
  });
}

template <typename Real>
Var<Real> Tape<Real>::slice_cols(V a, std::size_t begin, std::size_t end) {
  const auto& x = value(a);
  if (begin > end || end > x.cols()) throw ShapeError("slice_cols: range out of bounds");
  Mat out(x.rows(), end - begin);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = x(i, j);
  const auto aid = a.id_;
  return push("slice_cols", std::move(out), needs(a), [aid, begin](Tape& t, std::uint32_t self) {
    const auto& g = t.out_grad(self);
    const auto& xv = t.val(aid);
    Mat dx(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) dx(i, begin + j) = g(i, j);
    t.accumulate(aid, dx);
  });
}

template <typename Real>
Var<Real> Tape<Real>::row_gather(V a, std::span<const std::uint32_t> rows) {
  auto out = gather_rows(value(a), rows);
  const auto aid = a.id_;
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  return push("row_gather", std::move(out), needs(a), [aid, idx](Tape& t, std::uint32_t self) {
    const auto& g = t.out_grad(self);
    auto& dst = t.grad_buffer(aid);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto d = dst.row(idx[r]);
      auto s = g.row(r);
      for (std::size_t j = 0; j < d.size(); ++j) d[j] += s[j];
    }
  });
}

template <typename Real>
Var<Real> Tape<Real>::scatter_rows(V a, std::span<const std::uint32_t> rows, std::size_t out_rows) {
  const auto& x = value(a);
  if (rows.size() != x.rows()) throw ShapeError("scatter_rows: index count mismatch");
  Mat out(out_rows, x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= out_rows) throw ShapeError("scatter_rows: index out of range");
    auto d = out.row(rows[r]);
    auto s = x.row(r);
    for (std::size_t j = 0; j < d.size(); ++j) d[j] += s[j];
  }
  const auto aid = a.id_;
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  return push("scatter_rows", std::move(out), needs(a), [aid, idx](Tape& t, std::uint32_t self) {
    t.accumulate(aid, gather_rows(t.out_grad(self), idx));
  });
}

template <typename Real>
Var<Real> Tape<Real>::dropout(V a, Real p, Rng& rng) {
  if (!(p >= Real{0} && p < Real{1})) {
    throw std::invalid_argument("dropout: p must lie in [0, 1), got " + std::to_string(p));
  }
  if (p == Real{0} || !training_) return a;
  const auto& x = value(a);
  const Real keep_scale = Real{1} / (Real{1} - p);
  Mat mask(x.rows(), x.cols());
  for (auto& m : mask.values()) m = rng.bernoulli(static_cast<double>(p)) ? Real{0} : keep_scale;
  Mat out(x.rows(), x.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = x.values()[i] * mask.values()[i];
  const auto aid = a.id_;
  return push("dropout", std::move(out), needs(a),
              [aid, mask = std::move(mask)](Tape& t, std::uint32_t self) {
                const auto& g = t.out_grad(self);
                Mat dx(g.rows(), g.cols());
                for (std::size_t i = 0; i < dx.size(); ++i)
                  dx.values()[i] = g.values()[i] * mask.values()[i];
                t.accumulate(aid, dx);
              });
}

template <typename Real>
Var<Real> Tape<Real>::sum(V a) {
  const auto& x = value(a);
  Real s{0};
  for (auto v : x.values()) s += v;
  const auto aid = a.id_;
  return push("sum", Mat(1, 1, s), needs(a), [aid](Tape& t, std::uint32_t self) {
    const auto& xv = t.val(aid);
    t.accumulate(aid, Mat(xv.rows(), xv.cols(), t.out_grad(self)(0, 0)));
  });
}

template <typename Real>
Var<Real> Tape<Real>::mean(V a) {
  const auto& x = value(a);
  if (x.empty()) throw ShapeError("mean: empty input");
  const Real n = static_cast<Real>(x.size());
  Real s{0};
  for (auto v : x.values()) s += v;
  const auto aid = a.id_;
  return push("mean", Mat(1, 1, s / n), needs(a), [aid, n](Tape& t, std::uint32_t self) {
    const auto& xv = t.val(aid);
    t.accumulate(aid, Mat(xv.rows(), xv.cols(), t.out_grad(self)(0, 0) / n));
  });
}

template <typename Real>
Var<Real> Tape<Real>::row_sum(V a) {
  const auto& x = value(a);
  Mat out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (auto v : x.row(i)) out(i, 0) += v;
  const auto aid = a.id_;
  return push("row_sum", std::move(out), needs(a), [aid](Tape& t, std::uint32_t self) {
    const auto& g = t.out_grad(self);
    const auto& xv = t.val(aid);
    Mat dx(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < xv.rows(); ++i)
      for (std::size_t j = 0; j < xv.cols(); ++j) dx(i, j) = g(i, 0);
    t.accumulate(aid, dx);
  });
}

template <typename Real>
Var<Real> Tape<Real>::row_dot(V a, V b) {
  const auto& x = value(a);
  const auto& y = value(b);
  if (!x.same_shape(y)) {
    throw ShapeError("row_dot: " + shape_string(x.rows(), x.cols()) + " vs " +
                     shape_string(y.rows(), y.cols()));
  }
  Mat out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) out(i, 0) = dot<Real>(x.row(i), y.row(i));
  const auto aid = a.id_;
  const auto bid = b.id_;
  return push("row_dot", std::move(out), needs(a) || needs(b), [aid, bid](Tape& t, std::uint32_t self) {
    const auto& g = t.out_grad(self);
    const auto& xv = t.val(aid);
    const auto& yv = t.val(bid);
    Mat dx(xv.rows(), xv.cols());
    Mat dy(yv.rows(), yv.cols());
    for (std::size_t i = 0; i < xv.rows(); ++i)
      for (std::size_t j = 0; j < xv.cols(); ++j) {
        dx(i, j) = g(i, 0) * yv(i, j);
        dy(i, j) = g(i, 0) * xv(i, j);
      }
    t.accumulate(aid, dx);
    t.accumulate(bid, dy);
  });
}

template <typename Real>
Var<Real> Tape<Real>::cosine(V a, V b) {
  const auto& x = value(a);
  const auto& y = value(b);
  if (!x.same_shape(y)) {
    throw ShapeError("cosine: " + shape_string(x.rows(), x.cols()) + " vs " +
                     shape_string(y.rows(), y.cols()));
  }
  Mat out(x.rows(), 1);
  std::vector<Real> nx(x.rows()), ny(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    nx[i] = dot<Real>(x.row(i), x.row(i));
    ny[i] = dot<Real>(y.row(i), y.row(i));
    const Real denom = std::sqrt(nx[i] * ny[i]);
    out(i, 0) = denom > Real{0} ? dot<Real>(x.row(i), y.row(i)) / denom : Real{0};
  }
  const auto aid = a.id_;
  const auto bid = b.id_;
  return push("cosine", std::move(out), needs(a) || needs(b),
              [aid, bid, nx = std::move(nx), ny = std::move(ny)](Tape& t, std::uint32_t self) {
                const auto& g = t.out_grad(self);
                const auto& c = t.val(self);
                const auto& xv = t.val(aid);
                const auto& yv = t.val(bid);
                Mat dx(xv.rows(), xv.cols());
                Mat dy(yv.rows(), yv.cols());
                for (std::size_t i = 0; i < xv.rows(); ++i) {
                  const Real denom = std::sqrt(nx[i] * ny[i]);
                  if (denom == Real{0}) continue;
                  for (std::size_t j = 0; j < xv.cols(); ++j) {
                    dx(i, j) = g(i, 0) * (yv(i, j) / denom - c(i, 0) * xv(i, j) / nx[i]);
                    dy(i, j) = g(i, 0) * (xv(i, j) / denom - c(i, 0) * yv(i, j) / ny[i]);
                  }
                }
                t.accumulate(aid, dx);
                t.accumulate(bid, dy);
              });
}

template <typename Real>
Var<Real> Tape<Real>::softmax(V a, std::span<const bool> mask) {
  const auto& x = value(a);
  if (!mask.empty() && mask.size() != x.cols()) throw ShapeError("softmax: mask width mismatch");
  Mat out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    Real hi = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < x.cols(); ++j)
      if (mask.empty() || mask[j]) hi = std::max(hi, x(i, j));
    if (!std::isfinite(hi)) throw std::invalid_argument("softmax: every entry is masked");
    Real z{0};
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (!mask.empty() && !mask[j]) continue;
      out(i, j) = std::exp(x(i, j) - hi);
      z += out(i, j);
    }
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) /= z;
  }
  const auto aid = a.id_;
  return push("softmax", std::move(out), needs(a), [aid](Tape& t, std::uint32_t self) {
    const auto& g = t.out_grad(self);
    const auto& y = t.val(self);
    Mat dx(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      const Real yg = dot<Real>(y.row(i), g.row(i));
      for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) = y(i, j) * (g(i, j) - yg);
    }
    t.accumulate(aid, dx);
  });
}

template <typename Real>
Var<Real> Tape<Real>::stop_gradient(V a) {
  return push("stop_gradient", value(a), false, {});
}

template <typename Real>
Var<Real> Tape<Real>::sym_normalize_values(const SparsityPattern::Ptr& pattern, V values) {
  const auto& v = value(values);
  if (v.rows() != pattern->nnz() || v.cols() != 1) {
    throw ShapeError("sym_normalize_values: expected " + std::to_string(pattern->nnz()) + "x1");
  }
  const auto rows = pattern->row_ids();
  const auto cols = pattern->col_ids();
  std::vector<Real> row_deg(pattern->rows(), Real{0}), col_deg(pattern->cols(), Real{0});
  for (std::size_t e = 0; e < v.rows(); ++e) {
    if (v(e, 0) < Real{0}) throw std::invalid_argument("sym_normalize_values: negative entry");
    row_deg[rows[e]] += v(e, 0);
    col_deg[cols[e]] += v(e, 0);
  }
  // s = deg^-1/2, zero for isolated nodes.
  std::vector<Real> s(row_deg.size()), tc(col_deg.size());
  for (std::size_t n = 0; n < s.size(); ++n)
    s[n] = row_deg[n] > Real{0} ? Real{1} / std::sqrt(row_deg[n]) : Real{0};
  for (std::size_t n = 0; n < tc.size(); ++n)
    tc[n] = col_deg[n] > Real{0} ? Real{1} / std::sqrt(col_deg[n]) : Real{0};
  Mat out(v.rows(), 1);
  for (std::size_t e = 0; e < v.rows(); ++e) out(e, 0) = v(e, 0) * s[rows[e]] * tc[cols[e]];
  const auto vid = values.id_;
  return push("sym_normalize_values", std::move(out), needs(values),
              [pattern, vid, s = std::move(s), tc = std::move(tc)](Tape& t, std::uint32_t self) {
                const auto& g = t.out_grad(self);
                const auto& vv = t.val(vid);
                const auto r = pattern->row_ids();
                const auto c = pattern->col_ids();
                std::vector<Real> gs(s.size(), Real{0}), gt(tc.size(), Real{0});
                for (std::size_t e = 0; e < vv.rows(); ++e) {
                  gs[r[e]] += g(e, 0) * vv(e, 0) * tc[c[e]];
                  gt[c[e]] += g(e, 0) * vv(e, 0) * s[r[e]];
                }
                Mat dv(vv.rows(), 1);
                for (std::size_t e = 0; e < vv.rows(); ++e) {
                  const Real sr = s[r[e]];
                  const Real tcol = tc[c[e]];
                  dv(e, 0) = g(e, 0) * sr * tcol - Real{0.5} * sr * sr * sr * gs[r[e]] -
                             Real{0.5} * tcol * tcol * tcol * gt[c[e]];
                }
                t.accumulate(vid, dv);
              });
}

template <typename Real>
Var<Real> Tape<Real>::row_normalize_values(const SparsityPattern::Ptr& pattern, V values) {
  const auto& v = value(values);
  if (v.rows() != pattern->nnz() || v.cols() != 1) {
    throw ShapeError("row_normalize_values: expected " + std::to_string(pattern->nnz()) + "x1");
  }
  const auto rows = pattern->row_ids();
  std::vector<Real> sums(pattern->rows(), Real{0});
  for (std::size_t e = 0; e < v.rows(); ++e) {
    if (v(e, 0) < Real{0}) throw std::invalid_argument("row_normalize_values: negative entry");
    sums[rows[e]] += v(e, 0);
  }
  Mat out(v.rows(), 1);
  for (std::size_t e = 0; e < v.rows(); ++e)
    out(e, 0) = sums[rows[e]] > Real{0} ? v(e, 0) / sums[rows[e]] : Real{0};
  const auto vid = values.id_;
  return push("row_normalize_values", std::move(out), needs(values),
              [pattern, vid, sums = std::move(sums)](Tape& t, std::uint32_t self) {
                const auto& g = t.out_grad(self);
                const auto& vv = t.val(vid);
                const auto r = pattern->row_ids();
                std::vector<Real> gv_dot(sums.size(), Real{0});
                for (std::size_t e = 0; e < vv.rows(); ++e) gv_dot[r[e]] += g(e, 0) * vv(e, 0);
                Mat dv(vv.rows(), 1);
                for (std::size_t e = 0; e < vv.rows(); ++e) {
                  const Real sum = sums[r[e]];
                  if (sum == Real{0}) continue;
                  dv(e, 0) = g(e, 0) / sum - gv_dot[r[e]] / (sum * sum);
                }
                t.accumulate(vid, dv);
              });
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace mmrec
