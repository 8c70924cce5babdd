#include "qrec/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qrec/rng.hpp"

namespace qrec::ad {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EMat>;
using CMatMap = Eigen::Map<const EMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

thread_local std::vector<Tape*> g_tape_stack;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_finite(const std::vector<double>& values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string("op `") + op + "` produced a non-finite value");
    }
  }
}

std::shared_ptr<Node> make_node(Shape shape, std::vector<double> values) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  return n;
}

// Finalizes an op result: NaN guard, then backward registration if a tape
// is active and any parent requires grad. The closure must accumulate
// self->grad into each parent's grad (after ensure_grad).
Tensor finish(std::shared_ptr<Node> out, const char* op,
              std::initializer_list<std::shared_ptr<Node>> parents,
              std::function<void()> closure) {
  check_finite(out->values, op);
  Tape* tape = Tape::active();
  if (tape) {
    bool any = false;
    for (const auto& p : parents) any = any || (p && p->requires_grad);
    if (any) {
      out->requires_grad = true;
      out->backward_fn = std::move(closure);
      tape->record(out);
    }
  }
  return Tensor::wrap(std::move(out));
}

double* grad_of(const std::shared_ptr<Node>& n) {
  if (!n->requires_grad) return nullptr;
  n->ensure_grad();
  return n->grad.data();
}

template <typename F, typename DF>
Tensor unary_elementwise(const Tensor& x, const char* op, F f, DF df) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  auto node = make_node(x.shape(), std::move(out));
  auto xn = x.node();
  Node* self = node.get();
  return finish(std::move(node), op, {xn}, [self, xn, df]() {
    double* gx = grad_of(xn);
    if (!gx) return;
    const auto& g = self->grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[i] += g[i] * df(xn->values[i], self->values[i]);
    }
  });
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::scalar(double v) { return wrap(make_node({}, {v})); }

Tensor Tensor::vec(std::vector<double> v) {
  Shape s{v.size()};
  return wrap(make_node(std::move(s), std::move(v)));
}

Tensor Tensor::mat(std::size_t rows, std::size_t cols, std::vector<double> v) {
  require(v.size() == rows * cols, "Tensor::mat: value count " + std::to_string(v.size()) +
                                       " does not match shape (" + std::to_string(rows) + ", " +
                                       std::to_string(cols) + ")");
  return wrap(make_node({rows, cols}, std::move(v)));
}

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> v(numel(shape), 0.0);
  return wrap(make_node(std::move(shape), std::move(v)));
}

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> v(numel(shape), value);
  return wrap(make_node(std::move(shape), std::move(v)));
}

double Tensor::scalar_value() const {
  require(size() == 1, "scalar_value: tensor has shape " + shape_str(shape()));
  return values()[0];
}

void Tensor::set_requires_grad(bool on) {
  checked()->requires_grad = on;
  if (on) checked()->ensure_grad();
}

const std::vector<double>& Tensor::grad() const {
  checked()->ensure_grad();
  return checked()->grad;
}

Tensor Tensor::wrap(std::shared_ptr<Node> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

std::shared_ptr<Node> Tensor::checked() const {
  if (!node_) throw std::logic_error("use of an empty Tensor");
  return node_;
}

// ---- Tape -----------------------------------------------------------------

Tape::Tape() { g_tape_stack.push_back(this); }

Tape::~Tape() {
  if (!g_tape_stack.empty() && g_tape_stack.back() == this) g_tape_stack.pop_back();
}

Tape* Tape::active() { return g_tape_stack.empty() ? nullptr : g_tape_stack.back(); }

void Tape::backward(const Tensor& loss) {
  require(loss.valid() && loss.size() == 1,
          "backward: loss must be a scalar, got shape " +
              (loss.valid() ? shape_str(loss.shape()) : std::string("<empty>")));
  if (ops_.empty()) throw std::runtime_error("backward: tape is empty");
  auto n = loss.node();
  if (!n->requires_grad) {
    throw std::runtime_error("backward: loss does not depend on any tracked parameter");
  }
  n->ensure_grad();
  n->grad[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    Node& node = **it;
    if (!node.grad.empty() && node.backward_fn) node.backward_fn();
  }
}

// ---- Parameter ------------------------------------------------------------

Parameter::Parameter(std::string name, Shape shape)
    : name_(std::move(name)), tensor_(Tensor::zeros(std::move(shape))) {
  tensor_.set_requires_grad(true);
}

void Parameter::zero_grad() {
  auto& g = tensor_.node()->grad;
  g.assign(tensor_.size(), 0.0);
}

Parameter& ParameterSet::add(const std::string& name, Shape shape) {
  if (find(name)) throw std::invalid_argument("ParameterSet: duplicate parameter `" + name + "`");
  params_.push_back(std::make_unique<Parameter>(name, std::move(shape)));
  return *params_.back();
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name() == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name() == name) return p.get();
  }
  return nullptr;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::size_t ParameterSet::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

void init_xavier_uniform(Parameter& p, std::uint64_t seed) {
  const auto& shape = p.shape();
  if (shape.size() != 2) return;  // vectors (biases) stay zero
  Rng rng(seed);
  const double bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
  for (double& v : p.values()) v = rng.uniform(-bound, bound);
}

void init_uniform(Parameter& p, double lo, double hi, std::uint64_t seed) {
  Rng rng(seed);
  for (double& v : p.values()) v = rng.uniform(lo, hi);
}

// ---- elementwise ----------------------------------------------------------

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  auto node = make_node(a.shape(), std::move(out));
  auto an = a.node(), bn = b.node();
  Node* self = node.get();
  return finish(std::move(node), "add", {an, bn}, [self, an, bn]() {
    const auto& g = self->grad;
    if (double* ga = grad_of(an)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (double* gb = grad_of(bn)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  auto node = make_node(a.shape(), std::move(out));
  auto an = a.node(), bn = b.node();
  Node* self = node.get();
  return finish(std::move(node), "sub", {an, bn}, [self, an, bn]() {
    const auto& g = self->grad;
    if (double* ga = grad_of(an)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (double* gb = grad_of(bn)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto node = make_node(a.shape(), std::move(out));
  auto an = a.node(), bn = b.node();
  Node* self = node.get();
  return finish(std::move(node), "mul", {an, bn}, [self, an, bn]() {
    const auto& g = self->grad;
    if (double* ga = grad_of(an)) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->values[i];
    }
    if (double* gb = grad_of(bn)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->values[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  require(std::isfinite(c), "scale: factor must be finite");
  return unary_elementwise(a, "scale", [c](double x) { return c * x; },
                           [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  require(std::isfinite(c), "add_scalar: addend must be finite");
  return unary_elementwise(a, "add_scalar", [c](double x) { return x + c; },
                           [](double, double) { return 1.0; });
}

Tensor rsub_scalar(double c, const Tensor& a) {
  require(std::isfinite(c), "rsub_scalar: minuend must be finite");
  return unary_elementwise(a, "rsub_scalar", [c](double x) { return c - x; },
                           [](double, double) { return -1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor tanh_t(const Tensor& a) {
  return unary_elementwise(a, "tanh", [](double x) { return std::tanh(x); },
                           [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid_t(const Tensor& a) {
  return unary_elementwise(
      a, "sigmoid",
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu_t(const Tensor& a) {
  return unary_elementwise(a, "relu", [](double x) { return x > 0 ? x : 0.0; },
                           [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor log_t(const Tensor& a) {
  return unary_elementwise(a, "log", [](double x) { return std::log(x); },
                           [](double x, double) { return 1.0 / x; });
}

Tensor clip(const Tensor& t, double lo, double hi) {
  require(lo < hi, "clip: lower bound must be below upper bound");
  return unary_elementwise(t, "clip",
                           [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
                           [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() >= 1 && a.rank() <= 2 && b.rank() >= 1 && b.rank() <= 2,
          "matmul: operands must be rank 1 or 2, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  const bool a_vec = a.rank() == 1;
  const bool b_vec = b.rank() == 1;
  const std::size_t m = a_vec ? 1 : a.shape()[0];
  const std::size_t k = a_vec ? a.shape()[0] : a.shape()[1];
  const std::size_t k2 = b_vec ? b.shape()[0] : b.shape()[0];
  const std::size_t n = b_vec ? 1 : b.shape()[1];
  require(k == k2, "matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));

  std::vector<double> out(m * n);
  {
    CMatMap A(a.values().data(), m, k);
    CMatMap B(b.values().data(), k, n);
    MatMap C(out.data(), m, n);
    C.noalias() = A * B;
  }
  Shape shape;
  if (!a_vec) shape.push_back(m);
  if (!b_vec) shape.push_back(n);
  auto node = make_node(std::move(shape), std::move(out));
  auto an = a.node(), bn = b.node();
  Node* self = node.get();
  return finish(std::move(node), "matmul", {an, bn}, [self, an, bn, m, k, n]() {
    CMatMap G(self->grad.data(), m, n);
    if (double* ga = grad_of(an)) {
      CMatMap B(bn->values.data(), k, n);
      MatMap GA(ga, m, k);
      GA.noalias() += G * B.transpose();
    }
    if (double* gb = grad_of(bn)) {
      CMatMap A(an->values.data(), m, k);
      MatMap GB(gb, k, n);
      GB.noalias() += A.transpose() * G;
    }
  });
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose: expected a matrix, got " + shape_str(a.shape()));
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  std::vector<double> out(r * c);
  {
    CMatMap A(a.values().data(), r, c);
    MatMap T(out.data(), c, r);
    T = A.transpose();
  }
  auto node = make_node({c, r}, std::move(out));
  auto an = a.node();
  Node* self = node.get();
  return finish(std::move(node), "transpose", {an}, [self, an, r, c]() {
    if (double* ga = grad_of(an)) {
      CMatMap G(self->grad.data(), c, r);
      MatMap GA(ga, r, c);
      GA += G.transpose();
    }
  });
}

Tensor concat(const Tensor& a, const Tensor& b) {
  require(a.rank() == 1 && b.rank() == 1, "concat: expected two vectors, got " +
                                              shape_str(a.shape()) + " and " + shape_str(b.shape()));
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  auto node = make_node({a.size() + b.size()}, std::move(out));
  auto an = a.node(), bn = b.node();
  Node* self = node.get();
  const std::size_t na = a.size();
  return finish(std::move(node), "concat", {an, bn}, [self, an, bn, na]() {
    const auto& g = self->grad;
    if (double* ga = grad_of(an)) {
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
    }
    if (double* gb = grad_of(bn)) {
      for (std::size_t i = na; i < g.size(); ++i) gb[i - na] += g[i];
    }
  });
}

Tensor hstack(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.shape()[0] == b.shape()[0],
          "hstack: expected matrices with equal row counts, got " + shape_str(a.shape()) +
              " and " + shape_str(b.shape()));
  const std::size_t r = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
  std::vector<double> out(r * (ca + cb));
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.values().data() + i * ca, ca, out.data() + i * (ca + cb));
    std::copy_n(b.values().data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
  }
  auto node = make_node({r, ca + cb}, std::move(out));
  auto an = a.node(), bn = b.node();
  Node* self = node.get();
  return finish(std::move(node), "hstack", {an, bn}, [self, an, bn, r, ca, cb]() {
    const auto& g = self->grad;
    if (double* ga = grad_of(an)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * (ca + cb) + j];
    }
    if (double* gb = grad_of(bn)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * (ca + cb) + ca + j];
    }
  });
}

Tensor vstack(std::span<const Tensor> rows_in) {
  require(!rows_in.empty(), "vstack: no rows given");
  const std::size_t c = rows_in[0].size();
  std::vector<std::shared_ptr<Node>> parents;
  parents.reserve(rows_in.size());
  std::vector<double> out;
  out.reserve(rows_in.size() * c);
  for (const Tensor& t : rows_in) {
    require(t.rank() == 1 && t.size() == c,
            "vstack: rows must be equal-length vectors, got " + shape_str(t.shape()));
    out.insert(out.end(), t.values().begin(), t.values().end());
    parents.push_back(t.node());
  }
  auto node = make_node({rows_in.size(), c}, std::move(out));
  Node* self = node.get();
  check_finite(node->values, "vstack");
  Tape* tape = Tape::active();
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (tape && any) {
    node->requires_grad = true;
    node->backward_fn = [self, parents, c]() {
      const auto& g = self->grad;
      for (std::size_t i = 0; i < parents.size(); ++i) {
        if (double* gp = grad_of(parents[i])) {
          for (std::size_t j = 0; j < c; ++j) gp[j] += g[i * c + j];
        }
      }
    };
    tape->record(node);
  }
  return Tensor::wrap(std::move(node));
}

Tensor slice_cols(const Tensor& m, std::size_t c0, std::size_t c1) {
  require(m.rank() == 2, "slice_cols: expected a matrix, got " + shape_str(m.shape()));
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  require(c0 < c1 && c1 <= c, "slice_cols: range [" + std::to_string(c0) + ", " +
                                  std::to_string(c1) + ") out of bounds for " + shape_str(m.shape()));
  const std::size_t w = c1 - c0;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(m.values().data() + i * c + c0, w, out.data() + i * w);
  }
  auto node = make_node({r, w}, std::move(out));
  auto mn = m.node();
  Node* self = node.get();
  return finish(std::move(node), "slice_cols", {mn}, [self, mn, r, c, c0, w]() {
    if (double* gm = grad_of(mn)) {
      const auto& g = self->grad;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) gm[i * c + c0 + j] += g[i * w + j];
    }
  });
}

Tensor row(const Tensor& m, std::size_t i) {
  require(m.rank() == 2, "row: expected a matrix, got " + shape_str(m.shape()));
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  require(i < r, "row: index " + std::to_string(i) + " out of bounds for " + shape_str(m.shape()));
  std::vector<double> out(m.values().begin() + i * c, m.values().begin() + (i + 1) * c);
  auto node = make_node({c}, std::move(out));
  auto mn = m.node();
  Node* self = node.get();
  return finish(std::move(node), "row", {mn}, [self, mn, i, c]() {
    if (double* gm = grad_of(mn)) {
      const auto& g = self->grad;
      for (std::size_t j = 0; j < c; ++j) gm[i * c + j] += g[j];
    }
  });
}

Tensor rows(const Tensor& m, std::span<const int> indices) {
  require(m.rank() == 2, "rows: expected a matrix, got " + shape_str(m.shape()));
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  std::vector<int> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < r,
            "rows: index " + std::to_string(idx[i]) + " out of bounds for " + shape_str(m.shape()));
    std::copy_n(m.values().data() + static_cast<std::size_t>(idx[i]) * c, c, out.data() + i * c);
  }
  auto node = make_node({idx.size(), c}, std::move(out));
  auto mn = m.node();
  Node* self = node.get();
  return finish(std::move(node), "rows", {mn}, [self, mn, idx = std::move(idx), c]() {
    if (double* gm = grad_of(mn)) {
      const auto& g = self->grad;
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) gm[static_cast<std::size_t>(idx[i]) * c + j] += g[i * c + j];
    }
  });
}

Tensor repeat_row(const Tensor& v, std::size_t n) {
  require(v.rank() == 1, "repeat_row: expected a vector, got " + shape_str(v.shape()));
  require(n > 0, "repeat_row: row count must be positive");
  const std::size_t c = v.size();
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(v.values().data(), c, out.data() + i * c);
  auto node = make_node({n, c}, std::move(out));
  auto vn = v.node();
  Node* self = node.get();
  return finish(std::move(node), "repeat_row", {vn}, [self, vn, n, c]() {
    if (double* gv = grad_of(vn)) {
      const auto& g = self->grad;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) gv[j] += g[i * c + j];
    }
  });
}

Tensor reshape(const Tensor& t, Shape shape) {
  require(numel(shape) == t.size(), "reshape: cannot view " + shape_str(t.shape()) + " as " +
                                        shape_str(shape));
  auto node = make_node(std::move(shape), t.values());
  auto tn = t.node();
  Node* self = node.get();
  return finish(std::move(node), "reshape", {tn}, [self, tn]() {
    if (double* gt = grad_of(tn)) {
      const auto& g = self->grad;
      for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
    }
  });
}

Tensor pick(const Tensor& v, std::size_t i) {
  require(v.rank() == 1, "pick: expected a vector, got " + shape_str(v.shape()));
  require(i < v.size(), "pick: index " + std::to_string(i) + " out of bounds for " +
                            shape_str(v.shape()));
  auto node = make_node({}, {v.values()[i]});
  auto vn = v.node();
  Node* self = node.get();
  return finish(std::move(node), "pick", {vn}, [self, vn, i]() {
    if (double* gv = grad_of(vn)) gv[i] += self->grad[0];
  });
}

Tensor gather_cols(const Tensor& m, std::span<const int> cols) {
  require(m.rank() == 2, "gather_cols: expected a matrix, got " + shape_str(m.shape()));
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  require(cols.size() == r, "gather_cols: need one column index per row");
  std::vector<int> idx(cols.begin(), cols.end());
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    require(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < c,
            "gather_cols: column " + std::to_string(idx[i]) + " out of bounds for " +
                shape_str(m.shape()));
    out[i] = m.values()[i * c + static_cast<std::size_t>(idx[i])];
  }
  auto node = make_node({r}, std::move(out));
  auto mn = m.node();
  Node* self = node.get();
  return finish(std::move(node), "gather_cols", {mn}, [self, mn, idx = std::move(idx), c]() {
    if (double* gm = grad_of(mn)) {
      const auto& g = self->grad;
      for (std::size_t i = 0; i < idx.size(); ++i) gm[i * c + static_cast<std::size_t>(idx[i])] += g[i];
    }
  });
}

// ---- reductions and softmax ------------------------------------------------

namespace {

void softmax_inplace(const double* x, double* y, std::size_t n) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - mx);
    z += y[i];
  }
  for (std::size_t i = 0; i < n; ++i) y[i] /= z;
}

void softmax_backward_row(const double* y, const double* g, double* gx, std::size_t n) {
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) dot += g[i] * y[i];
  for (std::size_t i = 0; i < n; ++i) gx[i] += y[i] * (g[i] - dot);
}

}  // namespace

Tensor softmax(const Tensor& v) {
  require(v.rank() == 1 && v.size() > 0, "softmax: expected a non-empty vector, got " +
                                             shape_str(v.shape()));
  std::vector<double> out(v.size());
  softmax_inplace(v.values().data(), out.data(), v.size());
  auto node = make_node(v.shape(), std::move(out));
  auto vn = v.node();
  Node* self = node.get();
  return finish(std::move(node), "softmax", {vn}, [self, vn]() {
    if (double* gv = grad_of(vn)) {
      softmax_backward_row(self->values.data(), self->grad.data(), gv, self->values.size());
    }
  });
}

Tensor softmax_rows(const Tensor& m) {
  require(m.rank() == 2 && m.shape()[1] > 0, "softmax_rows: expected a matrix, got " +
                                                 shape_str(m.shape()));
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) softmax_inplace(m.values().data() + i * c, out.data() + i * c, c);
  auto node = make_node(m.shape(), std::move(out));
  auto mn = m.node();
  Node* self = node.get();
  return finish(std::move(node), "softmax_rows", {mn}, [self, mn, r, c]() {
    if (double* gm = grad_of(mn)) {
      for (std::size_t i = 0; i < r; ++i) {
        softmax_backward_row(self->values.data() + i * c, self->grad.data() + i * c, gm + i * c, c);
      }
    }
  });
}

Tensor sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  auto node = make_node({}, {s});
  auto tn = t.node();
  Node* self = node.get();
  return finish(std::move(node), "sum", {tn}, [self, tn]() {
    if (double* gt = grad_of(tn)) {
      const double g = self->grad[0];
      for (std::size_t i = 0; i < tn->values.size(); ++i) gt[i] += g;
    }
  });
}

Tensor mean_rows(const Tensor& m) {
  require(m.rank() == 2 && m.shape()[0] > 0, "mean_rows: expected a non-empty matrix, got " +
                                                 shape_str(m.shape()));
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += m.values()[i * c + j];
  for (double& v : out) v /= static_cast<double>(r);
  auto node = make_node({c}, std::move(out));
  auto mn = m.node();
  Node* self = node.get();
  return finish(std::move(node), "mean_rows", {mn}, [self, mn, r, c]() {
    if (double* gm = grad_of(mn)) {
      const double inv = 1.0 / static_cast<double>(r);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gm[i * c + j] += self->grad[j] * inv;
    }
  });
}

Tensor dot_const(const Tensor& v, std::span<const double> w) {
  require(v.rank() == 1 && v.size() == w.size(),
          "dot_const: weight count " + std::to_string(w.size()) + " does not match " +
              shape_str(v.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += v.values()[i] * w[i];
  auto node = make_node({}, {s});
  auto vn = v.node();
  Node* self = node.get();
  std::vector<double> wc(w.begin(), w.end());
  return finish(std::move(node), "dot_const", {vn}, [self, vn, wc = std::move(wc)]() {
    if (double* gv = grad_of(vn)) {
      const double g = self->grad[0];
      for (std::size_t i = 0; i < wc.size(); ++i) gv[i] += g * wc[i];
    }
  });
}

Tensor mul_const(const Tensor& t, std::span<const double> c) {
  require(t.size() == c.size(), "mul_const: factor count " + std::to_string(c.size()) +
                                    " does not match " + shape_str(t.shape()));
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t.values()[i] * c[i];
  auto node = make_node(t.shape(), std::move(out));
  auto tn = t.node();
  Node* self = node.get();
  std::vector<double> cc(c.begin(), c.end());
  return finish(std::move(node), "mul_const", {tn}, [self, tn, cc = std::move(cc)]() {
    if (double* gt = grad_of(tn)) {
      const auto& g = self->grad;
      for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i] * cc[i];
    }
  });
}

Tensor linear_combination(std::span<const Tensor> ts, std::span<const double> w) {
  require(!ts.empty() && ts.size() == w.size(),
          "linear_combination: need matching, non-empty tensor and weight lists");
  const Shape shape = ts[0].shape();
  std::vector<double> out(ts[0].size(), 0.0);
  std::vector<std::shared_ptr<Node>> parents;
  parents.reserve(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    require(ts[i].shape() == shape, "linear_combination: shape mismatch " + shape_str(shape) +
                                        " vs " + shape_str(ts[i].shape()));
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w[i] * ts[i].values()[j];
    parents.push_back(ts[i].node());
  }
  auto node = make_node(shape, std::move(out));
  check_finite(node->values, "linear_combination");
  Node* self = node.get();
  Tape* tape = Tape::active();
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (tape && any) {
    std::vector<double> wc(w.begin(), w.end());
    node->requires_grad = true;
    node->backward_fn = [self, parents, wc = std::move(wc)]() {
      const auto& g = self->grad;
      for (std::size_t i = 0; i < parents.size(); ++i) {
        if (double* gp = grad_of(parents[i])) {
          for (std::size_t j = 0; j < g.size(); ++j) gp[j] += wc[i] * g[j];
        }
      }
    };
    tape->record(node);
  }
  return Tensor::wrap(std::move(node));
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  require(m.rank() == 2 && v.rank() == 1 && m.shape()[1] == v.size(),
          "add_rowvec: cannot broadcast " + shape_str(v.shape()) + " over " + shape_str(m.shape()));
  const std::size_t r = m.shape()[0], c = m.shape()[1];
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = m.values()[i * c + j] + v.values()[j];
  auto node = make_node(m.shape(), std::move(out));
  auto mn = m.node(), vn = v.node();
  Node* self = node.get();
  return finish(std::move(node), "add_rowvec", {mn, vn}, [self, mn, vn, r, c]() {
    const auto& g = self->grad;
    if (double* gm = grad_of(mn)) {
      for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
    }
    if (double* gv = grad_of(vn)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gv[j] += g[i * c + j];
    }
  });
}

Tensor l2_distance(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l2_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    s += d * d;
  }
  const double dist = std::sqrt(s);
  auto node = make_node({}, {dist});
  auto an = a.node(), bn = b.node();
  Node* self = node.get();
  return finish(std::move(node), "l2_distance", {an, bn}, [self, an, bn]() {
    const double d = self->values[0];
    if (d == 0.0) return;  // subgradient at coincident points
    const double coef = self->grad[0] / d;
    double* ga = grad_of(an);
    double* gb = grad_of(bn);
    for (std::size_t i = 0; i < an->values.size(); ++i) {
      const double diff = an->values[i] - bn->values[i];
      if (ga) ga[i] += coef * diff;
      if (gb) gb[i] -= coef * diff;
    }
  });
}

// ---- attention and the recurrent cell ---------------------------------------

namespace {

Tensor slice_vec(const Tensor& v, std::size_t a, std::size_t b) {
  return reshape(slice_cols(reshape(v, {1, v.size()}), a, b), {b - a});
}

}  // namespace

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t heads) {
  require(q.rank() == 1 && k.rank() == 2 && v.rank() == 2,
          "scaled_dot_attention: expected q vector, K and V matrices");
  require(k.shape()[1] == q.size(), "scaled_dot_attention: query width " +
                                        std::to_string(q.size()) + " does not match key width " +
                                        std::to_string(k.shape()[1]));
  require(k.shape()[0] == v.shape()[0], "scaled_dot_attention: K and V row counts differ");
  require(heads >= 1 && q.size() % heads == 0 && v.shape()[1] % heads == 0,
          "scaled_dot_attention: head count must divide feature widths");
  if (heads == 1) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(q.size()));
    Tensor logits = scale(matmul(k, q), inv);
    Tensor weights = softmax(logits);
    return matmul(weights, v);
  }
  const std::size_t dq = q.size() / heads, dv = v.shape()[1] / heads;
  Tensor out;
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_vec(q, h * dq, (h + 1) * dq);
    Tensor kh = slice_cols(k, h * dq, (h + 1) * dq);
    Tensor vh = slice_cols(v, h * dv, (h + 1) * dv);
    Tensor oh = scaled_dot_attention(qh, kh, vh, 1);
    out = h == 0 ? oh : concat(out, oh);
  }
  return out;
}

Tensor scaled_dot_attention_rows(const Tensor& q, const Tensor& k, const Tensor& v,
                                 std::size_t heads) {
  require(q.rank() == 2 && k.rank() == 2 && v.rank() == 2,
          "scaled_dot_attention_rows: expected matrices");
  require(k.shape()[1] == q.shape()[1], "scaled_dot_attention_rows: query width " +
                                            std::to_string(q.shape()[1]) +
                                            " does not match key width " +
                                            std::to_string(k.shape()[1]));
  require(k.shape()[0] == v.shape()[0], "scaled_dot_attention_rows: K and V row counts differ");
  require(heads >= 1 && q.shape()[1] % heads == 0 && v.shape()[1] % heads == 0,
          "scaled_dot_attention_rows: head count must divide feature widths");
  if (heads == 1) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(q.shape()[1]));
    Tensor logits = scale(matmul(q, transpose(k)), inv);
    Tensor weights = softmax_rows(logits);
    return matmul(weights, v);
  }
  const std::size_t dq = q.shape()[1] / heads, dv = v.shape()[1] / heads;
  Tensor out;
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dq, (h + 1) * dq);
    Tensor kh = slice_cols(k, h * dq, (h + 1) * dq);
    Tensor vh = slice_cols(v, h * dv, (h + 1) * dv);
    Tensor oh = scaled_dot_attention_rows(qh, kh, vh, 1);
    out = h == 0 ? oh : hstack(out, oh);
  }
  return out;
}

GruCellParams make_gru_cell(ParameterSet& set, const std::string& prefix,
                            std::size_t input_size, std::size_t hidden_size,
                            std::uint64_t seed) {
  GruCellParams cell;
  cell.input_size = input_size;
  cell.hidden_size = hidden_size;
  cell.wx = &set.add(prefix + ".wx", {input_size, 3 * hidden_size});
  cell.wh = &set.add(prefix + ".wh", {hidden_size, 3 * hidden_size});
  cell.bx = &set.add(prefix + ".bx", {3 * hidden_size});
  cell.bh = &set.add(prefix + ".bh", {3 * hidden_size});
  init_xavier_uniform(*cell.wx, derive_seed(seed, fnv1a(cell.wx->name())));
  init_xavier_uniform(*cell.wh, derive_seed(seed, fnv1a(cell.wh->name())));
  return cell;
}

Tensor gru_cell(const GruCellParams& cell, const Tensor& x, const Tensor& h) {
  require(cell.wx && cell.wh && cell.bx && cell.bh, "gru_cell: cell parameters not initialized");
  const bool vec_in = x.rank() == 1;
  Tensor xm = vec_in ? reshape(x, {1, x.size()}) : x;
  Tensor hm = vec_in ? reshape(h, {1, h.size()}) : h;
  require(xm.rank() == 2 && xm.shape()[1] == cell.input_size,
          "gru_cell: input shape " + shape_str(x.shape()) + " does not match input size " +
              std::to_string(cell.input_size));
  require(hm.rank() == 2 && hm.shape()[1] == cell.hidden_size && hm.shape()[0] == xm.shape()[0],
          "gru_cell: hidden shape " + shape_str(h.shape()) + " does not match cell");
  const std::size_t hs = cell.hidden_size;

  Tensor gx = add_rowvec(matmul(xm, cell.wx->tensor()), cell.bx->tensor());
  Tensor gh = add_rowvec(matmul(hm, cell.wh->tensor()), cell.bh->tensor());
  Tensor z = sigmoid_t(add(slice_cols(gx, 0, hs), slice_cols(gh, 0, hs)));
  Tensor r = sigmoid_t(add(slice_cols(gx, hs, 2 * hs), slice_cols(gh, hs, 2 * hs)));
  Tensor n = tanh_t(add(slice_cols(gx, 2 * hs, 3 * hs), mul(r, slice_cols(gh, 2 * hs, 3 * hs))));
  Tensor out = add(mul(rsub_scalar(1.0, z), n), mul(z, hm));
  ++cell.applications;
  return vec_in ? reshape(out, {hs}) : out;
}

// ---- Adam -------------------------------------------------------------------

Adam::Adam(ParameterSet& params, AdamConfig cfg) : params_(&params), cfg_(cfg) {
  for (const auto& p : params.all()) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void Adam::step() {
  const auto& all = params_->all();
  if (all.size() != m_.size()) {
    throw std::logic_error("Adam: parameter set changed size after optimizer construction");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < all.size(); ++i) {
    Parameter& p = *all[i];
    const auto& g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    auto& w = p.values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.zero_grad();
  }
}

}  // namespace qrec::ad
