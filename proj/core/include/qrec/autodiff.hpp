#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace qrec::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// One value in the computation graph. Rank 0 (scalar), 1 (vector) or
// 2 (row-major matrix). `grad` stays empty until backward first touches
// the node; leaves with requires_grad pre-allocate it.
struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  std::function<void()> backward_fn;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

// Shared handle to a Node. Copying a Tensor aliases the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> v);
  static Tensor mat(std::size_t rows, std::size_t cols, std::vector<double> v);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const { return checked()->shape; }
  std::size_t rank() const { return checked()->shape.size(); }
  std::size_t size() const { return checked()->values.size(); }
  const std::vector<double>& values() const { return checked()->values; }
  std::vector<double>& mutable_values() { return checked()->values; }
  double scalar_value() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on);
  const std::vector<double>& grad() const;

  std::shared_ptr<Node> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<Node> n);

 private:
  std::shared_ptr<Node> checked() const;
  std::shared_ptr<Node> node_;
};

// Records non-leaf nodes in execution order while alive. Ops only record
// when a tape is active and some input requires grad, so inference runs
// with no tape build no graph. Tapes nest per thread; the innermost one
// records.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  std::size_t recorded_ops() const { return ops_.size(); }

  // Reverse pass from a scalar loss: seeds d(loss)/d(loss) = 1 and visits
  // recorded nodes in reverse execution order (a reverse topological order)
  // exactly once, accumulating into leaf gradients.
  void backward(const Tensor& loss);

  void record(std::shared_ptr<Node> n) { ops_.push_back(std::move(n)); }

 private:
  std::vector<std::shared_ptr<Node>> ops_;
};

// A named leaf with persistent gradient storage; gradients accumulate
// across backward calls and are zeroed by the optimizer step.
class Parameter {
 public:
  Parameter(std::string name, Shape shape);

  const std::string& name() const { return name_; }
  Tensor& tensor() { return tensor_; }
  const Tensor& tensor() const { return tensor_; }
  std::vector<double>& values() { return tensor_.node()->values; }
  const std::vector<double>& values() const { return tensor_.node()->values; }
  std::vector<double>& grad() { return tensor_.node()->grad; }
  const std::vector<double>& grad() const { return tensor_.node()->grad; }
  const Shape& shape() const { return tensor_.shape(); }
  std::size_t size() const { return tensor_.size(); }
  void zero_grad();

 private:
  std::string name_;
  Tensor tensor_;
};

// Insertion-ordered collection of parameters with unique names.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Shape shape);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
  void zero_grad();
  std::size_t total_size() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

// Xavier/Glorot uniform init for matrices, zero for vectors unless a range
// is given. Seeded per call; callers derive the seed from the parameter name
// so initialization does not depend on construction order.
void init_xavier_uniform(Parameter& p, std::uint64_t seed);
void init_uniform(Parameter& p, double lo, double hi, std::uint64_t seed);

// ---- forward primitives -------------------------------------------------
// Every primitive validates shapes (throwing std::invalid_argument naming
// them), checks outputs for NaN/Inf, and records a backward closure on the
// active tape when any input requires grad.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor rsub_scalar(double c, const Tensor& a);  // c - a
Tensor neg(const Tensor& a);

Tensor tanh_t(const Tensor& a);
Tensor sigmoid_t(const Tensor& a);
Tensor relu_t(const Tensor& a);
Tensor log_t(const Tensor& a);

// matmul supports (m,k)x(k,n), (m,k)x(k), (k)x(k,n) and (k)x(k) [dot].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor concat(const Tensor& a, const Tensor& b);            // rank-1 ++ rank-1
Tensor hstack(const Tensor& a, const Tensor& b);            // rank-2 columns
Tensor vstack(std::span<const Tensor> rows);                // rank-1 rows -> matrix
Tensor slice_cols(const Tensor& m, std::size_t c0, std::size_t c1);
Tensor row(const Tensor& m, std::size_t i);
Tensor rows(const Tensor& m, std::span<const int> indices);
Tensor repeat_row(const Tensor& v, std::size_t n);
Tensor reshape(const Tensor& t, Shape shape);

Tensor pick(const Tensor& v, std::size_t i);                // rank-1 -> scalar
Tensor gather_cols(const Tensor& m, std::span<const int> cols);  // per-row pick -> rank-1

Tensor softmax(const Tensor& v);                            // rank-1
Tensor softmax_rows(const Tensor& m);                       // rank-2, per row

Tensor sum(const Tensor& t);                                // -> scalar
Tensor mean_rows(const Tensor& m);                          // column means -> rank-1
Tensor dot_const(const Tensor& v, std::span<const double> w);    // -> scalar
Tensor mul_const(const Tensor& t, std::span<const double> c);    // elementwise
Tensor linear_combination(std::span<const Tensor> ts, std::span<const double> w);
Tensor add_rowvec(const Tensor& m, const Tensor& v);        // broadcast bias

Tensor l2_distance(const Tensor& a, const Tensor& b);       // -> scalar

// Pass-through gradient strictly inside (lo, hi), zero outside.
Tensor clip(const Tensor& t, double lo, double hi);

// softmax(q.K^T / sqrt(d)) . V for a single query (q: d, K,V: N x d_k) and
// for a batch of row queries. `heads` splits the feature dimension; the
// default matches a single-head setup.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t heads = 1);
Tensor scaled_dot_attention_rows(const Tensor& q, const Tensor& k, const Tensor& v,
                                 std::size_t heads = 1);

// Gated recurrent update (GRU). x: (B, in) or (in); h: (B, hidden) or
// (hidden). `applications` counts cell invocations for tests.
struct GruCellParams {
  Parameter* wx = nullptr;  // (in, 3*hidden)
  Parameter* wh = nullptr;  // (hidden, 3*hidden)
  Parameter* bx = nullptr;  // (3*hidden)
  Parameter* bh = nullptr;  // (3*hidden)
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  mutable std::uint64_t applications = 0;
};

// Allocates (and Xavier-initializes) the four cell parameters under
// `prefix`.* in `set`, seeding each from its full name.
GruCellParams make_gru_cell(ParameterSet& set, const std::string& prefix,
                            std::size_t input_size, std::size_t hidden_size,
                            std::uint64_t seed);

Tensor gru_cell(const GruCellParams& cell, const Tensor& x, const Tensor& h);

// ---- optimizer -----------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig cfg);

  // Standard bias-corrected Adam update, then zeroes all gradients.
  void step();

  std::int64_t steps_taken() const { return t_; }

 private:
  ParameterSet* params_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace qrec::ad
