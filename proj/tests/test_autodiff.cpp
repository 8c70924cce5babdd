#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <span>

#include "qrec/autodiff.hpp"
#include "qrec/checkpoint.hpp"
#include "qrec/rng.hpp"
#include "test_util.hpp"

using namespace qrec;
using ad::Tensor;

namespace {

Tensor random_leaf(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_values()) v = rng.uniform(lo, hi);
  t.set_requires_grad(true);
  return t;
}

// Reduce any tensor to a scalar with weights drawn once and then frozen,
// so repeated loss evaluations (for finite differences) see one function.
class WeightedSum {
 public:
  explicit WeightedSum(std::uint64_t seed) : rng_(seed) {}

  Tensor operator()(const Tensor& t) {
    auto& w = weights_[t.size()];
    while (w.size() < t.size()) w.push_back(rng_.uniform(-1.0, 1.0));
    return ad::dot_const(ad::reshape(t, {t.size()}),
                         std::span<const double>(w.data(), t.size()));
  }

 private:
  Rng rng_;
  std::map<std::size_t, std::vector<double>> weights_;
};

}  // namespace

TEST_CASE("softmax of uniform logits is uniform") {
  const Tensor p = ad::softmax(Tensor::vec({0.0, 0.0, 0.0, 0.0}));
  for (double v : p.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("matmul by the identity is the identity") {
  const Tensor eye = Tensor::mat(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor x = Tensor::mat(3, 2, {1, 2, 3, 4, 5, 6});
  const Tensor y = ad::matmul(eye, x);
  CHECK(y.values() == x.values());
}

TEST_CASE("attention over a single key equal to the query returns the value row") {
  const Tensor q = Tensor::vec({1.0, 2.0});
  const Tensor k = Tensor::mat(1, 2, {1.0, 2.0});
  const Tensor v = Tensor::mat(1, 2, {5.0, 7.0});
  const Tensor out = ad::scaled_dot_attention(q, k, v);
  CHECK(out.values()[0] == doctest::Approx(5.0));
  CHECK(out.values()[1] == doctest::Approx(7.0));
}

TEST_CASE("backward of a plain sum is all ones") {
  ad::ParameterSet params;
  auto& p = params.add("p", {4});
  p.values() = {1.0, -2.0, 3.0, 0.5};
  ad::Tape tape;
  tape.backward(ad::sum(p.tensor()));
  for (double g : p.grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("backward of half squared norm is the parameter itself") {
  ad::ParameterSet params;
  auto& p = params.add("p", {5});
  Rng rng(3);
  for (double& v : p.values()) v = rng.uniform(-2.0, 2.0);
  ad::Tape tape;
  tape.backward(ad::scale(ad::sum(ad::mul(p.tensor(), p.tensor())), 0.5));
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p.grad()[i] == doctest::Approx(p.values()[i]).epsilon(1e-12));
  }
}

TEST_CASE("backward rejects non-scalar losses and empty tapes") {
  ad::ParameterSet params;
  auto& p = params.add("p", {3});
  {
    ad::Tape tape;
    const Tensor y = ad::scale(p.tensor(), 2.0);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
  }
  {
    ad::Tape tape;
    CHECK_THROWS_AS(tape.backward(Tensor::scalar(1.0)), std::runtime_error);
  }
}

TEST_CASE("shape mismatches raise errors that name the shapes") {
  const Tensor a = Tensor::vec({1, 2, 3});
  const Tensor b = Tensor::vec({1, 2});
  try {
    ad::add(a, b);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(3)") != std::string::npos);
    CHECK(msg.find("(2)") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::matmul(Tensor::mat(2, 3, std::vector<double>(6, 0.0)),
                             Tensor::mat(2, 2, std::vector<double>(4, 0.0))),
                  std::invalid_argument);
}

TEST_CASE("non-finite outputs are an error state") {
  CHECK_THROWS_AS(ad::log_t(Tensor::vec({-1.0})), std::runtime_error);
  CHECK_THROWS_AS(ad::log_t(Tensor::vec({0.0})), std::runtime_error);
}

TEST_CASE("every differentiable primitive matches finite differences") {
  // 3 shape draws x 3 seeds per primitive, relative error < 1e-3 at eps 1e-4.
  for (int trial = 0; trial < 9; ++trial) {
    Rng rng(derive_seed(1000, 17, static_cast<std::uint64_t>(trial)));
    const std::size_t m = 2 + static_cast<std::size_t>(rng.below(3));
    const std::size_t k = 2 + static_cast<std::size_t>(rng.below(3));
    const std::size_t n = 2 + static_cast<std::size_t>(rng.below(3));
    WeightedSum weighted_sum(derive_seed(2000, 23, static_cast<std::uint64_t>(trial)));

    auto check1 = [&](const char* name, auto op, Tensor x) {
      Tensor leaves[] = {x};
      const double err =
          test::max_gradient_error(leaves, [&]() { return weighted_sum(op(leaves[0])); });
      INFO(std::string(name));
      CHECK(err < 1e-3);
    };
    auto check2 = [&](const char* name, auto op, Tensor x, Tensor y) {
      Tensor leaves[] = {x, y};
      const double err = test::max_gradient_error(
          leaves, [&]() { return weighted_sum(op(leaves[0], leaves[1])); });
      INFO(std::string(name));
      CHECK(err < 1e-3);
    };

    check1("tanh", [](const Tensor& x) { return ad::tanh_t(x); }, random_leaf({m, k}, rng));
    check1("sigmoid", [](const Tensor& x) { return ad::sigmoid_t(x); }, random_leaf({m, k}, rng));
    check1("relu", [](const Tensor& x) { return ad::relu_t(x); }, random_leaf({m, k}, rng));
    check1("log", [](const Tensor& x) { return ad::log_t(x); },
           random_leaf({m, k}, rng, 0.2, 2.0));
    check1("scale", [](const Tensor& x) { return ad::scale(x, -1.7); }, random_leaf({m}, rng));
    check1("add_scalar", [](const Tensor& x) { return ad::add_scalar(x, 0.3); },
           random_leaf({m}, rng));
    check1("rsub_scalar", [](const Tensor& x) { return ad::rsub_scalar(2.0, x); },
           random_leaf({m}, rng));
    check1("clip", [](const Tensor& x) { return ad::clip(x, -0.5, 0.5); },
           random_leaf({m, k}, rng));
    check1("softmax", [](const Tensor& x) { return ad::softmax(x); }, random_leaf({k}, rng));
    check1("softmax_rows", [](const Tensor& x) { return ad::softmax_rows(x); },
           random_leaf({m, k}, rng));
    check1("sum", [](const Tensor& x) { return ad::sum(x); }, random_leaf({m, k}, rng));
    check1("mean_rows", [](const Tensor& x) { return ad::mean_rows(x); },
           random_leaf({m, k}, rng));
    check1("transpose", [](const Tensor& x) { return ad::transpose(x); },
           random_leaf({m, k}, rng));
    check1("reshape", [&](const Tensor& x) { return ad::reshape(x, {k, m}); },
           random_leaf({m, k}, rng));
    check1("row", [](const Tensor& x) { return ad::row(x, 1); }, random_leaf({m, k}, rng));
    check1("slice_cols", [&](const Tensor& x) { return ad::slice_cols(x, 1, k); },
           random_leaf({m, k}, rng));
    check1("repeat_row", [&](const Tensor& x) { return ad::repeat_row(x, n); },
           random_leaf({k}, rng));
    check1("pick", [](const Tensor& x) { return ad::pick(x, 0); }, random_leaf({k}, rng));

    const std::vector<int> idx = {0, static_cast<int>(m - 1), 1 % static_cast<int>(m)};
    check1("rows", [&](const Tensor& x) { return ad::rows(x, idx); }, random_leaf({m, k}, rng));
    std::vector<int> cols(m);
    for (std::size_t i = 0; i < m; ++i) cols[i] = static_cast<int>((i + 1) % k);
    check1("gather_cols", [&](const Tensor& x) { return ad::gather_cols(x, cols); },
           random_leaf({m, k}, rng));
    std::vector<double> mc(m * k);
    for (double& v : mc) v = rng.uniform(-1.0, 1.0);
    check1("mul_const", [&](const Tensor& x) { return ad::mul_const(x, mc); },
           random_leaf({m, k}, rng));
    std::vector<double> dc(k);
    for (double& v : dc) v = rng.uniform(-1.0, 1.0);
    check1("dot_const", [&](const Tensor& x) { return ad::dot_const(x, dc); },
           random_leaf({k}, rng));

    check2("add", [](const Tensor& a, const Tensor& b) { return ad::add(a, b); },
           random_leaf({m, k}, rng), random_leaf({m, k}, rng));
    check2("sub", [](const Tensor& a, const Tensor& b) { return ad::sub(a, b); },
           random_leaf({m, k}, rng), random_leaf({m, k}, rng));
    check2("mul", [](const Tensor& a, const Tensor& b) { return ad::mul(a, b); },
           random_leaf({m, k}, rng), random_leaf({m, k}, rng));
    check2("matmul", [](const Tensor& a, const Tensor& b) { return ad::matmul(a, b); },
           random_leaf({m, k}, rng), random_leaf({k, n}, rng));
    check2("matvec", [](const Tensor& a, const Tensor& b) { return ad::matmul(a, b); },
           random_leaf({m, k}, rng), random_leaf({k}, rng));
    check2("vecmat", [](const Tensor& a, const Tensor& b) { return ad::matmul(a, b); },
           random_leaf({k}, rng), random_leaf({k, n}, rng));
    check2("dot", [](const Tensor& a, const Tensor& b) { return ad::matmul(a, b); },
           random_leaf({k}, rng), random_leaf({k}, rng));
    check2("concat", [](const Tensor& a, const Tensor& b) { return ad::concat(a, b); },
           random_leaf({m}, rng), random_leaf({n}, rng));
    check2("hstack", [](const Tensor& a, const Tensor& b) { return ad::hstack(a, b); },
           random_leaf({m, k}, rng), random_leaf({m, n}, rng));
    check2("add_rowvec", [](const Tensor& a, const Tensor& b) { return ad::add_rowvec(a, b); },
           random_leaf({m, k}, rng), random_leaf({k}, rng));
    check2("l2_distance", [](const Tensor& a, const Tensor& b) { return ad::l2_distance(a, b); },
           random_leaf({k}, rng), random_leaf({k}, rng));
    check2("attention",
           [](const Tensor& q, const Tensor& kv) { return ad::scaled_dot_attention(q, kv, kv); },
           random_leaf({k}, rng), random_leaf({m, k}, rng));
    check2("attention_rows",
           [](const Tensor& q, const Tensor& kv) {
             return ad::scaled_dot_attention_rows(q, kv, kv);
           },
           random_leaf({n, k}, rng), random_leaf({m, k}, rng));

    {
      Tensor leaves[] = {random_leaf({m}, rng), random_leaf({m}, rng), random_leaf({m}, rng)};
      const std::vector<double> w = {0.5, -1.5, 2.0};
      const double err = test::max_gradient_error(leaves, [&]() {
        return weighted_sum(ad::linear_combination(leaves, w));
      });
      INFO("linear_combination");
      CHECK(err < 1e-3);
    }
    {
      std::vector<Tensor> rows_in = {random_leaf({k}, rng), random_leaf({k}, rng)};
      Tensor leaves[] = {rows_in[0], rows_in[1]};
      const double err = test::max_gradient_error(
          leaves, [&]() { return weighted_sum(ad::vstack(rows_in)); });
      INFO("vstack");
      CHECK(err < 1e-3);
    }
  }
}

TEST_CASE("gru cell matches finite differences and counts applications") {
  for (int trial = 0; trial < 3; ++trial) {
    Rng rng(derive_seed(31, 7, static_cast<std::uint64_t>(trial)));
    const std::size_t in = 3, hs = 4, batch = 2;
    ad::ParameterSet params;
    auto cell = ad::make_gru_cell(params, "cell", in, hs, rng.next_raw());
    WeightedSum weighted_sum(derive_seed(32, 7, static_cast<std::uint64_t>(trial)));
    Tensor leaves[] = {random_leaf({batch, in}, rng), random_leaf({batch, hs}, rng)};
    const double err_inputs = test::max_gradient_error(leaves, [&]() {
      return weighted_sum(ad::gru_cell(cell, leaves[0], leaves[1]));
    });
    CHECK(err_inputs < 1e-3);

    const double err_params = test::max_param_gradient_error(params, [&]() {
      return weighted_sum(ad::gru_cell(cell, leaves[0], leaves[1]));
    });
    CHECK(err_params < 1e-3);
  }

  ad::ParameterSet params;
  auto cell = ad::make_gru_cell(params, "cell", 2, 3, 9);
  const std::uint64_t before = cell.applications;
  ad::gru_cell(cell, Tensor::vec({0.1, 0.2}), Tensor::vec({0.0, 0.0, 0.0}));
  CHECK(cell.applications == before + 1);
}

TEST_CASE("gru cell vector path agrees with the plain-double oracle") {
  ad::ParameterSet params;
  auto cell = ad::make_gru_cell(params, "cell", 3, 4, 1234);
  Rng rng(55);
  std::vector<double> x(3), h(4);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  for (double& v : h) v = rng.uniform(-1.0, 1.0);
  const auto expect = test::gru_oracle(cell.wx->values(), cell.wh->values(), cell.bx->values(),
                                       cell.bh->values(), x, h);
  const Tensor got = ad::gru_cell(cell, Tensor::vec(x), Tensor::vec(h));
  REQUIRE(got.size() == expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) {
    CHECK(got.values()[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("clip gradient passes inside the open interval and blocks outside") {
  ad::ParameterSet params;
  auto& p = params.add("p", {3});
  p.values() = {0.0, 2.0, -2.0};
  ad::Tape tape;
  tape.backward(ad::sum(ad::clip(p.tensor(), -1.0, 1.0)));
  CHECK(p.grad()[0] == doctest::Approx(1.0));
  CHECK(p.grad()[1] == doctest::Approx(0.0));
  CHECK(p.grad()[2] == doctest::Approx(0.0));
}

TEST_CASE("softmax outputs stay normalized over random inputs") {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const int n = 2 + rng.below(60);
    std::vector<double> logits(static_cast<std::size_t>(n));
    for (double& v : logits) v = rng.uniform(-30.0, 30.0);
    const Tensor p = ad::softmax(Tensor::vec(logits));
    double sum = 0.0;
    for (double v : p.values()) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("backward is deterministic for identical tapes") {
  auto run = [](std::vector<double>& out) {
    ad::ParameterSet params;
    auto& p = params.add("p", {6});
    ad::init_xavier_uniform(p, 99);
    p.values().resize(6);
    for (std::size_t i = 0; i < 6; ++i) p.values()[i] = 0.1 * static_cast<double>(i + 1);
    ad::Tape tape;
    const Tensor m = ad::reshape(p.tensor(), {2, 3});
    const Tensor loss = ad::sum(ad::softmax_rows(ad::tanh_t(m)));
    tape.backward(loss);
    out = p.grad();
  };
  std::vector<double> g1, g2;
  run(g1);
  run(g2);
  CHECK(g1 == g2);
}

TEST_CASE("Adam first step follows the bias-corrected update") {
  ad::ParameterSet params;
  auto& p = params.add("p", {1});
  p.values()[0] = 0.7;
  ad::Adam adam(params, {});
  p.grad()[0] = 1.0;
  adam.step();
  CHECK(std::abs((0.7 - p.values()[0]) - 0.001) < 1e-9);
  CHECK(p.grad()[0] == 0.0);  // zeroed between steps
}

TEST_CASE("Adam leaves parameters unchanged on a zero gradient from rest") {
  ad::ParameterSet params;
  auto& p = params.add("p", {3});
  p.values() = {1.0, 2.0, 3.0};
  ad::Adam adam(params, {});
  adam.step();
  CHECK(p.values() == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("two identical Adam steps differ through moment accumulation") {
  ad::ParameterSet params;
  auto& p = params.add("p", {1});
  p.values()[0] = 0.0;
  ad::Adam adam(params, {});
  p.grad()[0] = 1.0;
  adam.step();
  const double d1 = -p.values()[0];
  p.grad()[0] = 1.0;
  adam.step();
  const double d2 = -p.values()[0] - d1;
  CHECK(d1 != d2);
}

TEST_CASE("checkpoints round-trip and validate shapes and names") {
  namespace fs = std::filesystem;
  const auto path = (fs::temp_directory_path() / "qrec_ckpt_test.ckpt").string();

  ad::ParameterSet params;
  auto& a = params.add("layer.w", {3, 2});
  auto& b = params.add("layer.b", {2});
  Rng rng(8);
  for (double& v : a.values()) v = rng.uniform(-1.0, 1.0);
  for (double& v : b.values()) v = rng.uniform(-1.0, 1.0);
  save_checkpoint(path, params);

  ad::ParameterSet restored;
  restored.add("layer.w", {3, 2});
  restored.add("layer.b", {2});
  load_checkpoint(path, restored);
  CHECK(restored.find("layer.w")->values() == a.values());
  CHECK(restored.find("layer.b")->values() == b.values());

  ad::ParameterSet wrong_shape;
  wrong_shape.add("layer.w", {2, 3});
  wrong_shape.add("layer.b", {2});
  try {
    load_checkpoint(path, wrong_shape);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(3, 2)") != std::string::npos);
    CHECK(msg.find("(2, 3)") != std::string::npos);
  }

  ad::ParameterSet missing;
  missing.add("layer.w", {3, 2});
  CHECK_THROWS_AS(load_checkpoint(path, missing), std::runtime_error);
  fs::remove(path);
}
