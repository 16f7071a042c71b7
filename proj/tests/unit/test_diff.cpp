#include <doctest.h>

#include <random>

#include "fd.hpp"
#include "nsm/core/error.hpp"
#include "nsm/core/rng.hpp"
#include "nsm/diff/tape.hpp"

using namespace nsm;
namespace d = nsm::diff;

namespace {

Vec random_vec(Index n, std::uint64_t seed) {
  Rng rng = make_rng(seed, 11);
  std::normal_distribution<double> n01;
  Vec v(n);
  for (Index i = 0; i < n; ++i) v(i) = n01(rng);
  return v;
}

Mat random_mat(Index r, Index c, std::uint64_t seed) {
  Vec v = random_vec(r * c, seed);
  return Eigen::Map<Mat>(v.data(), r, c);
}

double value_of(const std::function<d::Var(d::Tape&)>& f, const Vec& p) {
  d::Tape t(std::span<const double>(p.data(), p.size()));
  return t.value(f(t))(0, 0);
}

void check_against_fd(const std::function<d::Var(d::Tape&)>& f, const Vec& p, double tol = 1e-6) {
  const auto vg = d::grad(f, std::span<const double>(p.data(), p.size()));
  const Vec fd = testutil::fd_gradient([&](const Vec& q) { return value_of(f, q); }, p, 1e-5);
  CHECK(vg.value == value_of(f, p));
  CHECK(testutil::rel_err(vg.gradient, fd, 1e-3) < tol);
}

}  // namespace

TEST_CASE("constant objective has zero gradient") {
  Vec p = random_vec(5, 1);
  auto g = d::grad([](d::Tape& t) { return t.scalar(3.0); }, std::span<const double>(p.data(), p.size()));
  CHECK(g.value == 3.0);
  CHECK(g.gradient.isZero(0));
}

TEST_CASE("linear objective has gradient a") {
  Vec p = random_vec(4, 2);
  Mat a = random_mat(1, 4, 3);
  auto g = d::grad([&](d::Tape& t) { return d::matmul(t.constant(a), t.param(0, 4, 1)); },
                   std::span<const double>(p.data(), p.size()));
  CHECK((g.gradient - a.transpose()).norm() == doctest::Approx(0.0));
}

TEST_CASE("two-layer tanh network gradient matches finite differences") {
  // params: W1 (3x2), b1 (1x3), W2 (3x1), c (1x1)
  const Mat X = random_mat(6, 2, 4);
  auto f = [&](d::Tape& t) {
    auto x = t.constant(X);
    auto h = d::tanh(d::matmul(x, t.param(0, 2, 3)) + t.param(6, 1, 3));
    auto y = d::matmul(h, t.param(9, 3, 1)) + t.param(12, 1, 1);
    return d::sum(d::square(y));
  };
  for (std::uint64_t s = 0; s < 10; ++s) check_against_fd(f, random_vec(13, 100 + s));
}

TEST_CASE("every primitive matches finite differences over 100 seeds") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Mat C = random_mat(3, 4, 500 + s);
    const Mat Rrow = random_mat(1, 4, 900 + s);
    // matmul with all transpose combinations
    check_against_fd([&](d::Tape& t) { return d::sum(d::matmul(t.param(0, 3, 2), t.param(6, 2, 4))); },
                     random_vec(14, s));
    check_against_fd(
        [&](d::Tape& t) { return d::sum(d::square(d::matmul(t.param(0, 3, 2), t.constant(C), true, false))); },
        random_vec(6, s));
    check_against_fd(
        [&](d::Tape& t) { return d::sum(d::square(d::matmul(t.constant(C), t.param(0, 2, 4), false, true))); },
        random_vec(8, s));
    check_against_fd(
        [&](d::Tape& t) { return d::sum(d::square(d::matmul(t.param(0, 4, 3), t.param(12, 2, 4), true, true))); },
        random_vec(20, s));
    // broadcast add / mul
    check_against_fd([&](d::Tape& t) { return d::sum(d::square(t.constant(C) + t.param(0, 1, 4))); },
                     random_vec(4, s));
    check_against_fd([&](d::Tape& t) { return d::sum(d::square(t.param(0, 3, 4) * t.param(12, 3, 1))); },
                     random_vec(15, s));
    check_against_fd([&](d::Tape& t) { return d::sum(d::square(t.param(0, 3, 4) * t.param(12, 1, 1))); },
                     random_vec(13, s));
    check_against_fd([&](d::Tape& t) { return d::sum(t.param(0, 1, 4) * t.constant(Rrow)); }, random_vec(4, s));
    // elementwise nonlinearities
    check_against_fd([&](d::Tape& t) { return d::sum(d::tanh(t.param(0, 3, 4))); }, random_vec(12, s));
    check_against_fd([&](d::Tape& t) { return d::sum(d::softplus(t.param(0, 3, 4))); }, random_vec(12, s));
    check_against_fd([&](d::Tape& t) { return d::sum(d::logsumexp_rows(t.param(0, 3, 4))); }, random_vec(12, s));
    check_against_fd([&](d::Tape& t) { return d::sum(d::log(d::softplus(t.param(0, 3, 4)))); }, random_vec(12, s));
    check_against_fd(
        [&](d::Tape& t) { return d::sum(d::reciprocal(d::affine(d::square(t.param(0, 3, 4)), 1.0, 0.5))); },
        random_vec(12, s));
    check_against_fd([&](d::Tape& t) { return t.param(0, 1, 1) - 2.0 * t.param(1, 1, 1); }, random_vec(2, s));
  }
}

TEST_CASE("repeated passes are bit-identical") {
  Vec p = random_vec(13, 9);
  const Mat X = random_mat(6, 2, 4);
  auto f = [&](d::Tape& t) {
    auto h = d::tanh(d::matmul(t.constant(X), t.param(0, 2, 3)) + t.param(6, 1, 3));
    return d::sum(d::logsumexp_rows(d::matmul(h, t.param(9, 3, 1)) + t.param(12, 1, 1)));
  };
  d::Tape tape(std::span<const double>(p.data(), p.size()));
  auto root = f(tape);
  Vec g1(13), g2(13);
  const double v1 = tape.backward(root, std::span<double>(g1.data(), 13));
  const double v2 = tape.backward(root, std::span<double>(g2.data(), 13));
  CHECK(v1 == v2);
  CHECK(g1 == g2);
  auto again = d::grad(f, std::span<const double>(p.data(), p.size()));
  CHECK(again.gradient == g1);
}

TEST_CASE("non-finite values are reported with the node") {
  Vec p(1);
  p << -1.0;
  CHECK_THROWS_AS(d::grad([](d::Tape& t) { return d::sum(d::log(t.param(0, 1, 1))); },
                          std::span<const double>(p.data(), 1)),
                  NumericError);
  try {
    d::Tape t(std::span<const double>(p.data(), 1));
    d::log(t.param(0, 1, 1));
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
  d::Tape t(std::span<const double>(p.data(), 1));
  CHECK_THROWS_AS(d::add(t.constant(Mat::Zero(2, 3)), t.constant(Mat::Zero(3, 2))), std::invalid_argument);
}
