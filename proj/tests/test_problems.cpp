#include <catch2/catch_amalgamated.hpp>

#include "menumax/gradcheck.hpp"
#include "menumax/problem.hpp"

#include <cmath>

using namespace menumax;

TEST_CASE("bernoulli draws are exactly zero or one") {
  MechanismProblem p;
  p.n = 2;
  p.m = 3;
  p.dist = Dist::kBernoulli;
  Arr t = sample_types(p, 500, 7);
  CHECK(((t == 0.0) || (t == 1.0)).all());
}

TEST_CASE("correlated draws share a per-good center of width one half") {
  MechanismProblem p;
  p.n = 4;
  p.m = 3;
  p.dist = Dist::kCorrelated;
  Arr t = sample_types(p, 400, 9);
  for (Eigen::Index k = 0; k < t.cols(); ++k)
    for (int j = 0; j < p.m; ++j) {
      double lo = 2.0, hi = -1.0;
      for (int i = 0; i < p.n; ++i) {
        lo = std::min(lo, t(i * p.m + j, k));
        hi = std::max(hi, t(i * p.m + j, k));
      }
      REQUIRE(hi - lo <= 0.5);
      REQUIRE(lo >= 0.0);
      REQUIRE(hi <= 1.0);
    }
}

TEST_CASE("uniform sampling hits the CLT band on 2^18 profiles") {
  MechanismProblem p;
  p.n = 1;
  p.m = 2;
  Arr t = sample_types(p, 1 << 18, 2024);
  for (int j = 0; j < 2; ++j) CHECK(std::fabs(t.row(j).mean() - 0.5) < 0.005);
}

TEST_CASE("sampling is reproducible bitwise") {
  MechanismProblem p;
  p.n = 3;
  p.m = 5;
  p.dist = Dist::kCorrelated;
  Arr a = sample_types(p, 64, 31);
  Arr b = sample_types(p, 64, 31);
  CHECK((a == b).all());
  Arr c = sample_types(p, 64, 32);
  CHECK(!(a == c).all());
}

TEST_CASE("reverse-auction types live in [-1, 0]") {
  MechanismProblem p;
  p.n = 2;
  p.m = 2;
  p.reverse = ReverseMode::kIndivisible;
  Arr t = sample_types(p, 100, 3);
  CHECK((t >= -1.0).all());
  CHECK((t <= 0.0).all());
}

TEST_CASE("player utility is quasi-linear with optional cost") {
  MechanismProblem p;
  p.m = 2;
  Eigen::VectorXd x(2), t(2);
  x << 1, 0;
  t << 0.7, 0.2;
  CHECK(player_utility(p, x, 0.5, t) == Catch::Approx(0.2).margin(1e-15));

  Eigen::VectorXd z = Eigen::VectorXd::Zero(2);
  CHECK(player_utility(p, z, 0.0, t) == 0.0);

  // reverse-auction seller: hands over everything at its full cost
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(2), neg = -Eigen::VectorXd::Ones(2);
  CHECK(player_utility(p, ones, -2.0, neg) == Catch::Approx(0.0).margin(1e-15));

  p.player_cost = [](const Eigen::Ref<const Eigen::VectorXd>& v) { return -0.1 * v.squaredNorm(); };
  CHECK(player_utility(p, x, 0.5, t) == Catch::Approx(0.1).margin(1e-15));
}

TEST_CASE("designer utility closed forms") {
  SECTION("monopolist revenue") {
    MechanismProblem p;
    p.n = 1;
    p.m = 2;
    Arr x(2, 1), pay(1, 1);
    x << 0.3, 0.9;
    pay << 1.25;
    CHECK(designer_utility_value(p, x, pay)(0, 0) == 1.25);
  }
  SECTION("single production event costs c_prod once") {
    MechanismProblem p;
    p.n = 3;
    p.m = 1;
    p.c_prod = 1.0;
    Arr x = Arr::Ones(3, 1), pay = Arr::Zero(3, 1);
    CHECK(designer_utility_value(p, x, pay)(0, 0) == Catch::Approx(-1.0).margin(1e-15));
  }
  SECTION("duplication cost scales with allocated units") {
    MechanismProblem p;
    p.n = 3;
    p.m = 2;
    p.c_dup = 0.5;
    Arr x = Arr::Constant(6, 1, 0.5), pay = Arr::Zero(3, 1);
    CHECK(designer_utility_value(p, x, pay)(0, 0) == Catch::Approx(-1.5).margin(1e-12));
  }
  SECTION("reverse divisible CARA gain") {
    MechanismProblem p;
    p.n = 2;
    p.m = 1;
    p.reverse = ReverseMode::kDivisible;
    Arr x(2, 1), pay(2, 1);
    x << 0.4, 0.6;
    pay << -0.2, -0.3;
    const double expect = (1.0 - std::exp(-1.0)) - 0.5;
    CHECK(designer_utility_value(p, x, pay)(0, 0) == Catch::Approx(expect).epsilon(1e-12));
  }
  SECTION("reverse indivisible saturates at one unit") {
    MechanismProblem p;
    p.n = 3;
    p.m = 2;
    p.reverse = ReverseMode::kIndivisible;
    Arr x = Arr::Constant(6, 1, 0.8), pay = Arr::Zero(3, 1);
    CHECK(designer_utility_value(p, x, pay)(0, 0) == Catch::Approx(2.0).margin(1e-12));
  }
}

TEST_CASE("designer utility slope in each payment is exactly one") {
  for (ReverseMode r : {ReverseMode::kNone, ReverseMode::kIndivisible, ReverseMode::kDivisible}) {
    MechanismProblem p;
    p.n = 3;
    p.m = 2;
    p.reverse = r;
    p.c_prod = r == ReverseMode::kNone ? 0.7 : 0.0;
    p.c_dup = r == ReverseMode::kNone ? 0.3 : 0.0;
    Arr x = Arr::Constant(6, 1, 0.4), pay = Arr::Constant(3, 1, 0.2);
    Tape t;
    Var pv = t.input(pay);
    Var u = designer_utility_node(t, p, t.constant(x), pv);
    t.backward(t.sum_all(u));
    CHECK((t.adjoint(pv) == 1.0).all());
  }
}

TEST_CASE("designer utility gradient in x matches finite differences off ties") {
  CounterRng rng(5, 50);
  for (ReverseMode r : {ReverseMode::kNone, ReverseMode::kIndivisible, ReverseMode::kDivisible}) {
    MechanismProblem p;
    p.n = 3;
    p.m = 2;
    p.reverse = r;
    p.c_prod = r == ReverseMode::kNone ? 0.8 : 0.0;
    p.c_dup = 0.25;
    if (r != ReverseMode::kNone) p.c_dup = 0.0;
    Arr x(6, 2), pay = Arr::Constant(3, 2, 0.1);
    for (Eigen::Index k = 0; k < x.size(); ++k)
      x.data()[k] = 0.05 + 0.9 * rng.u01(static_cast<uint64_t>(k) + 100 * static_cast<int>(r));
    // keep sums away from the indivisible clamp corner at 1
    if (r == ReverseMode::kIndivisible) x *= 0.3;

    Tape t;
    Var xv = t.input(x);
    Var u = designer_utility_node(t, p, xv, t.constant(pay));
    t.backward(t.sum_all(u));
    REQUIRE(t.kink_margin() > 1e-3);
    Arr analytic = t.adjoint(xv);
    auto res = check_input_fd(x, analytic, [&]() {
      Tape tt;
      Var uu = designer_utility_node(tt, p, tt.constant(x), tt.constant(pay));
      return tt.val(tt.sum_all(uu))(0, 0);
    });
    CHECK(res.max_err < 1e-5);
  }
}
