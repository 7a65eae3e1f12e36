#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "evreg/ev_models.hpp"
#include "evreg/random.hpp"
#include "test_support.hpp"

using namespace evreg;

namespace {

// d/dx of the joint CDF equals the conditional CDF times the Frechet
// marginal density x^-2 exp(-1/x); central differences give the oracle.
void check_fd_identity(const EvModel& model, double x, double y, double tol) {
  const double h = 1e-4 * x;
  const double gp = joint_cdf(model, x + h, y);
  const double gm = joint_cdf(model, x - h, y);
  const double fd = (gp - gm) / (2.0 * h);
  const double marginal = std::exp(-1.0 / x) / (x * x);
  const double cond = conditional_cdf(model, y, x);
  CHECK(std::fabs(fd / marginal - cond) <= tol);
}

double kendall_tau(const std::vector<FrechetPair>& pairs) {
  long long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = i + 1; j < pairs.size(); ++j) {
      const double s = (pairs[i].x - pairs[j].x) * (pairs[i].y - pairs[j].y);
      if (s > 0) ++concordant;
      else if (s < 0) ++discordant;
    }
  }
  return static_cast<double>(concordant - discordant) /
         (0.5 * pairs.size() * (pairs.size() - 1));
}

}  // namespace

TEST_SUITE("ev_models") {

TEST_CASE("logistic joint cdf at pinned points") {
  CHECK(joint_cdf(Logistic{1.0}, 1.0, 1.0) ==
        doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
  CHECK(joint_cdf(Logistic{0.5}, 1.0, 1.0) ==
        doctest::Approx(std::exp(-std::sqrt(2.0))).epsilon(1e-14));
  // alpha -> 0 is perfect dependence: G(x, y) = exp(-1 / min(x, y)).
  CHECK(joint_cdf(Logistic{1e-8}, 1.0, 2.0) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-6));
}

TEST_CASE("husler reiss near independence and near perfect dependence") {
  CHECK(joint_cdf(HuslerReiss{20.0}, 1.0, 1.0) ==
        doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(joint_cdf(HuslerReiss{1e-4}, 1.0, 2.0) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-6));
}

TEST_CASE("coles tawn is exchangeable when alpha equals beta") {
  const ColesTawn ct{1.7, 1.7};
  CHECK(joint_cdf(ct, 0.8, 2.3) == doctest::Approx(joint_cdf(ct, 2.3, 0.8)).epsilon(1e-12));
}

TEST_CASE("joint cdf recovers frechet margins at infinity") {
  const std::vector<EvModel> models{Logistic{0.6}, HuslerReiss{0.7}, ColesTawn{0.5, 100.0}};
  for (const auto& model : models) {
    for (const double x : {0.3, 1.0, 4.0}) {
      CHECK(joint_cdf(model, x, 1e14) == doctest::Approx(std::exp(-1.0 / x)).epsilon(1e-9));
      CHECK(joint_cdf(model, 1e14, x) == doctest::Approx(std::exp(-1.0 / x)).epsilon(1e-9));
    }
  }
}

TEST_CASE("parameter validation rejects bad regions") {
  CHECK_THROWS_AS(validate(Logistic{0.0}), std::domain_error);
  CHECK_THROWS_AS(validate(Logistic{1.2}), std::domain_error);
  CHECK_THROWS_AS(validate(HuslerReiss{0.0}), std::domain_error);
  CHECK_THROWS_AS(validate(ColesTawn{-1.0, 2.0}), std::domain_error);
  CHECK_NOTHROW(validate(Logistic{1.0}));
}

TEST_CASE("conditional cdf matches the joint cdf derivative") {
  const std::vector<EvModel> models{Logistic{0.9}, HuslerReiss{0.1}, ColesTawn{0.5, 100.0}};
  for (const auto& model : models) {
    for (const double x : {0.2, 1.0, 6.0}) {
      for (const double y : {0.3, 1.5, 9.0}) {
        check_fd_identity(model, x, y, 2e-4);
      }
    }
  }
}

TEST_CASE("conditional cdf is a cdf in y") {
  const std::vector<EvModel> models{Logistic{0.3}, HuslerReiss{1.0}, ColesTawn{2.0, 0.7}};
  for (const auto& model : models) {
    for (const double x : {0.5, 3.0}) {
      double prev = 0.0;
      for (double y = 0.05; y < 400.0; y *= 1.6) {
        const double g = conditional_cdf(model, y, x);
        CHECK(g >= -1e-14);
        CHECK(g <= 1.0 + 1e-14);
        CHECK(g >= prev - 1e-9);
        prev = g;
      }
      CHECK(conditional_cdf(model, 1e13, x) == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("independent logistic conditional reduces to the margin") {
  for (const double x : {0.4, 2.0, 17.0}) {
    for (const double y : {0.7, 1.3, 5.0}) {
      CHECK(conditional_cdf(Logistic{1.0}, y, x) ==
            doctest::Approx(std::exp(-1.0 / y)).epsilon(1e-12));
    }
  }
}

TEST_CASE("sampling is deterministic in the seed") {
  const EvModel model = HuslerReiss{0.5};
  const auto a = sample(model, 200, 77);
  const auto b = sample(model, 200, 77);
  const auto c = sample(model, 200, 78);
  REQUIRE(a.size() == 200);
  bool same = true, diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && a[i].x == b[i].x && a[i].y == b[i].y;
    diff = diff || a[i].x != c[i].x;
  }
  CHECK(same);
  CHECK(diff);
}

TEST_CASE("sampled margins pass a probability integral transform check") {
  const auto pairs = sample(EvModel{Logistic{0.4}}, 4000, 5);
  double mx = 0.0, my = 0.0;
  for (const auto& p : pairs) {
    mx += std::exp(-1.0 / p.x);
    my += std::exp(-1.0 / p.y);
  }
  CHECK(mx / pairs.size() == doctest::Approx(0.5).epsilon(0.04));
  CHECK(my / pairs.size() == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("kendall tau tracks the logistic dependence parameter") {
  // tau = 1 - alpha for the logistic family.
  const auto indep = sample(EvModel{Logistic{1.0}}, 1500, 31);
  CHECK(std::fabs(kendall_tau(indep)) < 0.05);
  const auto strong = sample(EvModel{Logistic{0.3}}, 1500, 32);
  CHECK(kendall_tau(strong) == doctest::Approx(0.7).epsilon(0.08));
}

TEST_CASE("softmax conditional cdf approaches the hard minimum indicator") {
  const std::vector<double> xs{2.0, 5.0, 3.0};
  for (const double y : {1.2, 2.8}) {
    const bool above = y > 2.0;
    double prev_err = 2.0;
    for (const double N : {50.0, 100.0, 200.0, 400.0}) {
      const double g = softmax_conditional_cdf(y, xs, N);
      CHECK(g >= 0.0);
      CHECK(g <= 1.0);
      const double err = std::fabs(g - (above ? 1.0 : 0.0));
      CHECK(err <= prev_err + 1e-12);
      prev_err = err;
    }
    CHECK(prev_err < 0.1);
  }
}

TEST_CASE("perfect dependence and independence quantiles") {
  const std::vector<double> xs{4.0, 1.5, 8.0};
  CHECK(perfect_dependence_quantile(xs) == 1.5);
  CHECK(independence_quantile(0.5) == doctest::Approx(-1.0 / std::log(0.5)).epsilon(1e-14));
}

TEST_CASE("model names round out the variant") {
  CHECK(model_name(Logistic{0.5}) == "logistic");
  CHECK(model_name(HuslerReiss{0.5}) == "husler-reiss");
  CHECK(model_name(ColesTawn{1.0, 2.0}) == "coles-tawn");
}

}  // TEST_SUITE
