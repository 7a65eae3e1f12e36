#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace evreg {

// Bivariate extreme-value dependence families on unit Frechet margins.
struct Logistic {
  double alpha;  // (0, 1]; 1 is exact independence
};

struct HuslerReiss {
  double lambda;  // > 0; small values give strong dependence
};

struct ColesTawn {
  double alpha;  // > 0
  double beta;   // > 0
};

using EvModel = std::variant<Logistic, HuslerReiss, ColesTawn>;

struct FrechetPair {
  double x = 0.0;
  double y = 0.0;
};

std::string model_name(const EvModel& model);

// Throws std::domain_error when the parameters leave the valid region.
void validate(const EvModel& model);

// Joint CDF G(x, y) = P(X <= x, Y <= y); x, y > 0.
double joint_cdf(const EvModel& model, double x, double y);

// Conditional CDF of the response, G_{Y|X}(y | x).
double conditional_cdf(const EvModel& model, double y, double x);

// n pairs on Frechet margins. X comes from exact inversion of exp(-1/x);
// Y inverts the conditional CDF numerically. A seed fixes the output exactly.
std::vector<FrechetPair> sample(const EvModel& model, std::size_t n,
                                std::uint64_t seed);

// Conditional quantile under exact independence; constant in the covariate.
double independence_quantile(double q);

// Conditional quantile under perfect dependence: the minimum covariate.
double perfect_dependence_quantile(std::span<const double> x);

// Smooth soft-maximum approximation of the perfect-dependence conditional
// CDF; sharpness N > 0, with pointwise limit 1{y > min x} as N grows.
double softmax_conditional_cdf(double y, std::span<const double> x, double N);

}  // namespace evreg
