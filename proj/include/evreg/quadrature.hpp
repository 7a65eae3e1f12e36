#pragma once

#include <vector>

namespace evreg {

// Nodes and weights of the n-point Gauss-Legendre rule on (-1, 1).
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Cached rule lookup; thread safe. Rules are computed once per order.
const GaussLegendre& gauss_legendre(int order);

}  // namespace evreg
