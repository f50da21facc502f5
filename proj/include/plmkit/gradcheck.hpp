#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "plmkit/graph.hpp"

namespace plmkit::nn {

// Compare reverse-mode gradients against central finite differences.
// `build` receives a graph plus leaf nodes for each input matrix and must
// return a scalar node. Returns max |analytic-numeric| / max(|a|,|n|,1e-8).
template <typename BuildFn>
double grad_check(BuildFn&& build, const std::vector<Mat<double>>& inputs,
                  double eps = 1e-5) {
  if (eps <= 0) throw ContractError("grad_check: eps must be positive");

  auto evaluate = [&](const std::vector<Mat<double>>& xs, bool want_grads,
                      std::vector<Mat<double>>* grads) {
    Graph<double> g;
    g.train_mode = false;
    std::vector<NodeRef<double>> leaves;
    leaves.reserve(xs.size());
    for (const auto& x : xs) leaves.push_back(leaf(g, x, true));
    NodeRef<double> out = build(g, leaves);
    if (out.value().size() != 1)
      throw ContractError("grad_check: computation must be scalar-valued");
    if (want_grads) {
      g.backward(out.node);
      grads->clear();
      for (auto& l : leaves) grads->push_back(l.grad());
    }
    return out.value()(0, 0);
  };

  std::vector<Mat<double>> analytic;
  evaluate(inputs, true, &analytic);

  double max_err = 0.0;
  std::vector<Mat<double>> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index e = 0; e < inputs[i].size(); ++e) {
      const double saved = probe[i].data()[e];
      probe[i].data()[e] = saved + eps;
      const double fp = evaluate(probe, false, nullptr);
      probe[i].data()[e] = saved - eps;
      const double fm = evaluate(probe, false, nullptr);
      probe[i].data()[e] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[i].data()[e];
      const double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

// Finite-difference check against a whole named parameter set. `f` must
// evaluate the scalar objective for the given parameters and, when asked,
// fill analytic gradients (by running its reverse pass). Model gradients span
// many orders of magnitude, so the central difference is Richardson-
// extrapolated (eps and eps/2) to push truncation error to O(eps^4) while
// eps stays large enough that rounding noise cannot swamp tiny gradients.
template <typename F>
double param_grad_check(F&& f, const std::map<std::string, Mat<double>>& params,
                        double eps = 1e-3) {
  if (eps <= 0) throw ContractError("param_grad_check: eps must be positive");
  std::map<std::string, Mat<double>> analytic;
  f(params, &analytic);

  double max_err = 0.0;
  std::map<std::string, Mat<double>> probe = params;
  for (auto& [name, mat] : probe) {
    const auto it = analytic.find(name);
    if (it == analytic.end())
      throw ContractError("param_grad_check: no analytic gradient for " + name);
    for (Eigen::Index e = 0; e < mat.size(); ++e) {
      const double saved = mat.data()[e];
      auto central = [&](double h) {
        mat.data()[e] = saved + h;
        const double fp = f(probe, nullptr);
        mat.data()[e] = saved - h;
        const double fm = f(probe, nullptr);
        mat.data()[e] = saved;
        return (fp - fm) / (2.0 * h);
      };
      const double coarse = central(eps);
      const double fine = central(eps / 2.0);
      const double numeric = (4.0 * fine - coarse) / 3.0;
      const double a = it->second.data()[e];
      const double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace plmkit::nn
