// Discretization backbone: Chebyshev–Lobatto nodes in the field-energy
// variable r and a graded quadrature in the radial momentum k.

#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "rgflow/chebyshev.hpp"
#include "rgflow/quadrature.hpp"

namespace rgflow {

// The radial reduction replaces K = (k, lambda) in R^3 x Z_2 by |k| in (0,1].
// Angular measure and polarization sums are absorbed into measure_const, so a
// single ladder-operator slot of an interaction term carries the weight
//   slot_weight(i) = measure_const * sqrt(k_weights[i] * k_nodes[i])
// on the normalized mode operators.  With measure_const = 1 the completeness
// sum over one slot equals the flat integral of 1 over (0,1].
struct RadialGrid {
    std::vector<double> r_nodes;        // Chebyshev–Lobatto on [0,1]
    std::vector<double> r_bary;         // barycentric weights
    std::vector<double> r_diff;         // differentiation matrix, row-major
    std::vector<double> k_nodes;        // ascending, in (0,1]
    std::vector<double> k_weights;      // positive, sum = 1
    double measure_const = 1.0;

    int nr() const { return int(r_nodes.size()); }
    int nk() const { return int(k_nodes.size()); }
    double slot_weight(int i) const {
        return measure_const * std::sqrt(k_weights[i] * k_nodes[i]);
    }

    void validate() const {
        if (r_nodes.size() < 2) throw std::invalid_argument("grid: r_nodes too small");
        if (r_nodes.front() != 0.0 || r_nodes.back() != 1.0)
            throw std::invalid_argument("grid: r_nodes must span [0,1]");
        double s = 0.0;
        for (size_t i = 0; i < k_nodes.size(); ++i) {
            if (k_nodes[i] <= 0.0 || k_nodes[i] > 1.0)
                throw std::invalid_argument("grid: k node outside (0,1]");
            if (i > 0 && k_nodes[i] <= k_nodes[i - 1])
                throw std::invalid_argument("grid: k nodes not ascending");
            if (k_weights[i] <= 0.0) throw std::invalid_argument("grid: weight <= 0");
            s += k_weights[i];
        }
        if (std::abs(s - 1.0) > 1e-12)
            throw std::invalid_argument("grid: weights do not reproduce the unit integral");
    }
};

inline std::shared_ptr<const RadialGrid> make_grid(int n_r = 33, int k_intervals = 8,
                                                   int k_pts = 2, double ratio = 2.0,
                                                   double measure_const = 1.0) {
    auto g = std::make_shared<RadialGrid>();
    g->r_nodes = cheb::lobatto_nodes(n_r);
    g->r_bary = cheb::lobatto_bary_weights(n_r);
    g->r_diff = cheb::diff_matrix(g->r_nodes, g->r_bary);
    auto rule = quad::graded_gauss(k_intervals, k_pts, ratio);
    g->k_nodes = rule.nodes;
    g->k_weights = rule.weights;
    g->measure_const = measure_const;
    g->validate();
    return g;
}

}  // namespace rgflow
