// Composite Gauss–Legendre rule on a geometrically graded partition of (0,1].
// The grading resolves integrands that are singular (but integrable) at k = 0.

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace rgflow::quad {

struct Rule {
    std::vector<double> nodes;    // ascending, strictly inside (0,1]
    std::vector<double> weights;  // positive, sum = 1
};

// Gauss–Legendre nodes/weights on [-1,1] by Newton on Legendre polynomials.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double p0 = 0, p1 = 0;
        for (int it = 0; it < 100; ++it) {
            p0 = 1.0;
            p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) * t * p1 - j * p2) / (j + 1);
            }
            double dp = n * (t * p0 - p1) / (t * t - 1.0);
            double dt = p0 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        p0 = 1.0;
        p1 = 0.0;
        for (int j = 0; j < n; ++j) {
            double p2 = p1;
            p1 = p0;
            p0 = ((2 * j + 1) * t * p1 - j * p2) / (j + 1);
        }
        double dp = n * (t * p0 - p1) / (t * t - 1.0);
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = w[n - 1 - i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
}

// n_intervals subintervals with geometric breakpoints ratio^-j; the innermost
// one is (0, ratio^-(n_intervals-1)] so the union is exactly (0,1].
inline Rule graded_gauss(int n_intervals, int pts_per_interval, double ratio = 2.0) {
    if (n_intervals < 1 || pts_per_interval < 1)
        throw std::invalid_argument("graded_gauss: bad sizes");
    std::vector<double> gx, gw;
    gauss_legendre(pts_per_interval, gx, gw);
    Rule r;
    for (int j = n_intervals - 1; j >= 0; --j) {
        double hi = std::pow(ratio, -double(j));
        double lo = (j == n_intervals - 1) ? 0.0 : std::pow(ratio, -double(j + 1));
        for (int i = 0; i < pts_per_interval; ++i) {
            r.nodes.push_back(0.5 * (hi - lo) * gx[i] + 0.5 * (hi + lo));
            r.weights.push_back(0.5 * (hi - lo) * gw[i]);
        }
    }
    return r;
}

}  // namespace rgflow::quad
