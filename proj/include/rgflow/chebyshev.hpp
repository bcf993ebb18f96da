// Chebyshev–Lobatto grids on [0,1]: nodes, barycentric interpolation,
// spectral differentiation.

#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace rgflow::cheb {

// Lobatto nodes on [0,1], ascending, endpoints included.
inline std::vector<double> lobatto_nodes(int n) {
    if (n < 2) throw std::invalid_argument("lobatto_nodes: need n >= 2");
    std::vector<double> x(n);
    for (int j = 0; j < n; ++j)
        x[j] = 0.5 * (1.0 - std::cos(M_PI * double(j) / double(n - 1)));
    x.front() = 0.0;
    x.back() = 1.0;
    return x;
}

// Barycentric weights for the Lobatto family: (-1)^j, halved at the ends.
inline std::vector<double> lobatto_bary_weights(int n) {
    std::vector<double> w(n);
    for (int j = 0; j < n; ++j) w[j] = (j % 2 == 0) ? 1.0 : -1.0;
    w.front() *= 0.5;
    w.back() *= 0.5;
    return w;
}

template <class T>
T bary_eval(const std::vector<double>& x, const std::vector<double>& w,
            const std::vector<T>& f, double t) {
    const int n = int(x.size());
    T num{};
    double den = 0.0;
    for (int j = 0; j < n; ++j) {
        double d = t - x[j];
        if (std::abs(d) < 1e-300) return f[j];
        double c = w[j] / d;
        num += c * f[j];
        den += c;
    }
    return num / den;
}

// Differentiation matrix D on the Lobatto nodes: (Df)_i = f'(x_i).
inline std::vector<double> diff_matrix(const std::vector<double>& x,
                                       const std::vector<double>& w) {
    const int n = int(x.size());
    std::vector<double> d(size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        double row = 0.0;
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            double v = (w[j] / w[i]) / (x[i] - x[j]);
            d[size_t(i) * n + j] = v;
            row += v;
        }
        d[size_t(i) * n + i] = -row;  // negative sum trick
    }
    return d;
}

template <class T>
std::vector<T> apply_diff(const std::vector<double>& d, const std::vector<T>& f) {
    const int n = int(f.size());
    std::vector<T> out(n, T{});
    for (int i = 0; i < n; ++i) {
        T acc{};
        const double* row = &d[size_t(i) * n];
        for (int j = 0; j < n; ++j) acc += row[j] * f[j];
        out[i] = acc;
    }
    return out;
}

}  // namespace rgflow::cheb
