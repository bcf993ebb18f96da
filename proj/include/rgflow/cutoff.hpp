// Smooth partition of unity used by every Feshbach reduction:
//   chi1^2 + chibar1^2 = 1,  chi1 = 1 on [0, 3/4),  supp chi1 in [0, 1].
// Concretely chi1(x) = cos(pi/2 * s(4(x - 3/4))) with s a C^inf smoothstep.

#pragma once

#include <cmath>

namespace rgflow {

inline double smoothstep_cinf(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    double a = std::exp(-1.0 / t);
    double b = std::exp(-1.0 / (1.0 - t));
    return a / (a + b);
}

inline double smoothstep_cinf_deriv(double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    double a = std::exp(-1.0 / t);
    double b = std::exp(-1.0 / (1.0 - t));
    double s = a / (a + b);
    // d/dt log(a/b) = 1/t^2 + 1/(1-t)^2
    return s * (1.0 - s) * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t)));
}

inline double chi1(double x) {
    double t = 4.0 * (x - 0.75);
    if (t <= 0.0) return 1.0;
    if (t >= 1.0) return 0.0;
    return std::cos(0.5 * M_PI * smoothstep_cinf(t));
}

inline double chibar1(double x) {
    double t = 4.0 * (x - 0.75);
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return std::sin(0.5 * M_PI * smoothstep_cinf(t));
}

inline double chi1_deriv(double x) {
    double t = 4.0 * (x - 0.75);
    return -std::sin(0.5 * M_PI * smoothstep_cinf(t)) * 0.5 * M_PI *
           smoothstep_cinf_deriv(t) * 4.0;
}

inline double chibar1_deriv(double x) {
    double t = 4.0 * (x - 0.75);
    return std::cos(0.5 * M_PI * smoothstep_cinf(t)) * 0.5 * M_PI *
           smoothstep_cinf_deriv(t) * 4.0;
}

inline double chi_rho(double x, double rho) { return chi1(x / rho); }
inline double chibar_rho(double x, double rho) { return chibar1(x / rho); }

}  // namespace rgflow
