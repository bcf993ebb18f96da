// Truncated bosonic Fock space over the quadrature modes: the
// exact-diagonalization oracle and the matrix backend for vacuum
// expectations and Feshbach reductions.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include "rgflow/cutoff.hpp"
#include "rgflow/kernel_sequence.hpp"

namespace rgflow {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using SparseMat = Eigen::SparseMatrix<cplx>;

struct DiscreteFockSpace {
    std::shared_ptr<const RadialGrid> grid;
    int n_modes = 0;
    int n_ph_max = 0;
    std::vector<std::vector<uint8_t>> basis;  // occupation vectors; basis[0] = vacuum
    std::vector<double> energy;               // H_f eigenvalue per basis state
    std::map<std::vector<uint8_t>, int> index;

    int dim() const { return int(basis.size()); }

    int lookup(const std::vector<uint8_t>& occ) const {
        auto it = index.find(occ);
        return it == index.end() ? -1 : it->second;
    }
};

inline DiscreteFockSpace make_fock_space(std::shared_ptr<const RadialGrid> grid, int n_ph_max,
                                         int n_modes = -1) {
    DiscreteFockSpace sp;
    sp.grid = std::move(grid);
    sp.n_modes = n_modes < 0 ? sp.grid->nk() : n_modes;
    if (sp.n_modes > sp.grid->nk()) throw std::invalid_argument("n_modes exceeds k grid");
    sp.n_ph_max = n_ph_max;
    // enumerate occupation vectors ordered by total photon number, vacuum first
    std::vector<uint8_t> occ(sp.n_modes, 0);
    for (int total = 0; total <= n_ph_max; ++total) {
        std::function<void(int, int)> rec2 = [&](int mode, int left) {
            if (mode == sp.n_modes) {
                if (left == 0) sp.basis.push_back(occ);
                return;
            }
            for (int c = 0; c <= left; ++c) {
                occ[mode] = uint8_t(c);
                rec2(mode + 1, left - c);
            }
            occ[mode] = 0;
        };
        rec2(0, total);
    }
    sp.energy.resize(sp.basis.size());
    for (size_t i = 0; i < sp.basis.size(); ++i) {
        double e = 0.0;
        for (int m = 0; m < sp.n_modes; ++m) e += sp.basis[i][m] * sp.grid->k_nodes[m];
        sp.energy[i] = e;
        sp.index[sp.basis[i]] = int(i);
    }
    return sp;
}

struct FockOperator {
    MatrixXcd mat;
    const DiscreteFockSpace* space = nullptr;
};

// a*(mode): states pushed above the photon cap are annihilated (truncation).
inline FockOperator creation(const DiscreteFockSpace& sp, int mode) {
    if (mode < 0 || mode >= sp.n_modes) throw std::invalid_argument("creation: mode out of range");
    FockOperator op{MatrixXcd::Zero(sp.dim(), sp.dim()), &sp};
    for (int s = 0; s < sp.dim(); ++s) {
        auto occ = sp.basis[s];
        occ[mode]++;
        int t = sp.lookup(occ);
        if (t >= 0) op.mat(t, s) = std::sqrt(double(occ[mode]));
    }
    return op;
}

inline FockOperator annihilation(const DiscreteFockSpace& sp, int mode) {
    if (mode < 0 || mode >= sp.n_modes)
        throw std::invalid_argument("annihilation: mode out of range");
    FockOperator op{MatrixXcd::Zero(sp.dim(), sp.dim()), &sp};
    for (int s = 0; s < sp.dim(); ++s) {
        if (sp.basis[s][mode] == 0) continue;
        auto occ = sp.basis[s];
        double amp = std::sqrt(double(occ[mode]));
        occ[mode]--;
        int t = sp.lookup(occ);
        if (t >= 0) op.mat(t, s) = amp;
    }
    return op;
}

inline FockOperator free_field(const DiscreteFockSpace& sp) {
    FockOperator op{MatrixXcd::Zero(sp.dim(), sp.dim()), &sp};
    for (int s = 0; s < sp.dim(); ++s) op.mat(s, s) = sp.energy[s];
    return op;
}

// Largest singular value by power iteration on A^H A.
inline double operator_norm(const MatrixXcd& a, int iters = 60, unsigned seed = 12345) {
    if (a.rows() == 0) return 0.0;
    std::mt19937 rng(seed);
    std::normal_distribution<double> nd;
    VectorXcd v(a.cols());
    for (int i = 0; i < a.cols(); ++i) v[i] = cplx(nd(rng), nd(rng));
    v.normalize();
    double s = 0.0;
    for (int it = 0; it < iters; ++it) {
        VectorXcd w = a.adjoint() * (a * v);
        double nw = w.norm();
        if (nw == 0.0) return 0.0;
        v = w / nw;
        s = std::sqrt(nw);
    }
    return s;
}

// || f(H_f) a*(mode) - a*(mode) f(H_f + omega) || on the photon-capped domain.
inline double pull_through_check(const DiscreteFockSpace& sp,
                                 const std::function<double(double)>& f, int mode) {
    double omega = sp.grid->k_nodes[mode];
    FockOperator ad = creation(sp, mode);
    MatrixXcd lhs = MatrixXcd::Zero(sp.dim(), sp.dim());
    MatrixXcd rhs = MatrixXcd::Zero(sp.dim(), sp.dim());
    for (int s = 0; s < sp.dim(); ++s) {
        // domain restricted to occupation <= cap - 1 so a* never truncates
        int total = 0;
        for (int m = 0; m < sp.n_modes; ++m) total += sp.basis[s][m];
        if (total >= sp.n_ph_max) continue;
        for (int t = 0; t < sp.dim(); ++t) {
            if (ad.mat(t, s) == cplx{}) continue;
            lhs(t, s) = f(sp.energy[t]) * ad.mat(t, s);
            rhs(t, s) = ad.mat(t, s) * f(sp.energy[s] + omega);
        }
    }
    return operator_norm(lhs - rhs);
}

namespace detail {

// Enumerate ordered tuples of `len` mode indices, invoking fn(tuple).
template <class Fn>
void ordered_tuples(int n_modes, int len, Fn&& fn) {
    std::vector<int> t(len, 0);
    if (len == 0) {
        fn(t);
        return;
    }
    while (true) {
        fn(t);
        int p = len - 1;
        while (p >= 0 && t[p] == n_modes - 1) t[p--] = 0;
        if (p < 0) break;
        t[p]++;
    }
}

}  // namespace detail

// P_red int dmu/|K|^(1/2) a*(K^m) w(H_f; K) a(K~^n) P_red as a dense matrix.
// The quadrature form: each ladder slot carries slot_weight(i) on normalized
// mode operators; w is evaluated at the field energy between the annihilation
// and creation strings.  With p_red = false the reducing cutoffs are omitted
// (the form used by the bare interaction terms).
inline MatrixXcd assemble_sector(const Kernel& w, const DiscreteFockSpace& sp, bool p_red = true,
                                 double red_cut = 1.0) {
    const auto& g = *sp.grid;
    const int m = w.m(), n = w.n();
    MatrixXcd h = MatrixXcd::Zero(sp.dim(), sp.dim());
    std::vector<int> combo(m + n);
    detail::ordered_tuples(sp.n_modes, n, [&](const std::vector<int>& js) {
        double wj = 1.0;
        for (int j : js) wj *= g.slot_weight(j);
        for (int s = 0; s < sp.dim(); ++s) {
            if (p_red && sp.energy[s] > red_cut + 1e-12) continue;
            // annihilate js in order
            auto occ = sp.basis[s];
            double amp = wj;
            bool dead = false;
            for (int j : js) {
                if (occ[j] == 0) {
                    dead = true;
                    break;
                }
                amp *= std::sqrt(double(occ[j]));
                occ[j]--;
            }
            if (dead) continue;
            double e_mid = sp.energy[s];
            for (int j : js) e_mid -= g.k_nodes[j];
            detail::ordered_tuples(sp.n_modes, m, [&](const std::vector<int>& is) {
                auto occ2 = occ;
                double amp2 = amp;
                for (int i : is) {
                    occ2[i]++;
                    amp2 *= std::sqrt(double(occ2[i])) * g.slot_weight(i);
                }
                int t = sp.lookup(occ2);
                if (t < 0) return;  // photon cap
                if (p_red && sp.energy[t] > red_cut + 1e-12) return;
                for (int a = 0; a < m; ++a) combo[a] = is[a];
                for (int a = 0; a < n; ++a) combo[m + a] = js[a];
                h(t, s) += amp2 * w.eval_r(e_mid, w.combo_index(combo));
            });
        }
    });
    return h;
}

// H(w) = w00(H_f) + sum_{m+n>=1} H_{m,n}, restricted to the H_f <= 1 range.
inline MatrixXcd assemble_H(const KernelSequence& w, const DiscreteFockSpace& sp) {
    MatrixXcd h = MatrixXcd::Zero(sp.dim(), sp.dim());
    for (int s = 0; s < sp.dim(); ++s) {
        if (sp.energy[s] > 1.0 + 1e-12) continue;
        h(s, s) = sp.energy[s] - w.z() + w.u00_at(sp.energy[s]);
    }
    for (const auto& [mn, k] : w.sectors()) h += assemble_sector(k, sp, true);
    return h;
}

// Diagonal of chi_rho(H_f) / chibar_rho(H_f) over the basis.
inline VectorXd chi_rho_diag(const DiscreteFockSpace& sp, double rho) {
    VectorXd d(sp.dim());
    for (int s = 0; s < sp.dim(); ++s) d[s] = chi_rho(sp.energy[s], rho);
    return d;
}
inline VectorXd chibar_rho_diag(const DiscreteFockSpace& sp, double rho) {
    VectorXd d(sp.dim());
    for (int s = 0; s < sp.dim(); ++s) d[s] = chibar_rho(sp.energy[s], rho);
    return d;
}

// Quadrature analogue of the form bound norm: the squared norm sums the
// per-slot quadrature weights against sup_r |w|^2 times the telescoping
// (r + partial momentum sum) factors.
inline double sharp_form_norm(const Kernel& w, int oversample = 4) {
    const auto& g = w.grid();
    const int m = w.m(), n = w.n();
    const int nfine = oversample * (g.nr() - 1) + 1;
    double total = 0.0;
    std::vector<int> idx;
    std::vector<cplx> fv(g.nr());
    for (size_t kc = 0; kc < w.k_combos(); ++kc) {
        w.decode_combo(kc, idx);
        double wq = 1.0;
        for (int s = 0; s < m + n; ++s)
            wq *= g.k_weights[idx[s]] * g.measure_const * g.measure_const;
        for (int j = 0; j < g.nr(); ++j) fv[j] = w.at(j, kc);
        double sup = 0.0;
        for (int i = 0; i < nfine; ++i) {
            double r = double(i) / double(nfine - 1);
            double v = std::norm(cheb::bary_eval(g.r_nodes, g.r_bary, fv, r));
            double fac = 1.0, acc = 0.0;
            for (int s = 0; s < m; ++s) {
                acc += g.k_nodes[idx[s]];
                fac *= r + acc;
            }
            acc = 0.0;
            for (int s = 0; s < n; ++s) {
                acc += g.k_nodes[idx[m + s]];
                fac *= r + acc;
            }
            sup = std::max(sup, v * fac);
        }
        total += wq * sup;
    }
    return std::sqrt(total);
}

// sum_i k_i || (H_f + k_i)^(-1/2) a_i phi ||^2 = || (1 - P_Omega) phi ||^2,
// exact on the truncated space.  Returns |lhs - rhs|.
inline double ladder_resolvent_identity_deviation(const DiscreteFockSpace& sp,
                                                  const VectorXcd& phi) {
    double lhs = 0.0;
    for (int i = 0; i < sp.n_modes; ++i) {
        double ki = sp.grid->k_nodes[i];
        for (int s = 0; s < sp.dim(); ++s) {
            if (sp.basis[s][i] == 0 || phi[s] == cplx{}) continue;
            double amp2 = double(sp.basis[s][i]) * std::norm(phi[s]);
            lhs += ki * amp2 / sp.energy[s];
        }
    }
    double rhs = phi.squaredNorm() - std::norm(phi[0]);
    return std::abs(lhs - rhs);
}

struct EigenPair {
    double energy = 0.0;
    long double energy_refined = 0.0L;
    VectorXcd vector;
    double residual = 0.0;
    int iterations = 0;
};

// Lowest eigenpair of a Hermitian operator by Lanczos with full
// reorthogonalization, followed by an extended-precision Rayleigh quotient.
inline EigenPair lowest_eigenpair(const std::function<VectorXcd(const VectorXcd&)>& apply, int dim,
                                  int max_iter = 600, double tol = 1e-13, unsigned seed = 2024,
                                  const VectorXcd* start = nullptr) {
    max_iter = std::min(max_iter, dim);
    std::mt19937 rng(seed);
    std::normal_distribution<double> nd;
    VectorXcd v(dim);
    if (start && start->size() == dim)
        v = *start;
    else
        for (int i = 0; i < dim; ++i) v[i] = cplx(nd(rng), nd(rng));
    v.normalize();

    std::vector<VectorXcd> basis;
    std::vector<double> alpha, beta;
    basis.push_back(v);
    VectorXcd w;
    EigenPair out;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    for (int it = 0; it < max_iter; ++it) {
        w = apply(basis.back());
        double a = std::real(basis.back().dot(w));
        alpha.push_back(a);
        w -= a * basis.back();
        if (it > 0) w -= beta.back() * basis[basis.size() - 2];
        // full reorthogonalization, twice
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& b : basis) w -= b.dot(w) * b;
        double nb = w.norm();
        int k = int(alpha.size());
        // tridiagonal Ritz problem
        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, k);
        for (int i = 0; i < k; ++i) {
            t(i, i) = alpha[i];
            if (i + 1 < k) t(i, i + 1) = t(i + 1, i) = beta[i];
        }
        es.compute(t);
        double theta = es.eigenvalues()(0);
        double resid_est = (k > 0 && nb > 0) ? std::abs(nb * es.eigenvectors()(k - 1, 0)) : 0.0;
        out.iterations = it + 1;
        if (resid_est < tol || nb < 1e-300 || it == max_iter - 1) {
            VectorXcd x = VectorXcd::Zero(dim);
            for (int i = 0; i < k; ++i) x += es.eigenvectors()(i, 0) * basis[i];
            x.normalize();
            out.vector = x;
            out.energy = theta;
            break;
        }
        beta.push_back(nb);
        basis.push_back(w / nb);
    }
    // extended-precision Rayleigh quotient of the converged vector
    VectorXcd hx = apply(out.vector);
    long double num = 0.0L, den = 0.0L;
    for (int i = 0; i < dim; ++i) {
        num += (long double)(std::real(std::conj(out.vector[i]) * hx[i]));
        den += (long double)(std::norm(out.vector[i]));
    }
    out.energy_refined = num / den;
    out.residual = (hx - out.energy * out.vector).norm();
    out.energy = double(out.energy_refined);
    out.residual = (hx - out.energy * out.vector).norm();
    return out;
}

// Lowest eigenpair of a dense Hermitian matrix; asserts hermiticity first.
inline EigenPair exact_ground_state(const MatrixXcd& h, double herm_tol = 1e-10,
                                    int max_iter = 800, double tol = 1e-13,
                                    unsigned seed = 2024) {
    double dev = operator_norm(MatrixXcd(h - h.adjoint()), 30);
    if (dev > herm_tol * std::max(1.0, operator_norm(h, 30)))
        throw std::runtime_error("exact_ground_state: operator is not self-adjoint");
    auto apply = [&](const VectorXcd& x) { return VectorXcd(h * x); };
    return lowest_eigenpair(apply, int(h.rows()), max_iter, tol, seed);
}

}  // namespace rgflow
