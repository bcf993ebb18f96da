// Matrix-level smooth Feshbach map: pair conditions, the map itself, and the
// auxiliary operator Q that transports kernels back.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rgflow/fock.hpp"

namespace rgflow {

struct FeshbachPair {
    MatrixXcd h;
    MatrixXcd t;
    VectorXd chi;     // diagonal smooth cutoff
    VectorXd chibar;  // Pythagorean complement, chi^2 + chibar^2 = 1
    MatrixXcd w;      // h - t, cached

    FeshbachPair(MatrixXcd h_, MatrixXcd t_, VectorXd chi_, VectorXd chibar_)
        : h(std::move(h_)), t(std::move(t_)), chi(std::move(chi_)), chibar(std::move(chibar_)) {
        w = h - t;
        for (int i = 0; i < chi.size(); ++i) {
            double d = chi[i] * chi[i] + chibar[i] * chibar[i] - 1.0;
            if (std::abs(d) > 1e-12)
                throw std::invalid_argument("FeshbachPair: chi^2 + chibar^2 != 1");
        }
    }

    std::vector<int> ran_chibar(double tol = 1e-14) const {
        std::vector<int> idx;
        for (int i = 0; i < chibar.size(); ++i)
            if (std::abs(chibar[i]) > tol) idx.push_back(i);
        return idx;
    }
};

struct PairReport {
    double comm_chi_t = 0.0;       // ||chi T - T chi||
    double comm_chibar_t = 0.0;
    double t_min_sv = 0.0;         // smallest singular value of T on Ran chibar
    double neumann_left = 0.0;     // ||T^-1 chibar W chibar||
    double neumann_right = 0.0;    // ||chibar W T^-1 chibar||
    bool ok = false;
};

namespace detail {
inline MatrixXcd rows_cols(const MatrixXcd& a, const std::vector<int>& idx) {
    MatrixXcd s(idx.size(), idx.size());
    for (size_t i = 0; i < idx.size(); ++i)
        for (size_t j = 0; j < idx.size(); ++j) s(i, j) = a(idx[i], idx[j]);
    return s;
}
}  // namespace detail

// Verifies the sufficient pair conditions: commutation of the cutoffs with T,
// invertibility of T on Ran chibar, and the two Neumann norms below 1.
inline PairReport pair_conditions(const MatrixXcd& h, const MatrixXcd& t, const VectorXd& chi,
                                  const VectorXd& chibar) {
    FeshbachPair p(h, t, chi, chibar);
    PairReport rep;
    MatrixXcd chim = chi.cast<cplx>().asDiagonal();
    MatrixXcd chibm = chibar.cast<cplx>().asDiagonal();
    rep.comm_chi_t = operator_norm(MatrixXcd(chim * t - t * chim));
    rep.comm_chibar_t = operator_norm(MatrixXcd(chibm * t - t * chibm));
    auto idx = p.ran_chibar();
    if (idx.empty()) {
        rep.t_min_sv = 0.0;
        rep.ok = false;
        return rep;
    }
    MatrixXcd ts = detail::rows_cols(t, idx);
    Eigen::JacobiSVD<MatrixXcd> svd(ts);
    rep.t_min_sv = svd.singularValues().minCoeff();
    if (rep.t_min_sv <= 0.0) {
        rep.ok = false;
        return rep;
    }
    // restricted W sandwiched by chibar
    MatrixXcd wb = chibm * p.w * chibm;
    MatrixXcd wbs = detail::rows_cols(wb, idx);
    Eigen::PartialPivLU<MatrixXcd> lu(ts);
    rep.neumann_left = operator_norm(MatrixXcd(lu.solve(wbs)));
    rep.neumann_right = operator_norm(MatrixXcd(wbs * ts.inverse()));
    rep.ok = rep.comm_chi_t < 1e-12 && rep.comm_chibar_t < 1e-12 && rep.t_min_sv > 1e-14 &&
             rep.neumann_left < 1.0 && rep.neumann_right < 1.0;
    return rep;
}

// Solve H_chibar x = rhs on Ran chibar, extended by zero.  H_chibar = T +
// chibar W chibar restricted to the coordinate subspace where chibar != 0.
inline MatrixXcd restricted_inverse_apply(const FeshbachPair& p, const MatrixXcd& rhs,
                                          double cond_limit = 1e12) {
    auto idx = p.ran_chibar();
    MatrixXcd chibm = p.chibar.cast<cplx>().asDiagonal();
    MatrixXcd hbar = p.t + chibm * p.w * chibm;
    MatrixXcd hs = detail::rows_cols(hbar, idx);
    Eigen::JacobiSVD<MatrixXcd> svd(hs);
    double smin = svd.singularValues().minCoeff();
    double smax = svd.singularValues().maxCoeff();
    if (smin <= 0.0 || smax / smin > cond_limit)
        throw std::runtime_error("feshbach: H restricted to Ran chibar is numerically singular");
    MatrixXcd rs(idx.size(), rhs.cols());
    for (size_t i = 0; i < idx.size(); ++i) rs.row(i) = rhs.row(idx[i]);
    Eigen::PartialPivLU<MatrixXcd> lu(hs);
    MatrixXcd xs = lu.solve(rs);
    MatrixXcd x = MatrixXcd::Zero(rhs.rows(), rhs.cols());
    for (size_t i = 0; i < idx.size(); ++i) x.row(idx[i]) = xs.row(i);
    return x;
}

// F_chi(H,T) = T + chi W chi - chi W chibar (H_chibar)^-1 chibar W chi.
inline MatrixXcd feshbach_map(const FeshbachPair& p) {
    MatrixXcd chim = p.chi.cast<cplx>().asDiagonal();
    MatrixXcd chibm = p.chibar.cast<cplx>().asDiagonal();
    MatrixXcd wchi = p.w * chim;
    MatrixXcd rhs = chibm * wchi;
    MatrixXcd inv = restricted_inverse_apply(p, rhs);
    return p.t + chim * wchi - chim * p.w * chibm * inv;
}

// Q_chi = chi - chibar (H_chibar)^-1 chibar W chi.
inline MatrixXcd feshbach_Q(const FeshbachPair& p) {
    MatrixXcd chim = p.chi.cast<cplx>().asDiagonal();
    MatrixXcd chibm = p.chibar.cast<cplx>().asDiagonal();
    MatrixXcd rhs = chibm * (p.w * chim);
    MatrixXcd inv = restricted_inverse_apply(p, rhs);
    return chim - chibm * inv;
}

// Neumann evaluation of (H_chibar)^-1 rhs, valid when ||T^-1 chibar W chibar|| < 1.
inline MatrixXcd restricted_inverse_neumann(const FeshbachPair& p, const MatrixXcd& rhs,
                                            int max_terms = 200, double tol = 1e-14) {
    auto idx = p.ran_chibar();
    MatrixXcd chibm = p.chibar.cast<cplx>().asDiagonal();
    MatrixXcd wb = chibm * p.w * chibm;
    MatrixXcd ts = detail::rows_cols(p.t, idx);
    MatrixXcd wbs = detail::rows_cols(wb, idx);
    MatrixXcd rs(idx.size(), rhs.cols());
    for (size_t i = 0; i < idx.size(); ++i) rs.row(i) = rhs.row(idx[i]);
    Eigen::PartialPivLU<MatrixXcd> lu(ts);
    MatrixXcd term = lu.solve(rs);
    MatrixXcd acc = term;
    for (int n = 1; n < max_terms; ++n) {
        term = -lu.solve(MatrixXcd(wbs * term));
        acc += term;
        if (term.norm() < tol * std::max(1.0, acc.norm())) break;
    }
    MatrixXcd x = MatrixXcd::Zero(rhs.rows(), rhs.cols());
    for (size_t i = 0; i < idx.size(); ++i) x.row(idx[i]) = acc.row(i);
    return x;
}

// Numerical kernel dimension at a relative singular-value threshold.
inline int kernel_dimension(const MatrixXcd& a, double rel_threshold = 1e-8) {
    Eigen::JacobiSVD<MatrixXcd> svd(a);
    double scale = svd.singularValues().size() ? svd.singularValues().maxCoeff() : 0.0;
    if (scale == 0.0) return int(a.cols());
    int dim = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) < rel_threshold * scale) ++dim;
    return dim;
}

// Orthonormal basis of the numerical kernel.
inline MatrixXcd kernel_basis(const MatrixXcd& a, double rel_threshold = 1e-8) {
    Eigen::JacobiSVD<MatrixXcd> svd(a, Eigen::ComputeFullV);
    double scale = svd.singularValues().size() ? svd.singularValues().maxCoeff() : 0.0;
    int n = int(a.cols());
    int r = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (scale == 0.0 || svd.singularValues()(i) < rel_threshold * scale) ++r;
    return svd.matrixV().rightCols(r);
}

}  // namespace rgflow
