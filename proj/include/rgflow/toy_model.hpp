// The finite toy atom coupled to the discretized radial field.  The atom is a
// small Hermitian matrix with a simple lowest eigenvalue at 0 and spectral gap
// exactly 1; the interaction enters only through the quadratic Wick sectors
// (1,1), (2,0), (0,2), so the m+n = 1 sectors vanish identically.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>

#include "rgflow/fock.hpp"
#include "rgflow/kernel.hpp"

namespace rgflow {

struct ToyModel {
    int atom_dim = 2;
    Eigen::MatrixXcd h_at;               // diag(0, 1, ...) with gap exactly 1
    cplx g{0.05, 0.0};
    double beta = 0.0;
    double uv_cutoff = 1.0;              // Lambda <= 1 in scaled units
    double coupling_amp = 0.016;         // normalization a0 of the form factor
    bool beta_coupled = true;            // switch off the beta phase entirely

    ToyModel() {
        h_at = Eigen::MatrixXcd::Zero(2, 2);
        h_at(1, 1) = 1.0;
    }

    // c(k, beta) = a0 * kappa_Lambda(k) * k * exp(i beta k) / sqrt(2)
    cplx coupling(double k) const {
        if (k > uv_cutoff) return cplx{};
        double phase = beta_coupled ? beta * k : 0.0;
        return coupling_amp * k * std::exp(cplx(0.0, phase)) / std::sqrt(2.0);
    }

    void validate() const {
        if (h_at.rows() != atom_dim) throw std::invalid_argument("toy model: atom matrix size");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h_at);
        if (std::abs(es.eigenvalues()(0)) > 1e-14)
            throw std::invalid_argument("toy model: lowest atomic level must sit at 0");
        if (atom_dim > 1 && std::abs(es.eigenvalues()(1) - 1.0) > 1e-14)
            throw std::invalid_argument("toy model: atomic gap must be exactly 1");
    }
};

struct InteractionKernels {
    Kernel w11, w20, w02;  // all other m+n <= 2 components vanish
};

// The Wick-ordered interaction kernels of the toy model on the given grid.
// w20(k1,k2) = g^2 c(k1) c(k2), w11(k,k~) = 2 g^2 c(k) conj(c(k~)),
// w02(k~1,k~2) = conj( (conj g)^2 c(k~1) c(k~2) ); all r-independent.
inline InteractionKernels interaction_kernels(const ToyModel& model,
                                              std::shared_ptr<const RadialGrid> grid) {
    model.validate();
    InteractionKernels out{Kernel(1, 1, grid), Kernel(2, 0, grid), Kernel(0, 2, grid)};
    const cplx g2 = model.g * model.g;
    const cplx g2bar = std::conj(std::conj(model.g) * std::conj(model.g));
    out.w11.fill([&](double, const std::vector<double>& ks) {
        cplx v = 2.0 * g2 * model.coupling(ks[0]) * std::conj(model.coupling(ks[1]));
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw std::runtime_error("interaction kernel not finite on grid");
        return v;
    });
    out.w20.fill([&](double, const std::vector<double>& ks) {
        return g2 * model.coupling(ks[0]) * model.coupling(ks[1]);
    });
    out.w02.fill([&](double, const std::vector<double>& ks) {
        return g2bar * std::conj(model.coupling(ks[0])) * std::conj(model.coupling(ks[1]));
    });
    return out;
}

// Dense toy Hamiltonian H_at x 1 + 1 x H_f + W on the atom (x) Fock space.
// Index convention: global = atom * fock_dim + fock.
inline MatrixXcd assemble_toy_hamiltonian(const ToyModel& model, const DiscreteFockSpace& sp) {
    auto grid = sp.grid;
    InteractionKernels ik = interaction_kernels(model, grid);
    const int nf = sp.dim();
    MatrixXcd wf = assemble_sector(ik.w11, sp, false) + assemble_sector(ik.w20, sp, false) +
                   assemble_sector(ik.w02, sp, false);
    const int dim = model.atom_dim * nf;
    MatrixXcd h = MatrixXcd::Zero(dim, dim);
    for (int a = 0; a < model.atom_dim; ++a)
        for (int b = 0; b < model.atom_dim; ++b) {
            if (model.h_at(a, b) == cplx{} && a != b) continue;
            for (int s = 0; s < nf; ++s) {
                if (a == b) {
                    h(a * nf + s, a * nf + s) += model.h_at(a, a) + sp.energy[s];
                } else {
                    h(a * nf + s, b * nf + s) += model.h_at(a, b);
                }
            }
        }
    for (int a = 0; a < model.atom_dim; ++a)
        h.block(a * nf, a * nf, nf, nf) += wf;  // coupling is scalar on the atom
    return h;
}

// Sparse variant for larger photon caps (cap-sensitivity studies).
inline SparseMat assemble_toy_hamiltonian_sparse(const ToyModel& model,
                                                 const DiscreteFockSpace& sp) {
    MatrixXcd dense_small;  // reuse the dense sector assembler on the field factor
    auto grid = sp.grid;
    InteractionKernels ik = interaction_kernels(model, grid);
    const int nf = sp.dim();
    std::vector<Eigen::Triplet<cplx>> trip;
    auto add_sector = [&](const Kernel& w) {
        const auto& g = *grid;
        const int m = w.m(), n = w.n();
        std::vector<int> combo(m + n);
        detail::ordered_tuples(sp.n_modes, n, [&](const std::vector<int>& js) {
            double wj = 1.0;
            for (int j : js) wj *= g.slot_weight(j);
            for (int s = 0; s < nf; ++s) {
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
                    if (t < 0) return;
                    for (int a = 0; a < m; ++a) combo[a] = is[a];
                    for (int a = 0; a < n; ++a) combo[m + a] = js[a];
                    cplx v = amp2 * w.eval_r(e_mid, w.combo_index(combo));
                    if (v != cplx{})
                        for (int at = 0; at < model.atom_dim; ++at)
                            trip.emplace_back(at * nf + t, at * nf + s, v);
                });
            }
        });
    };
    add_sector(ik.w11);
    add_sector(ik.w20);
    add_sector(ik.w02);
    for (int a = 0; a < model.atom_dim; ++a)
        for (int s = 0; s < nf; ++s)
            trip.emplace_back(a * nf + s, a * nf + s, model.h_at(a, a) + sp.energy[s]);
    for (int a = 0; a < model.atom_dim; ++a)
        for (int b = 0; b < model.atom_dim; ++b)
            if (a != b && model.h_at(a, b) != cplx{})
                for (int s = 0; s < nf; ++s)
                    trip.emplace_back(a * nf + s, b * nf + s, model.h_at(a, b));
    SparseMat h(model.atom_dim * nf, model.atom_dim * nf);
    h.setFromTriplets(trip.begin(), trip.end());
    return h;
}

// Diagonals of chi^(I) = P_at x chi1(H_f) and its Pythagorean complement on
// the atom (x) Fock basis (atom level 0 is the ground level by construction).
inline VectorXd chi_initial_diag(const ToyModel& model, const DiscreteFockSpace& sp) {
    VectorXd d(model.atom_dim * sp.dim());
    for (int a = 0; a < model.atom_dim; ++a)
        for (int s = 0; s < sp.dim(); ++s)
            d[a * sp.dim() + s] = (a == 0) ? chi1(sp.energy[s]) : 0.0;
    return d;
}
inline VectorXd chibar_initial_diag(const ToyModel& model, const DiscreteFockSpace& sp) {
    VectorXd d(model.atom_dim * sp.dim());
    for (int a = 0; a < model.atom_dim; ++a)
        for (int s = 0; s < sp.dim(); ++s)
            d[a * sp.dim() + s] = (a == 0) ? chibar1(sp.energy[s]) : 1.0;
    return d;
}

}  // namespace rgflow
