// Integral kernels w_{m,n}(r; K) on the tensor grid r_nodes x k_nodes^{m+n},
// carrying a spectral d/dr representation.  The first m momentum slots are
// creation slots, the last n are annihilation slots.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "rgflow/grid.hpp"

namespace rgflow {

using cplx = std::complex<double>;

class Kernel {
  public:
    Kernel() = default;
    Kernel(int m, int n, std::shared_ptr<const RadialGrid> grid)
        : m_(m), n_(n), grid_(std::move(grid)) {
        if (m_ < 0 || n_ < 0) throw std::invalid_argument("Kernel: negative arity");
        nk_combo_ = 1;
        for (int s = 0; s < m_ + n_; ++s) nk_combo_ *= grid_->nk();
        values_.assign(size_t(grid_->nr()) * nk_combo_, cplx{});
        dr_.assign(values_.size(), cplx{});
    }

    int m() const { return m_; }
    int n() const { return n_; }
    int slots() const { return m_ + n_; }
    const RadialGrid& grid() const { return *grid_; }
    std::shared_ptr<const RadialGrid> grid_ptr() const { return grid_; }
    size_t k_combos() const { return nk_combo_; }

    cplx& at(int ir, size_t kc) { return values_[size_t(ir) * nk_combo_ + kc]; }
    const cplx& at(int ir, size_t kc) const { return values_[size_t(ir) * nk_combo_ + kc]; }
    cplx& dr_at(int ir, size_t kc) { return dr_[size_t(ir) * nk_combo_ + kc]; }
    const cplx& dr_at(int ir, size_t kc) const { return dr_[size_t(ir) * nk_combo_ + kc]; }

    const std::vector<cplx>& values() const { return values_; }
    std::vector<cplx>& values() { return values_; }
    const std::vector<cplx>& dr_values() const { return dr_; }

    size_t combo_index(const std::vector<int>& ks) const {
        size_t c = 0;
        for (int s : ks) c = c * grid_->nk() + size_t(s);
        return c;
    }
    void decode_combo(size_t combo, std::vector<int>& ks) const {
        ks.assign(slots(), 0);
        for (int s = slots() - 1; s >= 0; --s) {
            ks[s] = int(combo % grid_->nk());
            combo /= grid_->nk();
        }
    }

    // Refresh the spectral derivative from the stored values.
    void update_dr() {
        const int nr = grid_->nr();
        const auto& d = grid_->r_diff;
        for (size_t kc = 0; kc < nk_combo_; ++kc) {
            for (int i = 0; i < nr; ++i) {
                cplx acc{};
                const double* row = &d[size_t(i) * nr];
                for (int j = 0; j < nr; ++j) acc += row[j] * values_[size_t(j) * nk_combo_ + kc];
                dr_[size_t(i) * nk_combo_ + kc] = acc;
            }
        }
        double scale = 0.0, dev = 0.0;
        for (size_t kc = 0; kc < nk_combo_; ++kc)
            for (int i = 0; i < nr; ++i) {
                scale = std::max(scale, std::abs(values_[size_t(i) * nk_combo_ + kc]));
                dev = std::max(dev, std::abs(values_[size_t(i) * nk_combo_ + kc] - values_[kc]));
            }
        r_uniform_ = dev <= 1e-14 * std::max(scale, 1e-300);
    }

    // No dependence on the field-energy slot at all (bare momentum kernels).
    bool r_uniform() const { return r_uniform_; }

    void fill(const std::function<cplx(double r, const std::vector<double>& ks)>& f) {
        std::vector<int> idx;
        std::vector<double> ks(slots());
        for (size_t kc = 0; kc < nk_combo_; ++kc) {
            decode_combo(kc, idx);
            for (int s = 0; s < slots(); ++s) ks[s] = grid_->k_nodes[idx[s]];
            for (int ir = 0; ir < grid_->nr(); ++ir)
                at(ir, kc) = f(grid_->r_nodes[ir], ks);
        }
        update_dr();
    }

    // Barycentric evaluation in r at a grid k-combo.  Beyond r = 1 the value
    // is the constant for kernels without field-energy dependence, and 0 for
    // the rest (support condition); barycentric extrapolation far outside the
    // node interval would be numerically meaningless.
    cplx eval_r(double r, size_t kc) const {
        if (r_uniform_) return at(0, kc);
        if (r > 1.0 + 1e-12) return cplx{};
        if (r > 1.0) r = 1.0;
        if (r < 0.0) r = 0.0;
        const int nr = grid_->nr();
        cplx num{};
        double den = 0.0;
        for (int j = 0; j < nr; ++j) {
            double d = r - grid_->r_nodes[j];
            if (std::abs(d) < 1e-300) return at(j, kc);
            double c = grid_->r_bary[j] / d;
            num += c * at(j, kc);
            den += c;
        }
        return num / den;
    }

    Kernel& operator*=(cplx s) {
        for (auto& v : values_) v *= s;
        for (auto& v : dr_) v *= s;
        return *this;
    }
    Kernel& operator+=(const Kernel& o) {
        if (o.values_.size() != values_.size()) throw std::invalid_argument("Kernel +=: shape mismatch");
        for (size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
        for (size_t i = 0; i < dr_.size(); ++i) dr_[i] += o.dr_[i];
        return *this;
    }

  private:
    int m_ = 0, n_ = 0;
    std::shared_ptr<const RadialGrid> grid_;
    size_t nk_combo_ = 1;
    bool r_uniform_ = true;
    std::vector<cplx> values_;
    std::vector<cplx> dr_;
};

namespace detail {
inline std::vector<std::vector<int>> permutations_of(int n) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    std::vector<std::vector<int>> out;
    do out.push_back(p);
    while (std::next_permutation(p.begin(), p.end()));
    return out;
}
}  // namespace detail

// Average over S_m x S_n acting on the creation and annihilation slots.
inline Kernel symmetrize(const Kernel& w) {
    const int m = w.m(), n = w.n();
    if (m + n <= 1) return w;
    Kernel out(m, n, w.grid_ptr());
    auto pm = detail::permutations_of(m);
    auto pn = detail::permutations_of(n);
    const double norm = 1.0 / double(pm.size() * pn.size());
    const int nr = w.grid().nr();
    std::vector<int> idx, pidx(m + n);
    for (size_t kc = 0; kc < w.k_combos(); ++kc) {
        w.decode_combo(kc, idx);
        for (const auto& a : pm)
            for (const auto& b : pn) {
                for (int s = 0; s < m; ++s) pidx[s] = idx[a[s]];
                for (int s = 0; s < n; ++s) pidx[m + s] = idx[m + b[s]];
                size_t pc = out.combo_index(pidx);
                for (int ir = 0; ir < nr; ++ir) out.at(ir, kc) += norm * w.at(ir, pc);
            }
    }
    out.update_dr();
    return out;
}

// sup_r |w| + sup_r |dw/dr| per k-combo (10x oversampled in r), max over k.
inline double sharp_norm(const Kernel& w, int oversample = 10) {
    const auto& g = w.grid();
    const int nr = g.nr();
    const int nfine = oversample * (nr - 1) + 1;
    double best = 0.0;
    std::vector<cplx> fv(nr), fd(nr);
    for (size_t kc = 0; kc < w.k_combos(); ++kc) {
        for (int j = 0; j < nr; ++j) {
            fv[j] = w.at(j, kc);
            fd[j] = w.dr_at(j, kc);
        }
        double sup_v = 0.0, sup_d = 0.0;
        for (int i = 0; i < nfine; ++i) {
            double r = double(i) / double(nfine - 1);
            sup_v = std::max(sup_v, std::abs(cheb::bary_eval(g.r_nodes, g.r_bary, fv, r)));
            sup_d = std::max(sup_d, std::abs(cheb::bary_eval(g.r_nodes, g.r_bary, fd, r)));
        }
        best = std::max(best, sup_v + sup_d);
    }
    return best;
}

// Zero the kernel outside Q_{m,n} = { r <= 1 - max(sum of creation |k|,
// sum of annihilation |k|) }.  Idempotent; never increases the sharp norm.
inline Kernel project_support(const Kernel& w, double tol = 1e-14) {
    if (w.slots() == 0) return w;
    Kernel out = w;
    const auto& g = w.grid();
    std::vector<int> idx;
    for (size_t kc = 0; kc < w.k_combos(); ++kc) {
        w.decode_combo(kc, idx);
        double sc = 0.0, sa = 0.0;
        for (int s = 0; s < w.m(); ++s) sc += g.k_nodes[idx[s]];
        for (int s = 0; s < w.n(); ++s) sa += g.k_nodes[idx[w.m() + s]];
        double rmax = 1.0 - std::max(sc, sa);
        for (int ir = 0; ir < g.nr(); ++ir)
            if (g.r_nodes[ir] > rmax + tol) out.at(ir, kc) = cplx{};
    }
    out.update_dr();
    return out;
}

inline double support_violation(const Kernel& w) {
    if (w.slots() == 0) return 0.0;
    double worst = 0.0;
    const auto& g = w.grid();
    std::vector<int> idx;
    for (size_t kc = 0; kc < w.k_combos(); ++kc) {
        w.decode_combo(kc, idx);
        double sc = 0.0, sa = 0.0;
        for (int s = 0; s < w.m(); ++s) sc += g.k_nodes[idx[s]];
        for (int s = 0; s < w.n(); ++s) sa += g.k_nodes[idx[w.m() + s]];
        double rmax = 1.0 - std::max(sc, sa);
        for (int ir = 0; ir < g.nr(); ++ir)
            if (g.r_nodes[ir] > rmax + 1e-12) worst = std::max(worst, std::abs(w.at(ir, kc)));
    }
    return worst;
}

}  // namespace rgflow
