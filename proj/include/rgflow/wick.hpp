// Normal-ordered vacuum expectations of Neumann-series products
//   F_0 (W_1 F_1) (W_2 F_2) ... (W_L F_L)
// evaluated on the discrete mode grid.  Each W factor carries external
// (spectator) momentum slots bound to output grid points and internal slots
// that are summed over quadrature modes; the F factors are functions of the
// running field energy.  The engine propagates multiset states right-to-left
// with amplitude vectors over the whole output r-grid at once.

#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "rgflow/cutoff.hpp"
#include "rgflow/kernel_sequence.hpp"

namespace rgflow {

struct BallViolation : std::runtime_error {
    explicit BallViolation(const std::string& what) : std::runtime_error(what) {}
};

namespace wick {

// ---------------------------------------------------------------------------
// fast C^inf smoothstep via a dense table (exact to ~1e-18)
inline double smoothstep_fast(double t) {
    static const std::vector<double> tab = [] {
        std::vector<double> v(100001);
        for (int i = 0; i <= 100000; ++i) v[i] = smoothstep_cinf(double(i) / 100000.0);
        return v;
    }();
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    double x = t * 100000.0;
    int i = int(x);
    if (i < 1) i = 1;
    if (i > 99998) i = 99998;
    double d = x - i;
    // 4-point cubic
    double a = tab[i - 1], b = tab[i], c = tab[i + 1], e = tab[i + 2];
    return b + 0.5 * d * (c - a + d * (2 * a - 5 * b + 4 * c - e + d * (3 * (b - c) + e - a)));
}

inline double chi1_fast(double x) {
    double t = 4.0 * (x - 0.75);
    if (t <= 0.0) return 1.0;
    if (t >= 1.0) return 0.0;
    return std::cos(0.5 * M_PI * smoothstep_fast(t));
}

inline double chibar1_fast(double x) {
    double t = 4.0 * (x - 0.75);
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return std::sin(0.5 * M_PI * smoothstep_fast(t));
}

// ---------------------------------------------------------------------------
// local-cubic interpolation weights in log k over a 4-node window; values are
// interpolated as w/k (kernels vanish linearly at k -> 0) and multiplied back
struct KWindow {
    int i0 = 0;
    std::array<double, 4> w{};
};

inline KWindow k_window(const std::vector<double>& nodes, double kstar) {
    const int nk = int(nodes.size());
    KWindow win;
    if (nk < 4) throw std::invalid_argument("k grid too small for interpolation");
    int hi = int(std::lower_bound(nodes.begin(), nodes.end(), kstar) - nodes.begin());
    win.i0 = std::min(std::max(hi - 2, 0), nk - 4);
    double u = std::log(std::max(kstar, 1e-300));
    std::array<double, 4> xu;
    for (int j = 0; j < 4; ++j) xu[j] = std::log(nodes[win.i0 + j]);
    for (int j = 0; j < 4; ++j) {
        double num = 1.0, den = 1.0;
        for (int i = 0; i < 4; ++i) {
            if (i == j) continue;
            num *= u - xu[i];
            den *= xu[j] - xu[i];
        }
        win.w[j] = num / den;
    }
    return win;
}

// Evaluate a kernel at one continuous k argument per slot (other slots at
// nodes are handled by passing the node value; exact there up to round-off).
// Field-energy arguments beyond the grid are clamped to r = 1, where kernels
// with momentum slots vanish by the support condition.
inline cplx eval_kernel_at(const Kernel& w, double r, const std::vector<double>& ks) {
    const auto& g = w.grid();
    const int s = w.slots();
    std::vector<KWindow> wins(s);
    for (int j = 0; j < s; ++j) wins[j] = k_window(g.k_nodes, ks[j]);
    // tensor contraction over the windows of h = w / prod(k)
    cplx acc{};
    std::vector<int> idx(s, 0);
    while (true) {
        double coef = 1.0;
        std::vector<int> combo(s);
        for (int j = 0; j < s; ++j) {
            combo[j] = wins[j].i0 + idx[j];
            coef *= wins[j].w[idx[j]] / g.k_nodes[combo[j]];
        }
        acc += coef * w.eval_r(r, w.combo_index(combo));
        int p = s - 1;
        while (p >= 0 && idx[p] == 3) idx[p--] = 0;
        if (p < 0) break;
        idx[p]++;
    }
    for (int j = 0; j < s; ++j) acc *= ks[j];
    return s == 0 ? w.eval_r(r, 0) : acc;
}

// ---------------------------------------------------------------------------
// tabulated sector on a fine uniform r-grid times a merged k-value list
struct KTable {
    int slots = 0;
    int nklist = 0;
    int nr_fine = 0;
    double inv_h = 0.0;          // 1/dr of the fine grid on [0,1]
    bool r_independent = false;  // pure momentum kernels (no field-energy slot)
    std::vector<cplx> vals;      // [combo][fine_r]

    // local-cubic in r; zero outside [0, 1] (kernel support) unless the
    // kernel carries no field-energy dependence at all
    cplx eval(double r, size_t combo) const {
        if (r_independent) return vals[combo * size_t(nr_fine)];
        if (r >= 1.0) {
            if (r > 1.0 + 1e-12) return cplx{};
            r = 1.0;
        }
        if (r < 0.0) r = 0.0;
        const cplx* col = &vals[combo * size_t(nr_fine)];
        double x = r * inv_h;
        int i = int(x);
        if (i < 1) i = 1;
        if (i > nr_fine - 3) i = nr_fine - 3;
        double d = x - i;
        cplx a = col[i - 1], b = col[i], c = col[i + 1], e = col[i + 2];
        return b + 0.5 * d * (c - a + d * (2.0 * a - 5.0 * b + 4.0 * c - e +
                                           d * (3.0 * (b - c) + e - a)));
    }
};

inline KTable build_ktable(const Kernel& w, const std::vector<double>& klist, int nr_fine) {
    const auto& g = w.grid();
    const int s = w.slots();
    const int nk = g.nk();
    KTable t;
    t.slots = s;
    t.nklist = int(klist.size());
    t.nr_fine = nr_fine;
    t.inv_h = double(nr_fine - 1);
    t.r_independent = w.r_uniform();
    size_t ncombo = 1;
    for (int j = 0; j < s; ++j) ncombo *= size_t(t.nklist);
    t.vals.assign(ncombo * size_t(nr_fine), cplx{});

    // does klist[i] coincide with grid node i (the merged list convention puts
    // the plain nodes first)?
    std::vector<int> exact(t.nklist, -1);
    for (int i = 0; i < t.nklist; ++i)
        for (int j = 0; j < nk; ++j)
            if (klist[i] == g.k_nodes[j]) {
                exact[i] = j;
                break;
            }
    std::vector<KWindow> wins(t.nklist);
    for (int i = 0; i < t.nklist; ++i)
        if (exact[i] < 0) wins[i] = k_window(g.k_nodes, klist[i]);

    std::vector<int> idx(s, 0);
    std::vector<cplx> col(g.nr());
    size_t combo = 0;
    while (true) {
        // values on the native r-grid at this k-combo
        for (int ir = 0; ir < g.nr(); ++ir) col[ir] = cplx{};
        // tensor-interp in k, exact columns短-circuited
        std::vector<int> widx(s, 0);
        while (true) {
            double coef = 1.0;
            std::vector<int> kcombo(s);
            bool skip = false;
            for (int j = 0; j < s; ++j) {
                if (exact[idx[j]] >= 0) {
                    if (widx[j] != 0) {
                        skip = true;
                        break;
                    }
                    kcombo[j] = exact[idx[j]];
                } else {
                    kcombo[j] = wins[idx[j]].i0 + widx[j];
                    coef *= wins[idx[j]].w[widx[j]] * klist[idx[j]] / g.k_nodes[kcombo[j]];
                }
            }
            if (!skip) {
                size_t kc = s ? w.combo_index(kcombo) : 0;
                for (int ir = 0; ir < g.nr(); ++ir) col[ir] += coef * w.at(ir, kc);
            }
            int p = s - 1;
            while (p >= 0 && widx[p] == 3) widx[p--] = 0;
            if (p < 0) break;
            widx[p]++;
        }
        // resample r to the fine uniform grid
        cplx* out = &t.vals[combo * size_t(nr_fine)];
        for (int i = 0; i < nr_fine; ++i) {
            double r = double(i) / double(nr_fine - 1);
            out[i] = cheb::bary_eval(g.r_nodes, g.r_bary, col, r);
        }
        int p = s - 1;
        while (p >= 0 && idx[p] == t.nklist - 1) idx[p--] = 0;
        if (p < 0) break;
        idx[p]++;
        combo++;
        continue;
    }
    return t;
}

// fine-tabulated scalar function of r on [0,1] (used for the w00 correction)
struct FineU {
    int n = 0;
    double inv_h = 0.0;
    std::vector<cplx> vals;

    cplx eval(double r) const {
        if (n == 0) return cplx{};
        if (r <= 0.0) return vals.front();
        if (r >= 1.0) return vals.back();
        double x = r * inv_h;
        int i = int(x);
        if (i < 1) i = 1;
        if (i > n - 3) i = n - 3;
        double d = x - i;
        cplx a = vals[i - 1], b = vals[i], c = vals[i + 1], e = vals[i + 2];
        return b + 0.5 * d * (c - a + d * (2.0 * a - 5.0 * b + 4.0 * c - e +
                                           d * (3.0 * (b - c) + e - a)));
    }
};

inline FineU build_fine_u(const KernelSequence& w, int nr_fine) {
    FineU u;
    u.n = nr_fine;
    u.inv_h = double(nr_fine - 1);
    u.vals.resize(nr_fine);
    for (int i = 0; i < nr_fine; ++i)
        u.vals[i] = w.u00_at(double(i) / double(nr_fine - 1));
    return u;
}

// ---------------------------------------------------------------------------
// F factors

struct FProvider {
    enum Kind { Flow, Initial } kind = Flow;
    // flow parameters
    double rho = 0.1;
    cplx zeta{};
    const FineU* u00 = nullptr;
    double t_floor = 0.0;  // 3 rho / 32
    // initial parameters
    cplx z{};
    std::vector<double> atom_levels;  // {0, 1, ...}

    int channels() const { return kind == Flow ? 1 : int(atom_levels.size()); }

    double edge(double u) const {
        return kind == Flow ? chi1_fast(u / rho) : chi1_fast(u);
    }

    cplx interior(double u, int ch) const {
        if (kind == Flow) {
            double num = chibar1_fast(u / rho);
            if (num == 0.0) return cplx{};
            cplx den = u - zeta + (u00 ? u00->eval(u) : cplx{});
            if (std::abs(den) < t_floor)
                throw BallViolation("w00 too small on the chibar support (flow F factor)");
            return num * num / den;
        }
        if (ch == 0) {
            double num = chibar1_fast(u);
            if (num == 0.0) return cplx{};
            cplx den = u - z;
            if (std::abs(den) < 0.1)
                throw BallViolation("initial F factor: z outside the safe disc");
            return num * num / den;
        }
        cplx den = atom_levels[ch] + u - z;
        if (std::abs(den) < 0.1)
            throw BallViolation("initial F factor: excited-level resolvent too small");
        return 1.0 / den;
    }
};

// ---------------------------------------------------------------------------
// tuple machinery

struct FactorSpec {
    int m = 0, p = 0, n = 0, q = 0;  // external/internal creation, external/internal annihilation
    int total() const { return m + p + n + q; }
    int sector_m() const { return m + p; }
    int sector_n() const { return n + q; }
};

using Tuple = std::vector<FactorSpec>;

// All tuples for L factors with |m| = M, |n| = N, per-factor totals in
// [tot_min, tot_max], sectors restricted by sector_ok, and a nonzero vacuum
// expectation possible (balanced internal ladders, feasible prefixes).
inline std::vector<Tuple> enumerate_tuples(int L, int M, int N, int tot_min, int tot_max,
                                           const std::function<bool(int, int)>& sector_ok) {
    std::vector<Tuple> out;
    Tuple cur(L);
    std::function<void(int, int, int)> rec = [&](int l, int mrem, int nrem) {
        if (l == L) {
            if (mrem || nrem) return;
            int alive = 0;
            for (int j = L - 1; j >= 0; --j) {  // rightmost factor acts first
                alive -= cur[j].q;
                if (alive < 0) return;  // annihilates photons that are not there
                alive += cur[j].p;
            }
            if (alive != 0) return;  // unbalanced internal ladders
            out.push_back(cur);
            return;
        }
        for (int m = 0; m <= mrem; ++m)
            for (int n = 0; n <= nrem; ++n)
                for (int p = 0; p + m <= tot_max; ++p)
                    for (int q = 0; q + n + p + m <= tot_max; ++q) {
                        int tot = m + n + p + q;
                        if (tot < tot_min || tot > tot_max) continue;
                        if (!sector_ok(m + p, n + q)) continue;
                        cur[l] = FactorSpec{m, p, n, q};
                        rec(l + 1, mrem - m, nrem - n);
                    }
    };
    rec(0, M, N);
    return out;
}

inline double binom(int n, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r = r * double(n - i) / double(i + 1);
    return r;
}

inline double tuple_binomials(const Tuple& t) {
    double b = 1.0;
    for (const auto& f : t) b *= binom(f.m + f.p, f.p) * binom(f.n + f.q, f.q);
    return b;
}

// ---------------------------------------------------------------------------
// the engine

struct BoundFactor {
    const KTable* table = nullptr;
    FactorSpec spec;
    // kernel slot indices into the merged k-list: externals bound, internals
    // filled during propagation.  Slot order: (ext create..., int create...,
    // ext annih..., int annih...)
    std::array<int, 2> ext_create{};
    std::array<int, 2> ext_annih{};
    double kshift = 0.0;  // kernel r-argument shift (slope included, no E term)
};

struct EngineConfig {
    double slope = 1.0;        // rho for the flow, 1 for the initial series
    bool p_red = false;        // sandwich every W factor with chi(H_f <= 1)
    const RadialGrid* grid = nullptr;
    const double* r_out = nullptr;
    int nr = 0;
    const FProvider* f = nullptr;
};

namespace detail {

inline uint64_t pack_state(const std::array<uint8_t, 8>& modes, int n) {
    uint64_t key = 0;
    for (int i = 0; i < 8; ++i) key = (key << 8) | (i < n ? (modes[i] + 1) : 0);
    return key;
}

struct StateSet {
    std::vector<std::array<uint8_t, 8>> modes;
    std::vector<int> count;
    std::vector<double> energy;
    std::vector<std::vector<cplx>> amp;  // [state][ch * nr]
    std::unordered_map<uint64_t, int> index;

    int find_or_add(const std::array<uint8_t, 8>& m, int n, double e, int amp_len) {
        uint64_t key = pack_state(m, n);
        auto it = index.find(key);
        if (it != index.end()) return it->second;
        int id = int(modes.size());
        modes.push_back(m);
        count.push_back(n);
        energy.push_back(e);
        amp.emplace_back(amp_len, cplx{});
        index.emplace(key, id);
        return id;
    }
};

}  // namespace detail

// Vacuum expectation of F0 prod_l (W_l F_l) over the output r-grid, for one
// tuple with bound external slots.  Prefactors (signs, binomials, scaling
// powers) are the caller's business.  f_shift[l] is the argument shift of F_l
// (slope included).
inline void eval_tuple(const EngineConfig& cfg, const std::vector<BoundFactor>& factors,
                       const std::vector<double>& f_shift, std::vector<cplx>& out) {
    const int L = int(factors.size());
    const int nch = cfg.f->channels();
    const int nr = cfg.nr;
    const int amp_len = nch * nr;
    const auto& g = *cfg.grid;
    const int nmodes = g.nk();

    detail::StateSet cur;
    {
        std::array<uint8_t, 8> vac{};
        int id = cur.find_or_add(vac, 0, 0.0, amp_len);
        for (int ir = 0; ir < nr; ++ir) cur.amp[id][0 * nr + ir] = 1.0;  // start channel 0
    }

    auto apply_f = [&](detail::StateSet& ss, int l) {
        bool edge = (l == 0 || l == L);
        for (size_t s = 0; s < ss.modes.size(); ++s) {
            double e = ss.energy[s];
            for (int ch = 0; ch < nch; ++ch) {
                for (int ir = 0; ir < nr; ++ir) {
                    cplx& a = ss.amp[s][ch * nr + ir];
                    if (a == cplx{}) continue;
                    double u = e + f_shift[l] + cfg.slope * cfg.r_out[ir];
                    if (edge)
                        a *= cfg.f->edge(u);
                    else
                        a *= cfg.f->interior(u, ch);
                }
            }
        }
    };

    // one removal / insertion step on a sorted multiset
    auto remove_at = [](std::array<uint8_t, 8> st, int stn, int pos) {
        for (int t = pos; t < stn - 1; ++t) st[t] = st[t + 1];
        st[stn - 1] = 0;
        return st;
    };
    auto insert_mode = [](std::array<uint8_t, 8> st, int stn, int mode, int* occ_after) {
        int pos = stn;
        while (pos > 0 && st[pos - 1] > mode) {
            st[pos] = st[pos - 1];
            --pos;
        }
        st[pos] = uint8_t(mode);
        int occ = 0;
        for (int i = 0; i <= stn; ++i)
            if (st[i] == mode) ++occ;
        *occ_after = occ;
        return st;
    };
    auto occ_of = [](const std::array<uint8_t, 8>& st, int stn, int mode) {
        int occ = 0;
        for (int t = 0; t < stn; ++t)
            if (st[t] == mode) ++occ;
        return occ;
    };

    struct AnnState {
        std::array<uint8_t, 8> st;
        int stn;
        double amp;
        std::array<int, 2> jm;
        double e_mid;
    };
    std::vector<AnnState> anns;
    std::vector<cplx> kval(nr);

    for (int l = L; l >= 1; --l) {
        apply_f(cur, l);
        const BoundFactor& bf = factors[l - 1];
        const FactorSpec& fs = bf.spec;
        if (fs.q > 2 || fs.p > 2) throw std::invalid_argument("factor with more than 2 slots");
        detail::StateSet next;
        for (size_t s = 0; s < cur.modes.size(); ++s) {
            bool live = false;
            for (const cplx& a : cur.amp[s])
                if (a != cplx{}) {
                    live = true;
                    break;
                }
            if (!live) continue;
            if (cfg.p_red && cur.energy[s] > 1.0 + 1e-12) continue;  // entry P_red

            const std::array<uint8_t, 8>& base = cur.modes[s];
            const int bn = cur.count[s];
            anns.clear();
            if (fs.q == 0) {
                anns.push_back({base, bn, 1.0, {}, cur.energy[s]});
            } else {
                for (int i = 0; i < bn; ++i) {
                    if (i > 0 && base[i] == base[i - 1]) continue;
                    int j1 = base[i];
                    double a1 = std::sqrt(double(occ_of(base, bn, j1))) * g.slot_weight(j1);
                    auto st1 = remove_at(base, bn, i);
                    double e1 = cur.energy[s] - g.k_nodes[j1];
                    if (fs.q == 1) {
                        anns.push_back({st1, bn - 1, a1, {j1, 0}, e1});
                        continue;
                    }
                    for (int i2 = 0; i2 < bn - 1; ++i2) {
                        if (i2 > 0 && st1[i2] == st1[i2 - 1]) continue;
                        int j2 = st1[i2];
                        double a2 =
                            a1 * std::sqrt(double(occ_of(st1, bn - 1, j2))) * g.slot_weight(j2);
                        anns.push_back(
                            {remove_at(st1, bn - 1, i2), bn - 2, a2, {j1, j2}, e1 - g.k_nodes[j2]});
                    }
                }
            }

            const cplx* in_amp = cur.amp[s].data();
            const int nkl = bf.table->nklist;
            for (const AnnState& an : anns) {
                // enumerate ordered internal creation tuples (p <= 2)
                auto emit = [&](const std::array<uint8_t, 8>& st2, int st2n, double amp2,
                                const std::array<int, 2>& im, double e_out) {
                    if (cfg.p_red && e_out > 1.0 + 1e-12) return;  // exit P_red
                    // kernel combo: ext create, int create, ext annih, int annih
                    size_t combo = 0;
                    for (int a = 0; a < fs.m; ++a) combo = combo * nkl + size_t(bf.ext_create[a]);
                    for (int a = 0; a < fs.p; ++a) combo = combo * nkl + size_t(im[a]);
                    for (int a = 0; a < fs.n; ++a) combo = combo * nkl + size_t(bf.ext_annih[a]);
                    for (int a = 0; a < fs.q; ++a) combo = combo * nkl + size_t(an.jm[a]);
                    for (int ir = 0; ir < nr; ++ir)
                        kval[ir] =
                            bf.table->eval(an.e_mid + bf.kshift + cfg.slope * cfg.r_out[ir], combo);
                    int id = next.find_or_add(st2, st2n, e_out, amp_len);
                    cplx* out_amp = next.amp[id].data();
                    for (int ch = 0; ch < nch; ++ch)
                        for (int ir = 0; ir < nr; ++ir)
                            out_amp[ch * nr + ir] += amp2 * kval[ir] * in_amp[ch * nr + ir];
                };
                if (fs.p == 0) {
                    emit(an.st, an.stn, an.amp, {}, an.e_mid);
                } else if (fs.p == 1) {
                    for (int mode = 0; mode < nmodes; ++mode) {
                        if (an.stn >= 8) break;
                        int occ;
                        auto st2 = insert_mode(an.st, an.stn, mode, &occ);
                        double amp2 = an.amp * std::sqrt(double(occ)) * g.slot_weight(mode);
                        emit(st2, an.stn + 1, amp2, {mode, 0}, an.e_mid + g.k_nodes[mode]);
                    }
                } else {
                    for (int m1 = 0; m1 < nmodes; ++m1) {
                        if (an.stn >= 7) break;
                        int occ1;
                        auto st1 = insert_mode(an.st, an.stn, m1, &occ1);
                        double a1 = an.amp * std::sqrt(double(occ1)) * g.slot_weight(m1);
                        double e1 = an.e_mid + g.k_nodes[m1];
                        for (int m2 = 0; m2 < nmodes; ++m2) {
                            int occ2;
                            auto st2 = insert_mode(st1, an.stn + 1, m2, &occ2);
                            double a2 = a1 * std::sqrt(double(occ2)) * g.slot_weight(m2);
                            emit(st2, an.stn + 2, a2, {m2, m1}, e1 + g.k_nodes[m2]);
                        }
                    }
                }
            }
        }
        cur = std::move(next);
    }
    apply_f(cur, 0);

    out.assign(nr, cplx{});
    std::array<uint8_t, 8> vac{};
    auto it = cur.index.find(detail::pack_state(vac, 0));
    if (it != cur.index.end())
        for (int ir = 0; ir < nr; ++ir) out[ir] = cur.amp[it->second][0 * nr + ir];
}

}  // namespace wick
}  // namespace rgflow
