#include "dprp/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace dprp {

namespace {

// One-sided Jacobi on a tall matrix (h >= w): right rotations orthogonalize
// the columns of `a`, accumulating them into `v`. Afterwards column norms are
// the singular values and normalized columns form U.
SvdResult jacobi_tall(Tensor a) {
    const int h = a.shape[0];
    const int w = a.shape[1];
    Tensor v = Tensor::identity(w);

    auto col_dot = [&](int p, int q) {
        double acc = 0.0;
        for (int i = 0; i < h; ++i) acc += a(i, p) * a(i, q);
        return acc;
    };

    const double tol = 1e-15;
    const int max_sweeps = 64;
    bool converged = false;
    double worst_off = 0.0;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        bool rotated = false;
        worst_off = 0.0;
        for (int p = 0; p < w - 1; ++p) {
            for (int q = p + 1; q < w; ++q) {
                double app = col_dot(p, p);
                double aqq = col_dot(q, q);
                double apq = col_dot(p, q);
                if (app == 0.0 || aqq == 0.0) continue;
                double off = std::fabs(apq) / std::sqrt(app * aqq);
                worst_off = std::max(worst_off, off);
                if (off <= tol) continue;
                double zeta = (aqq - app) / (2.0 * apq);
                double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = c * t;
                for (int i = 0; i < h; ++i) {
                    double ap = a(i, p), aq = a(i, q);
                    a(i, p) = c * ap - s * aq;
                    a(i, q) = s * ap + c * aq;
                }
                for (int i = 0; i < w; ++i) {
                    double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
                rotated = true;
            }
        }
        if (!rotated) converged = true;
    }
    if (!converged && w > 1)
        throw_error(ErrorKind::numeric, "svd: Jacobi iteration did not converge after " + std::to_string(max_sweeps) +
                                            " sweeps (residual " + std::to_string(worst_off) + ")");

    std::vector<double> norms(static_cast<size_t>(w));
    for (int j = 0; j < w; ++j) {
        double acc = 0.0;
        for (int i = 0; i < h; ++i) acc += a(i, j) * a(i, j);
        norms[static_cast<size_t>(j)] = std::sqrt(acc);
    }
    double sigma_max = *std::max_element(norms.begin(), norms.end());

    std::vector<int> order(static_cast<size_t>(w));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return norms[static_cast<size_t>(x)] > norms[static_cast<size_t>(y)]; });

    SvdResult res{Tensor({h, w}), Tensor({w}), Tensor({w, w})};
    const double zero_tol = 1e-13 * sigma_max;
    std::vector<int> deferred;
    for (int j = 0; j < w; ++j) {
        int src = order[static_cast<size_t>(j)];
        double sv = norms[static_cast<size_t>(src)];
        for (int i = 0; i < w; ++i) res.V(i, j) = v(i, src);
        if (sigma_max > 0.0 && sv > zero_tol) {
            res.sigma(j) = sv;
            for (int i = 0; i < h; ++i) res.U(i, j) = a(i, src) / sv;
        } else {
            res.sigma(j) = 0.0;
            deferred.push_back(j);
        }
    }

    // Numerically dead columns get an orthonormal completion drawn from the
    // canonical basis (two Gram-Schmidt passes for stability).
    for (int j : deferred) {
        bool placed = false;
        for (int e = 0; e < h && !placed; ++e) {
            std::vector<double> cand(static_cast<size_t>(h), 0.0);
            cand[static_cast<size_t>(e)] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (int c = 0; c < w; ++c) {
                    if (c == j) continue;
                    bool c_unset = std::find(deferred.begin(), deferred.end(), c) != deferred.end() && c > j;
                    if (c_unset) continue;
                    double proj = 0.0;
                    for (int i = 0; i < h; ++i) proj += res.U(i, c) * cand[static_cast<size_t>(i)];
                    for (int i = 0; i < h; ++i) cand[static_cast<size_t>(i)] -= proj * res.U(i, c);
                }
            }
            double nrm = 0.0;
            for (double x : cand) nrm += x * x;
            nrm = std::sqrt(nrm);
            if (nrm > 0.5) {
                for (int i = 0; i < h; ++i) res.U(i, j) = cand[static_cast<size_t>(i)] / nrm;
                placed = true;
            }
        }
        if (!placed) throw_error(ErrorKind::numeric, "svd: failed to complete an orthonormal basis");
    }

    for (int j = 0; j < w; ++j) {
        int imax = 0;
        double best = std::fabs(res.U(0, j));
        for (int i = 1; i < h; ++i) {
            double m = std::fabs(res.U(i, j));
            if (m > best) {
                best = m;
                imax = i;
            }
        }
        if (res.U(imax, j) < 0.0) {
            for (int i = 0; i < h; ++i) res.U(i, j) = -res.U(i, j);
            for (int i = 0; i < w; ++i) res.V(i, j) = -res.V(i, j);
        }
    }
    return res;
}

Tensor transpose_tensor(const Tensor& a) {
    Tensor t({a.shape[1], a.shape[0]});
    for (int i = 0; i < a.shape[0]; ++i)
        for (int j = 0; j < a.shape[1]; ++j) t(j, i) = a(i, j);
    return t;
}

}  // namespace

SvdResult svd(const Tensor& a) {
    if (a.rank() != 2) throw_error(ErrorKind::dimension, "svd: rank-2 tensor required, got " + shape_str(a.shape));
    ensure_finite(a, "svd");
    int h = a.shape[0], w = a.shape[1];
    if (h >= w) return jacobi_tall(a);
    SvdResult t = jacobi_tall(transpose_tensor(a));
    // A^T = U' S V'^T implies A = V' S U'^T, but the sign convention anchors
    // on U columns, so re-apply it after the swap.
    SvdResult res{std::move(t.V), std::move(t.sigma), std::move(t.U)};
    int r = res.sigma.shape[0];
    for (int j = 0; j < r; ++j) {
        int imax = 0;
        double best = std::fabs(res.U(0, j));
        for (int i = 1; i < h; ++i) {
            double m = std::fabs(res.U(i, j));
            if (m > best) {
                best = m;
                imax = i;
            }
        }
        if (res.U(imax, j) < 0.0) {
            for (int i = 0; i < h; ++i) res.U(i, j) = -res.U(i, j);
            for (int i = 0; i < w; ++i) res.V(i, j) = -res.V(i, j);
        }
    }
    return res;
}

}  // namespace dprp
