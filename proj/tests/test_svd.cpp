#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dprp/rng.hpp"
#include "dprp/svd.hpp"
#include "fd_check.hpp"

using namespace dprp;
using dprp_test::rand_tensor;

namespace {

Tensor reconstruct(const SvdResult& r) {
    int h = r.U.shape[0], w = r.V.shape[0], rank = r.sigma.shape[0];
    Tensor m({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double acc = 0.0;
            for (int k = 0; k < rank; ++k) acc += r.U(i, k) * r.sigma(k) * r.V(j, k);
            m(i, j) = acc;
        }
    return m;
}

double gram_residual(const Tensor& q) {
    int n = q.shape[1];
    double acc = 0.0;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            double d = 0.0;
            for (int i = 0; i < q.shape[0]; ++i) d += q(i, a) * q(i, b);
            double want = a == b ? 1.0 : 0.0;
            acc += (d - want) * (d - want);
        }
    return std::sqrt(acc);
}

void check_invariants(const Tensor& a) {
    SvdResult r = svd(a);
    int h = a.shape[0], w = a.shape[1], rank = std::min(h, w);
    REQUIRE(r.U.shape == std::vector<int>{h, rank});
    REQUIRE(r.sigma.shape == std::vector<int>{rank});
    REQUIRE(r.V.shape == std::vector<int>{w, rank});
    CHECK(gram_residual(r.U) <= 1e-10);
    CHECK(gram_residual(r.V) <= 1e-10);
    for (int i = 0; i < rank; ++i) {
        CHECK(r.sigma(i) >= 0.0);
        if (i + 1 < rank) CHECK(r.sigma(i) >= r.sigma(i + 1));
    }
    Tensor m = reconstruct(r);
    double diff = 0.0;
    for (size_t i = 0; i < m.data.size(); ++i) diff += (m.data[i] - a.data[i]) * (m.data[i] - a.data[i]);
    CHECK(std::sqrt(diff) <= 1e-8 * std::max(frobenius_norm(a), 1e-300));
}

// Independent oracle: cyclic two-sided Jacobi eigensolve of the symmetric
// matrix A^T A; singular values are the square roots of its eigenvalues.
std::vector<double> singular_values_via_gram(const Tensor& a) {
    int h = a.shape[0], w = a.shape[1];
    std::vector<std::vector<double>> m(static_cast<size_t>(w), std::vector<double>(static_cast<size_t>(w), 0.0));
    for (int i = 0; i < w; ++i)
        for (int j = 0; j < w; ++j) {
            double acc = 0.0;
            for (int k = 0; k < h; ++k) acc += a(k, i) * a(k, j);
            m[static_cast<size_t>(i)][static_cast<size_t>(j)] = acc;
        }
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < w; ++p)
            for (int q = p + 1; q < w; ++q) off += m[p][q] * m[p][q];
        if (std::sqrt(off) < 1e-14) break;
        for (int p = 0; p < w - 1; ++p)
            for (int q = p + 1; q < w; ++q) {
                if (m[p][q] == 0.0) continue;
                double theta = 0.5 * std::atan2(2.0 * m[p][q], m[q][q] - m[p][p]);
                double c = std::cos(theta), s = std::sin(theta);
                for (int i = 0; i < w; ++i) {
                    double mp = m[i][p], mq = m[i][q];
                    m[i][p] = c * mp - s * mq;
                    m[i][q] = s * mp + c * mq;
                }
                for (int i = 0; i < w; ++i) {
                    double mp = m[p][i], mq = m[q][i];
                    m[p][i] = c * mp - s * mq;
                    m[q][i] = s * mp + c * mq;
                }
            }
    }
    std::vector<double> svals(static_cast<size_t>(w));
    for (int i = 0; i < w; ++i) svals[static_cast<size_t>(i)] = std::sqrt(std::max(m[i][i], 0.0));
    std::sort(svals.begin(), svals.end(), std::greater<double>());
    return svals;
}

}  // namespace

TEST_CASE("svd of diag(3,1) recovers the diagonal") {
    Tensor a({2, 2}, {3, 0, 0, 1});
    SvdResult r = svd(a);
    CHECK(r.sigma(0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(r.sigma(1) == doctest::Approx(1.0).epsilon(1e-12));
    // signed permutations of I, anchored positive by the sign convention
    CHECK(std::fabs(r.U(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::fabs(r.U(1, 1)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.U(0, 0) > 0.0);
    CHECK(r.U(1, 1) > 0.0);
    CHECK(std::fabs(r.U(0, 1)) < 1e-12);
    CHECK(std::fabs(r.V(0, 1)) < 1e-12);
}

TEST_CASE("svd of the rank-1 nilpotent matrix") {
    Tensor a({2, 2}, {0, 2, 0, 0});
    SvdResult r = svd(a);
    CHECK(r.sigma(0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r.sigma(1) == doctest::Approx(0.0).epsilon(1e-12));
    check_invariants(a);
}

TEST_CASE("svd random 12x9 matches the symmetric eigensolve oracle") {
    Rng rng(61);
    Tensor a = rand_tensor({12, 9}, rng);
    SvdResult r = svd(a);
    Tensor m = reconstruct(r);
    double diff = 0.0;
    for (size_t i = 0; i < m.data.size(); ++i) diff += (m.data[i] - a.data[i]) * (m.data[i] - a.data[i]);
    CHECK(std::sqrt(diff) / frobenius_norm(a) < 1e-10);
    std::vector<double> want = singular_values_via_gram(a);
    for (int i = 0; i < 9; ++i) CHECK(r.sigma(i) == doctest::Approx(want[static_cast<size_t>(i)]).epsilon(1e-8));
}

TEST_CASE("svd invariants hold over 100 random matrices incl. rank-deficient") {
    Rng rng(62);
    int count = 0;
    std::vector<std::pair<int, int>> shapes = {{16, 1}, {1, 16}, {32, 2},  {2, 32}, {12, 3}, {3, 12}, {9, 9},
                                               {8, 2},  {2, 8},  {48, 3},  {3, 48}, {64, 4}, {4, 64}, {7, 5},
                                               {5, 7},  {6, 6},  {256, 16}, {16, 16}, {10, 4}, {4, 10}};
    for (auto [h, w] : shapes) {
        for (int variant = 0; variant < 5; ++variant) {
            Tensor a({h, w});
            if (variant == 3) {
                // rank-deficient: sum of fewer than min(h,w) outer products
                int k = std::max(1, std::min(h, w) / 2);
                for (int t = 0; t < k; ++t) {
                    Tensor u = rand_tensor({h}, rng);
                    Tensor v = rand_tensor({w}, rng);
                    for (int i = 0; i < h; ++i)
                        for (int j = 0; j < w; ++j) a(i, j) += u(i) * v(j);
                }
            } else if (variant == 4 && w >= 2) {
                a = rand_tensor({h, w}, rng);
                for (int i = 0; i < h; ++i) a(i, 1) = 2.0 * a(i, 0);  // duplicated direction
            } else {
                a = rand_tensor({h, w}, rng, -2.0, 2.0);
            }
            check_invariants(a);
            ++count;
        }
    }
    CHECK(count == 100);
}

TEST_CASE("svd of the zero matrix and extreme shapes") {
    check_invariants(Tensor({5, 3}));
    check_invariants(Tensor({3, 5}));
    check_invariants(Tensor({1, 1}, {-4.0}));
    Rng rng(63);
    check_invariants(rand_tensor({1, 7}, rng));
    check_invariants(rand_tensor({7, 1}, rng));
}

TEST_CASE("svd rejects non-matrix input") {
    CHECK_THROWS_AS(svd(Tensor({2, 2, 2})), Error);
    Tensor bad({2, 2}, {1.0, 2.0, std::nan(""), 4.0});
    CHECK_THROWS_AS(svd(bad), Error);
}
