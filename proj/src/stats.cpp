#include "retrace/stats.hpp"

#include "retrace/error.hpp"

#include <algorithm>
#include <cmath>

namespace retrace {

namespace {

double log_choose(int n, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// P(X = a) for the 2x2 table with margins fixed at (n_a, n_b, K)
double hypergeom_log_pmf(int a, int n_a, int n_b, int K) {
    return log_choose(n_a, a) + log_choose(n_b, K - a) - log_choose(n_a + n_b, K);
}

// binomial tail P(X >= k) under success probability p
double binom_tail_ge(int k, int n, double p) {
    if (k <= 0) return 1.0;
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return 1.0;
    double total = 0.0;
    for (int i = k; i <= n; ++i)
        total += std::exp(log_choose(n, i) + i * std::log(p) + (n - i) * std::log1p(-p));
    return std::min(total, 1.0);
}

double binom_tail_le(int k, int n, double p) {
    if (k >= n) return 1.0;
    if (p >= 1.0) return 0.0;
    if (p <= 0.0) return 1.0;
    double total = 0.0;
    for (int i = 0; i <= k; ++i)
        total += std::exp(log_choose(n, i) + i * std::log(p) + (n - i) * std::log1p(-p));
    return std::min(total, 1.0);
}

} // namespace

double fisher_exact_two_tailed(int success_a, int n_a, int success_b, int n_b) {
    if (n_a <= 0 || n_b <= 0)
        throw DataError("fisher_exact: empty cells");
    if (n_a != n_b)
        throw DataError("fisher_exact: mismatched episode counts");
    if (success_a < 0 || success_a > n_a || success_b < 0 || success_b > n_b)
        throw DataError("fisher_exact: counts out of range");

    const int K = success_a + success_b;
    const int lo = std::max(0, K - n_b);
    const int hi = std::min(K, n_a);
    const double observed = hypergeom_log_pmf(success_a, n_a, n_b, K);
    double p = 0.0;
    for (int a = lo; a <= hi; ++a) {
        double lp = hypergeom_log_pmf(a, n_a, n_b, K);
        if (lp <= observed + 1e-12) p += std::exp(lp);
    }
    return std::min(p, 1.0);
}

std::pair<double, double> clopper_pearson(int k, int n, double confidence) {
    if (n <= 0 || k < 0 || k > n)
        throw DataError("clopper_pearson: invalid counts");
    const double alpha = 1.0 - confidence;

    auto bisect = [](auto f, double lo, double hi) {
        for (int i = 0; i < 200; ++i) {
            double mid = 0.5 * (lo + hi);
            if (f(mid)) hi = mid;
            else lo = mid;
        }
        return 0.5 * (lo + hi);
    };

    double lower = 0.0;
    if (k > 0) {
        // smallest p with P(X >= k | p) >= alpha/2
        lower = bisect([&](double p) { return binom_tail_ge(k, n, p) >= alpha / 2.0; }, 0.0, 1.0);
    }
    double upper = 1.0;
    if (k < n) {
        // largest p with P(X <= k | p) >= alpha/2
        upper = bisect([&](double p) { return binom_tail_le(k, n, p) < alpha / 2.0; }, 0.0, 1.0);
    }
    return {lower, upper};
}

} // namespace retrace
