#pragma once

#include <utility>

namespace retrace {

// Two-tailed Fisher exact test for two binomial cells with equal trial
// counts (conditional exact test; tables as extreme as the observed one by
// hypergeometric probability).
double fisher_exact_two_tailed(int success_a, int n_a, int success_b, int n_b);

// Exact Clopper-Pearson confidence interval for k successes in n trials.
std::pair<double, double> clopper_pearson(int k, int n, double confidence = 0.95);

} // namespace retrace
