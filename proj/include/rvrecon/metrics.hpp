#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "rvrecon/errors.hpp"
#include "rvrecon/matrix.hpp"

namespace rvrecon {

struct ScanMetrics {
    std::string scan_id;
    double mae = 0.0;
    double mse = 0.0;
    double pearson_r = 0.0;
    double dtw = 0.0;
};

namespace detail {

inline void check_pair(std::span<const double> a, std::span<const double> b, const char* name) {
    if (a.empty() || b.empty()) throw MetricError(std::string(name) + ": empty input");
    if (a.size() != b.size()) {
        throw MetricError(std::string(name) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw MetricError(std::string(name) + ": non-finite input");
    }
}

}  // namespace detail

inline double mae(std::span<const double> a, std::span<const double> b) {
    detail::check_pair(a, b, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

inline double mse(std::span<const double> a, std::span<const double> b) {
    detail::check_pair(a, b, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
    detail::check_pair(a, b, "pearson");
    if (a.size() < 2) throw MetricError("pearson: need at least 2 points");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) throw MetricError("pearson: zero-variance input");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// Unconstrained DTW with |a_i - b_j| local cost and match/insert/delete
// steps; returns the unnormalised cumulative cost.
inline double dtw(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw MetricError("dtw: empty input");
    for (double x : a) {
        if (!std::isfinite(x)) throw MetricError("dtw: non-finite input");
    }
    for (double x : b) {
        if (!std::isfinite(x)) throw MetricError("dtw: non-finite input");
    }
    constexpr double inf = std::numeric_limits<double>::infinity();
    const std::size_t m = b.size();
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = inf;
        for (std::size_t j = 1; j <= m; ++j) {
            const double best = std::min({prev[j - 1], prev[j], cur[j - 1]});
            cur[j] = std::abs(a[i - 1] - b[j - 1]) + best;
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

inline ScanMetrics compute_metrics(std::string scan_id, std::span<const double> pred, std::span<const double> truth) {
    return {std::move(scan_id), mae(pred, truth), mse(pred, truth), pearson(pred, truth), dtw(pred, truth)};
}

// Upper tail of the chi-square distribution, via the regularized upper
// incomplete gamma function.
inline double chi_square_sf(double x, double dof) {
    if (x <= 0.0) return 1.0;
    return boost::math::gamma_q(dof / 2.0, x / 2.0);
}

inline double chi_square_cdf(double x, double dof) { return 1.0 - chi_square_sf(x, dof); }

struct FriedmanResult {
    double chi2 = 0.0;
    std::size_t dof = 0;
    double p_value = 1.0;
    // Rank sum per treatment; rank 1 is the best score in a block.
    std::vector<double> rank_sums;
};

// Average ranks within one block; ties share the mean of their positions.
inline std::vector<double> rank_block(std::span<const double> scores, bool lower_is_better) {
    const std::size_t k = scores.size();
    std::vector<std::size_t> idx(k);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
        return lower_is_better ? scores[x] < scores[y] : scores[x] > scores[y];
    });
    std::vector<double> ranks(k);
    for (std::size_t i = 0; i < k;) {
        std::size_t j = i;
        while (j + 1 < k && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t r = i; r <= j; ++r) ranks[idx[r]] = avg;
        i = j + 1;
    }
    return ranks;
}

// Friedman test over [n blocks x k treatments] with average ranks and no
// tie correction.
inline FriedmanResult friedman_test(const Matrix& scores, bool lower_is_better = true) {
    const std::size_t n = scores.rows();
    const std::size_t k = scores.cols();
    if (n < 2 || k < 2) throw StatTestError("friedman_test: need at least 2 blocks and 2 treatments");
    for (double v : scores.values()) {
        if (!std::isfinite(v)) throw StatTestError("friedman_test: non-finite score");
    }
    FriedmanResult res;
    res.rank_sums.assign(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ranks = rank_block(scores.row(i), lower_is_better);
        for (std::size_t j = 0; j < k; ++j) res.rank_sums[j] += ranks[j];
    }
    const double dn = static_cast<double>(n);
    const double dk = static_cast<double>(k);
    double sum_sq = 0.0;
    for (double r : res.rank_sums) sum_sq += r * r;
    res.chi2 = std::max(0.0, 12.0 / (dn * dk * (dk + 1.0)) * sum_sq - 3.0 * dn * (dk + 1.0));
    res.dof = k - 1;
    res.p_value = chi_square_sf(res.chi2, static_cast<double>(res.dof));
    return res;
}

}  // namespace rvrecon
