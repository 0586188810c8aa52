#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace clarify::stats {

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::optional<double> effect_size;
    std::size_t n = 0;
    std::string method_note;
    bool degenerate = false;
};

nlohmann::json to_json(const TestResult& r, const std::string& test_name);

// Fixed four-decimal rendering used by the CLI.
std::string format_table(const std::vector<std::pair<std::string, TestResult>>& rows);

// (p_o - p_e) / (1 - p_e); 1 when both proportions are 1.
double cohen_kappa(std::span<const std::string> labels_a, std::span<const std::string> labels_b);

// phi = sqrt(chi2 / n).
double phi_from_chi_square(double chi_square, std::size_t n);

// Discordant counts: b = (true, false), c = (false, true). The continuity
// corrected statistic is clamped at 0 when |b - c| < 1.
TestResult mcnemar(std::span<const std::pair<bool, bool>> pairs, bool continuity = false);

// Differences are x - y. Zero differences are dropped and tied magnitudes
// share their average rank. V is the positive-rank sum. The two-sided p is
// exact for n <= 25 and uses the tie-corrected normal approximation with
// continuity correction above that. effect_size is r = Z / sqrt(n).
TestResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs);

inline constexpr std::size_t kWilcoxonExactLimit = 25;

// Average ranks, 1-based.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

// Pearson correlation of average ranks. The p value uses the t
// approximation with n - 2 df, or exact permutation when requested (n <= 8).
TestResult spearman(std::span<const double> x, std::span<const double> y,
                    bool exact_permutation = false);

inline constexpr std::size_t kSpearmanExactLimit = 8;

struct TostResult {
    double mean_difference = 0.0;
    double pooled_sd = 0.0;
    double t_lower = 0.0;
    double t_upper = 0.0;
    double df = 0.0;
    double p_lower = 1.0;
    double p_upper = 1.0;
    bool equivalent = false;
    bool degenerate = false;
};

// Two one-sided t tests of mean(a) - mean(b) against +/- delta * pooled SD.
TostResult tost_equivalence(std::span<const double> group_a, std::span<const double> group_b,
                            double delta = 0.5, double alpha = 0.05);

// rater index -> assigned item indices. Items are shuffled by seed, then
// rater r takes the per_rater consecutive positions starting at r * per_rater
// (cyclically), so item exposure differs by at most one.
std::vector<std::vector<std::size_t>> latin_square_assign(std::size_t item_count,
                                                          std::size_t raters,
                                                          std::size_t per_rater,
                                                          std::uint64_t seed);

template <typename T>
std::vector<std::vector<T>> latin_square_assign(const std::vector<T>& items, std::size_t raters,
                                                std::size_t per_rater, std::uint64_t seed) {
    auto idx = latin_square_assign(items.size(), raters, per_rater, seed);
    std::vector<std::vector<T>> out(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        out[r].reserve(idx[r].size());
        for (auto i : idx[r]) out[r].push_back(items[i]);
    }
    return out;
}

// Seeded permutation of 0..n-1; identical for identical (n, seed) on every
// platform.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

}  // namespace clarify::stats
