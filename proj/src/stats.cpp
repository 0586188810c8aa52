#include "clarify/stats.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "clarify/error.hpp"

namespace clarify::stats {
namespace {

double clamp01(double p) { return std::clamp(p, 0.0, 1.0); }

double mean(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample variance (n - 1 denominator).
double variance(std::span<const double> v) {
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size() - 1);
}

double normal_two_sided(double z) {
    const boost::math::normal_distribution<double> nd;
    return clamp01(2.0 * boost::math::cdf(boost::math::complement(nd, std::abs(z))));
}

double t_two_sided(double t, double df) {
    const boost::math::students_t_distribution<double> td(df);
    return clamp01(2.0 * boost::math::cdf(boost::math::complement(td, std::abs(t))));
}

std::string fixed4(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
}

}  // namespace

nlohmann::json to_json(const TestResult& r, const std::string& test_name) {
    return {{"kind", "test_result"},
            {"test", test_name},
            {"statistic", r.statistic},
            {"p_value", r.p_value},
            {"effect_size", r.effect_size ? nlohmann::json(*r.effect_size) : nlohmann::json()},
            {"n", r.n},
            {"method_note", r.method_note},
            {"degenerate", r.degenerate}};
}

std::string format_table(const std::vector<std::pair<std::string, TestResult>>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "test" << std::right << std::setw(12) << "statistic"
       << std::setw(10) << "p" << std::setw(10) << "effect" << std::setw(6) << "n" << "  note\n";
    for (const auto& [name, r] : rows) {
        os << std::left << std::setw(14) << name << std::right << std::setw(12)
           << fixed4(r.statistic) << std::setw(10) << fixed4(r.p_value) << std::setw(10)
           << (r.effect_size ? fixed4(*r.effect_size) : std::string("NA")) << std::setw(6) << r.n
           << "  " << r.method_note << (r.degenerate ? " [degenerate]" : "") << '\n';
    }
    return os.str();
}

double cohen_kappa(std::span<const std::string> labels_a, std::span<const std::string> labels_b) {
    if (labels_a.size() != labels_b.size())
        throw std::invalid_argument("cohen_kappa: label lists differ in length");
    if (labels_a.empty()) throw std::invalid_argument("cohen_kappa: no labels");
    const auto n = static_cast<double>(labels_a.size());
    std::map<std::string_view, double> freq_a, freq_b;
    double agree = 0.0;
    for (std::size_t i = 0; i < labels_a.size(); ++i) {
        ++freq_a[labels_a[i]];
        ++freq_b[labels_b[i]];
        if (labels_a[i] == labels_b[i]) agree += 1.0;
    }
    const double p_o = agree / n;
    double p_e = 0.0;
    for (const auto& [label, count] : freq_a) {
        auto it = freq_b.find(label);
        if (it != freq_b.end()) p_e += (count / n) * (it->second / n);
    }
    if (p_e >= 1.0) return 1.0;  // both raters constant on the same label
    return (p_o - p_e) / (1.0 - p_e);
}

double phi_from_chi_square(double chi_square, std::size_t n) {
    if (n == 0) throw std::invalid_argument("phi_from_chi_square: n must be positive");
    if (chi_square < 0.0) throw std::invalid_argument("phi_from_chi_square: negative statistic");
    return std::sqrt(chi_square / static_cast<double>(n));
}

TestResult mcnemar(std::span<const std::pair<bool, bool>> pairs, bool continuity) {
    if (pairs.empty()) throw std::invalid_argument("mcnemar: no pairs");
    std::size_t b = 0, c = 0;
    for (const auto& [x, y] : pairs) {
        if (x && !y) ++b;
        if (!x && y) ++c;
    }
    TestResult r;
    r.n = pairs.size();
    r.method_note = "b=" + std::to_string(b) + " c=" + std::to_string(c) +
                    (continuity ? ", continuity corrected" : ", uncorrected");
    if (b + c == 0) {
        r.statistic = 0.0;
        r.p_value = 1.0;
        r.effect_size = 0.0;
        r.degenerate = true;
        r.method_note += ", no discordant pairs";
        return r;
    }
    const double diff = std::abs(static_cast<double>(b) - static_cast<double>(c));
    const double num = continuity ? std::max(diff - 1.0, 0.0) : diff;
    r.statistic = num * num / static_cast<double>(b + c);
    const boost::math::chi_squared_distribution<double> chi(1.0);
    r.p_value = clamp01(boost::math::cdf(boost::math::complement(chi, r.statistic)));
    r.effect_size = phi_from_chi_square(r.statistic, r.n);
    return r;
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

TestResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs) {
    if (pairs.empty()) throw std::invalid_argument("wilcoxon_signed_rank: no pairs");
    std::vector<double> diffs;
    for (const auto& [x, y] : pairs)
        if (x - y != 0.0) diffs.push_back(x - y);

    TestResult r;
    r.n = diffs.size();
    if (diffs.empty()) {
        r.statistic = 0.0;
        r.p_value = 1.0;
        r.degenerate = true;
        r.method_note = "all differences zero";
        return r;
    }

    std::vector<double> mags(diffs.size());
    std::transform(diffs.begin(), diffs.end(), mags.begin(), [](double d) { return std::abs(d); });
    const auto ranks = average_ranks(mags);
    double v = 0.0;
    for (std::size_t i = 0; i < diffs.size(); ++i)
        if (diffs[i] > 0) v += ranks[i];
    r.statistic = v;

    const auto n = static_cast<double>(r.n);
    const double mu = n * (n + 1.0) / 4.0;
    double tie_term = 0.0;
    {
        std::map<double, double> groups;
        for (double rk : ranks) ++groups[rk];
        for (const auto& [rk, t] : groups) tie_term += t * t * t - t;
    }
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    const double sd = std::sqrt(var);
    const double z = sd > 0 ? (v - mu) / sd : 0.0;
    r.effect_size = z / std::sqrt(n);

    if (r.n <= kWilcoxonExactLimit) {
        // Average ranks are multiples of 1/2, so doubled ranks are integers.
        std::vector<int> twice(ranks.size());
        int total = 0;
        for (std::size_t i = 0; i < ranks.size(); ++i) {
            twice[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
            total += twice[i];
        }
        std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
        count[0] = 1.0;
        int reach = 0;
        for (int w : twice) {
            for (int s = reach; s >= 0; --s)
                if (count[static_cast<std::size_t>(s)] != 0.0)
                    count[static_cast<std::size_t>(s + w)] += count[static_cast<std::size_t>(s)];
            reach += w;
        }
        const int observed = static_cast<int>(std::lround(2.0 * v));
        double lower = 0.0, upper = 0.0;
        for (int s = 0; s <= total; ++s) {
            if (s <= observed) lower += count[static_cast<std::size_t>(s)];
            if (s >= observed) upper += count[static_cast<std::size_t>(s)];
        }
        const double all = std::ldexp(1.0, static_cast<int>(r.n));
        r.p_value = clamp01(2.0 * std::min(lower, upper) / all);
        r.method_note = "exact";
    } else {
        const double zc = sd > 0 ? std::max(std::abs(v - mu) - 0.5, 0.0) / sd : 0.0;
        r.p_value = normal_two_sided(zc);
        r.method_note = "normal approximation, tie and continuity corrected";
    }
    return r;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: lengths differ");
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least two points");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw UndefinedInput("correlation undefined for constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

TestResult spearman(std::span<const double> x, std::span<const double> y, bool exact_permutation) {
    if (x.size() != y.size()) throw std::invalid_argument("spearman: lengths differ");
    if (x.size() < 3) throw std::invalid_argument("spearman: need at least three points");
    const auto rx = average_ranks(x);
    auto ry = average_ranks(y);
    TestResult res;
    res.n = x.size();
    const double r = pearson(rx, ry);
    res.statistic = r;
    res.effect_size = r;

    if (exact_permutation) {
        if (res.n > kSpearmanExactLimit)
            throw std::invalid_argument("spearman: exact permutation limited to n <= 8");
        std::sort(ry.begin(), ry.end());
        std::size_t hits = 0, total = 0;
        do {
            ++total;
            if (std::abs(pearson(rx, ry)) >= std::abs(r) - 1e-12) ++hits;
        } while (std::next_permutation(ry.begin(), ry.end()));
        // next_permutation skips duplicate arrangements of tied ranks, which
        // are equally likely, so the ratio is unchanged.
        res.p_value = clamp01(static_cast<double>(hits) / static_cast<double>(total));
        res.method_note = "exact permutation";
        return res;
    }
    const double df = static_cast<double>(res.n) - 2.0;
    if (std::abs(r) >= 1.0) {
        res.p_value = 0.0;
    } else {
        const double t = r * std::sqrt(df / (1.0 - r * r));
        res.p_value = t_two_sided(t, df);
    }
    res.method_note = "t approximation, df=" + std::to_string(static_cast<int>(df));
    return res;
}

TostResult tost_equivalence(std::span<const double> group_a, std::span<const double> group_b,
                            double delta, double alpha) {
    if (group_a.size() < 2 || group_b.size() < 2)
        throw std::invalid_argument("tost_equivalence: each group needs at least two values");
    if (!(delta > 0.0)) throw std::invalid_argument("tost_equivalence: delta must be positive");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("tost_equivalence: alpha must be within (0, 1)");

    const auto na = static_cast<double>(group_a.size());
    const auto nb = static_cast<double>(group_b.size());
    TostResult r;
    r.df = na + nb - 2.0;
    r.mean_difference = mean(group_a) - mean(group_b);
    const double pooled_var =
        ((na - 1.0) * variance(group_a) + (nb - 1.0) * variance(group_b)) / r.df;
    r.pooled_sd = std::sqrt(pooled_var);
    if (r.pooled_sd == 0.0) {
        r.degenerate = true;
        return r;
    }
    const double se = r.pooled_sd * std::sqrt(1.0 / na + 1.0 / nb);
    const double bound = delta * r.pooled_sd;
    r.t_lower = (r.mean_difference + bound) / se;
    r.t_upper = (r.mean_difference - bound) / se;
    const boost::math::students_t_distribution<double> td(r.df);
    r.p_lower = clamp01(boost::math::cdf(boost::math::complement(td, r.t_lower)));
    r.p_upper = clamp01(boost::math::cdf(td, r.t_upper));
    r.equivalent = r.p_lower < alpha && r.p_upper < alpha;
    return r;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    // mt19937_64 output is fixed by the standard; the bounded draw is done
    // here because std distributions are implementation-defined.
    std::mt19937_64 gen(seed);
    auto bounded = [&](std::uint64_t bound) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do x = gen();
        while (x >= limit);
        return x % bound;
    };
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(bounded(i));
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

std::vector<std::vector<std::size_t>> latin_square_assign(std::size_t item_count,
                                                          std::size_t raters,
                                                          std::size_t per_rater,
                                                          std::uint64_t seed) {
    if (raters == 0) throw std::invalid_argument("latin_square_assign: need at least one rater");
    if (per_rater > item_count)
        throw std::invalid_argument("latin_square_assign: per_rater exceeds item count");
    std::vector<std::vector<std::size_t>> out(raters);
    if (per_rater == 0) return out;
    const auto order = seeded_permutation(item_count, seed);
    for (std::size_t r = 0; r < raters; ++r) {
        out[r].reserve(per_rater);
        for (std::size_t j = 0; j < per_rater; ++j)
            out[r].push_back(order[(r * per_rater + j) % item_count]);
    }
    return out;
}

}  // namespace clarify::stats
