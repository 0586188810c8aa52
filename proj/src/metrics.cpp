#include "clarify/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "clarify/error.hpp"
#include "clarify/provider.hpp"

namespace clarify::metrics {
namespace {

constexpr char32_t kInvalid = 0xFFFFFFFF;

// Decodes one code point starting at i and advances i. Malformed sequences
// consume a single byte and yield kInvalid.
char32_t next_code_point(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return kInvalid;
    }
    if (i + len > s.size()) {
        ++i;
        return kInvalid;
    }
    for (int k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) {
            ++i;
            return kInvalid;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    // Overlong encodings and surrogates.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
        ++i;
        return kInvalid;
    }
    i += len;
    return cp;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

char32_t to_lower(char32_t c) {
    if (c >= 'A' && c <= 'Z') return c + 32;
    if (c < 0x80) return c;
    if ((c >= 0xC0 && c <= 0xDE) && c != 0xD7) return c + 32;
    if (c >= 0x100 && c <= 0x137) return (c % 2 == 0) ? c + 1 : c;
    if (c >= 0x139 && c <= 0x148) return (c % 2 == 1) ? c + 1 : c;
    if (c >= 0x14A && c <= 0x177) return (c % 2 == 0) ? c + 1 : c;
    if (c == 0x178) return 0xFF;
    if (c >= 0x179 && c <= 0x17E) return (c % 2 == 1) ? c + 1 : c;
    if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 32;
    if (c >= 0x410 && c <= 0x42F) return c + 32;
    if (c >= 0x400 && c <= 0x40F) return c + 80;
    return c;
}

enum class CharClass { Word, Space, Apostrophe, Hyphen, Separator, Ignorable };

CharClass classify(char32_t c) {
    if (c == kInvalid) return CharClass::Separator;
    if (c < 0x80) {
        if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9'))
            return CharClass::Word;
        if (c == ' ' || (c >= 0x09 && c <= 0x0D)) return CharClass::Space;
        if (c == '\'') return CharClass::Apostrophe;
        if (c == '-') return CharClass::Hyphen;
        if (c < 0x20 || c == 0x7F) return CharClass::Space;
        return CharClass::Separator;
    }
    if (c == 0x2019 || c == 0x02BC) return CharClass::Apostrophe;
    if (c == 0x2010 || c == 0x2011) return CharClass::Hyphen;
    if (c == 0x85 || c == 0xA0 || c == 0x1680 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 ||
        c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000)
        return CharClass::Space;
    if (c == 0x200B || c == 0x200C || c == 0x200D || c == 0x2060 || c == 0xFEFF ||
        (c >= 0xFE00 && c <= 0xFE0F) || c == 0xAD)
        return CharClass::Ignorable;
    if (c < 0xA0) return CharClass::Space;  // C1 controls
    if ((c >= 0xA1 && c <= 0xBF && c != 0xAA && c != 0xB5 && c != 0xBA) || c == 0xD7 ||
        c == 0xF7)
        return CharClass::Separator;
    if ((c >= 0x2010 && c <= 0x2BFF) || (c >= 0x2E00 && c <= 0x2E7F) ||
        (c >= 0x3001 && c <= 0x303F) || (c >= 0xFE10 && c <= 0xFE6F) ||
        (c >= 0xFF01 && c <= 0xFF0F) || (c >= 0xFF1A && c <= 0xFF20) ||
        (c >= 0xFF3B && c <= 0xFF40) || (c >= 0xFF5B && c <= 0xFF65) ||
        (c >= 0x1F000 && c <= 0x1FAFF))
        return CharClass::Separator;
    return CharClass::Word;
}

std::string join_ngram(std::span<const std::string> tokens, std::size_t start, std::size_t n) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) {
        if (k) key.push_back('\x1f');
        key += tokens[start + k];
    }
    return key;
}

std::unordered_map<std::string, std::size_t> ngram_counts(std::span<const std::string> tokens,
                                                          std::size_t n) {
    std::unordered_map<std::string, std::size_t> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++counts[join_ngram(tokens, i, n)];
    return counts;
}

}  // namespace

TokenSequence tokenize(std::string_view text) {
    struct Cp {
        char32_t c;
        CharClass cls;
    };
    std::vector<Cp> cps;
    cps.reserve(text.size());
    for (std::size_t i = 0; i < text.size();) {
        char32_t c = next_code_point(text, i);
        auto cls = classify(c);
        if (cls == CharClass::Ignorable) continue;
        if (cls == CharClass::Apostrophe) c = '\'';
        if (cls == CharClass::Hyphen) c = '-';
        cps.push_back({to_lower(c), cls});
    }

    TokenSequence out;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) out.tokens.push_back(std::move(current));
        current.clear();
    };
    for (std::size_t i = 0; i < cps.size(); ++i) {
        switch (cps[i].cls) {
            case CharClass::Word:
                append_utf8(current, cps[i].c);
                break;
            case CharClass::Apostrophe:
            case CharClass::Hyphen: {
                const bool inner = i > 0 && i + 1 < cps.size() &&
                                   cps[i - 1].cls == CharClass::Word &&
                                   cps[i + 1].cls == CharClass::Word;
                if (inner)
                    current.push_back(static_cast<char>(cps[i].c));
                else
                    flush();
                break;
            }
            default:
                flush();
        }
    }
    flush();
    return out;
}

BleuResult bleu(const TokenSequence& candidate, std::span<const TokenSequence> references,
                std::size_t max_n, BleuSmoothing smoothing) {
    if (references.empty()) throw std::invalid_argument("bleu: at least one reference required");
    if (max_n == 0) throw std::invalid_argument("bleu: max_n must be positive");

    BleuResult result;
    const std::size_t c = candidate.size();
    result.candidate_length = c;
    if (c == 0) {
        result.empty_candidate = true;
        return result;
    }

    // Closest reference length; ties go to the shorter reference.
    std::size_t r = references.front().size();
    for (const auto& ref : references) {
        const auto d = ref.size() > c ? ref.size() - c : c - ref.size();
        const auto best = r > c ? r - c : c - r;
        if (d < best || (d == best && ref.size() < r)) r = ref.size();
    }
    result.reference_length = r;
    result.brevity_penalty =
        c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;

    const std::size_t orders = std::min(max_n, c);
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= orders; ++n) {
        const auto cand = ngram_counts(candidate.tokens, n);
        std::unordered_map<std::string, std::size_t> max_ref;
        for (const auto& ref : references) {
            for (const auto& [g, cnt] : ngram_counts(ref.tokens, n)) {
                auto& m = max_ref[g];
                m = std::max(m, cnt);
            }
        }
        std::size_t matched = 0;
        for (const auto& [g, cnt] : cand) {
            auto it = max_ref.find(g);
            if (it != max_ref.end()) matched += std::min(cnt, it->second);
        }
        const std::size_t total = c - n + 1;

        if (n == 1 && matched == 0) {
            result.precisions.assign(orders, 0.0);
            result.score = 0.0;
            return result;
        }

        double p = 0.0;
        if (matched > 0) {
            if (smoothing == BleuSmoothing::AddOne && n >= 2)
                p = (matched + 1.0) / (total + 1.0);
            else
                p = static_cast<double>(matched) / static_cast<double>(total);
        } else {
            switch (smoothing) {
                case BleuSmoothing::None:
                    p = 0.0;
                    break;
                case BleuSmoothing::Epsilon:
                    p = kBleuEpsilon / static_cast<double>(total);
                    break;
                case BleuSmoothing::AddOne:
                    p = 1.0 / (total + 1.0);
                    break;
            }
        }
        result.precisions.push_back(p);
        if (p == 0.0) {
            result.score = 0.0;
            // Remaining orders are still reported for diagnostics.
            for (std::size_t m = n + 1; m <= orders; ++m) result.precisions.push_back(0.0);
            return result;
        }
        log_sum += std::log(p);
    }
    result.score = result.brevity_penalty * std::exp(log_sum / static_cast<double>(orders));
    result.score = std::clamp(result.score, 0.0, 1.0);
    return result;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

RougeL rouge_l(const TokenSequence& candidate, const TokenSequence& reference) {
    RougeL out;
    if (candidate.empty() || reference.empty()) {
        out.empty_input = true;
        return out;
    }
    const double l = static_cast<double>(lcs_length(candidate.tokens, reference.tokens));
    out.precision = l / static_cast<double>(candidate.size());
    out.recall = l / static_cast<double>(reference.size());
    out.f = (out.precision + out.recall) > 0.0
                ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                : 0.0;
    return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine: dimension mismatch (" + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + ")");
    if (a.empty()) throw UndefinedInput("cosine: empty vectors");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw UndefinedInput("cosine: zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double semantic_similarity(std::string_view text_a, std::string_view text_b,
                           EmbeddingProvider& embedder) {
    const std::pair<std::string, std::string> pair{std::string(text_a), std::string(text_b)};
    return semantic_similarity(std::span(&pair, 1), embedder).front();
}

std::vector<double> semantic_similarity(
    std::span<const std::pair<std::string, std::string>> pairs, EmbeddingProvider& embedder) {
    if (pairs.empty()) return {};
    std::vector<std::string> texts;
    texts.reserve(pairs.size() * 2);
    for (const auto& [a, b] : pairs) {
        if (a.empty() || b.empty())
            throw std::invalid_argument("semantic_similarity: empty text");
        texts.push_back(a);
        texts.push_back(b);
    }
    const auto vecs = embedder.embed(texts);
    std::vector<double> out;
    out.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i)
        out.push_back(cosine(vecs[2 * i].values, vecs[2 * i + 1].values));
    return out;
}

double ttr(std::span<const std::string> texts) {
    std::unordered_set<std::string> types;
    std::size_t total = 0;
    for (const auto& t : texts) {
        auto seq = tokenize(t);
        total += seq.size();
        for (auto& tok : seq.tokens) types.insert(std::move(tok));
    }
    if (total == 0) throw UndefinedInput("ttr: no tokens");
    return static_cast<double>(types.size()) / static_cast<double>(total);
}

TokenStats token_stats(std::span<const std::string> texts) {
    if (texts.empty()) throw std::invalid_argument("token_stats: no texts");
    TokenStats s;
    s.counts.reserve(texts.size());
    std::size_t sum = 0;
    for (const auto& t : texts) {
        const auto n = tokenize(t).size();
        s.counts.push_back(n);
        sum += n;
    }
    s.min = *std::min_element(s.counts.begin(), s.counts.end());
    s.max = *std::max_element(s.counts.begin(), s.counts.end());
    s.mean = static_cast<double>(sum) / static_cast<double>(texts.size());
    return s;
}

std::vector<MetricReport> evaluate(std::span<const TextPair> pairs, EmbeddingProvider* embedder) {
    std::vector<MetricReport> reports;
    reports.reserve(pairs.size());
    for (const auto& p : pairs) {
        if (p.references.empty())
            throw std::invalid_argument("evaluate: pair '" + p.id + "' has no reference");
        MetricReport r;
        r.pair_id = p.id;
        const auto cand = tokenize(p.candidate);
        std::vector<TokenSequence> refs;
        for (const auto& ref : p.references) refs.push_back(tokenize(ref));
        const auto b = bleu(cand, refs);
        r.bleu = b.score;
        if (b.empty_candidate) r.notes.emplace_back("empty candidate");
        r.rouge_l = rouge_l(cand, refs.front());
        if (r.rouge_l.empty_input) r.notes.emplace_back("empty rouge input");
        reports.push_back(std::move(r));
    }
    if (embedder) {
        std::vector<std::pair<std::string, std::string>> texts;
        std::vector<std::size_t> which;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (pairs[i].candidate.empty() || pairs[i].references.front().empty()) {
                reports[i].notes.emplace_back("cosine skipped: empty text");
                continue;
            }
            texts.emplace_back(pairs[i].candidate, pairs[i].references.front());
            which.push_back(i);
        }
        const auto sims = semantic_similarity(texts, *embedder);
        for (std::size_t k = 0; k < which.size(); ++k) reports[which[k]].cosine = sims[k];
    }
    return reports;
}

std::string to_tsv(std::span<const MetricReport> reports) {
    std::ostringstream os;
    os << "pair_id\tbleu\trouge_p\trouge_r\trouge_f\tcosine\n";
    os << std::fixed << std::setprecision(6);
    for (const auto& r : reports) {
        os << r.pair_id << '\t' << r.bleu << '\t' << r.rouge_l.precision << '\t'
           << r.rouge_l.recall << '\t' << r.rouge_l.f << '\t';
        if (r.cosine)
            os << *r.cosine;
        else
            os << "NA";
        os << '\n';
    }
    return os.str();
}

nlohmann::json to_json(const MetricReport& report) {
    nlohmann::json j{{"kind", "metric_report"},
                     {"pair_id", report.pair_id},
                     {"bleu", report.bleu},
                     {"rouge_p", report.rouge_l.precision},
                     {"rouge_r", report.rouge_l.recall},
                     {"rouge_f", report.rouge_l.f},
                     {"notes", report.notes}};
    j["cosine"] = report.cosine ? nlohmann::json(*report.cosine) : nlohmann::json(nullptr);
    return j;
}

}  // namespace clarify::metrics
