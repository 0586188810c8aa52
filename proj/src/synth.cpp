#include "clarify/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <future>
#include <iterator>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "clarify/error.hpp"
#include "clarify/prompts.hpp"
#include "clarify/stats.hpp"

namespace clarify::synth {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string_view description(Characteristic c) {
    switch (c) {
        case Characteristic::Verbosity:
            return "long messages full of personal background and asides that are not needed "
                   "to solve the problem";
        case Characteristic::OverSpecification:
            return "non-essential specifics such as exact model numbers, dates or settings "
                   "mixed in with the actual problem";
        case Characteristic::UnderSpecification:
            return "too little information to tell which device, app or task is meant";
        case Characteristic::Incompleteness:
            return "the message trails off before the actual problem or question is stated";
    }
    return "";
}

std::string pad3(std::size_t n) {
    auto s = std::to_string(n);
    return s.size() < 3 ? std::string(3 - s.size(), '0') + s : s;
}

// Recognises "QUERY:", "PARAPHRASE:" and "TOPIC:" line prefixes.
enum class Field { None, Query, Paraphrase, Topic };

Field field_of(std::string_view line, std::string_view& rest) {
    auto t = trim(line);
    while (!t.empty() && (t.front() == '*' || t.front() == '#')) t.remove_prefix(1);
    t = trim(t);
    const auto colon = t.find(':');
    if (colon == std::string_view::npos) return Field::None;
    std::string key;
    for (char c : t.substr(0, colon))
        if (c != '*') key.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    rest = t.substr(colon + 1);
    if (key == "QUERY") return Field::Query;
    if (key == "PARAPHRASE" || key == "REPHRASED QUERY" || key == "REWRITE")
        return Field::Paraphrase;
    if (key == "TOPIC") return Field::Topic;
    return Field::None;
}

bool is_pair_header(std::string_view line) {
    auto t = trim(line);
    std::string up;
    for (char c : t.substr(0, 4)) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (up != "PAIR") return false;
    t.remove_prefix(4);
    t = trim(t);
    return !t.empty() && std::isdigit(static_cast<unsigned char>(t.front()));
}

}  // namespace

nlohmann::json to_json(const SyntheticPair& p) {
    return {{"kind", "synthetic_pair"},
            {"id", p.id},
            {"characteristic", to_string(p.characteristic)},
            {"styled_query", p.styled_query},
            {"rephrased_query", p.clarified_paraphrase},
            {"topic_tag", p.topic_tag},
            {"generation_meta",
             {{"model_tag", p.generation_meta.model_tag},
              {"template_version", p.generation_meta.template_version},
              {"seed_batch", p.generation_meta.seed_batch}}}};
}

SyntheticPair pair_from_json(const nlohmann::json& j) {
    SyntheticPair p;
    p.id = j.at("id").get<std::string>();
    p.characteristic = from_string<Characteristic>(j.at("characteristic").get<std::string>());
    p.styled_query = j.at("styled_query").get<std::string>();
    p.clarified_paraphrase = j.at("rephrased_query").get<std::string>();
    p.topic_tag = j.value("topic_tag", "");
    if (j.contains("generation_meta")) {
        const auto& m = j["generation_meta"];
        p.generation_meta = {m.value("model_tag", ""), m.value("template_version", ""),
                             m.value("seed_batch", "")};
    }
    if (trim(p.styled_query).empty() || trim(p.clarified_paraphrase).empty())
        throw std::invalid_argument("synthetic pair " + p.id + " has an empty text");
    return p;
}

std::vector<SyntheticPair> load_pairs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read " + path.string());
    std::vector<SyntheticPair> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            if (j.value("kind", "") != "synthetic_pair")
                throw std::invalid_argument("record is not a synthetic_pair");
            out.push_back(pair_from_json(j));
        } catch (const std::exception& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

void save_pairs(const std::filesystem::path& path, std::span<const SyntheticPair> pairs) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot write " + path.string());
    for (const auto& p : pairs) out << to_json(p).dump() << '\n';
}

std::string clean_generation(std::string_view text) {
    auto t = trim(text);
    auto strip = [&](std::string_view open, std::string_view close) {
        if (t.size() >= open.size() + close.size() && t.substr(0, open.size()) == open &&
            t.substr(t.size() - close.size()) == close) {
            t = trim(t.substr(open.size(), t.size() - open.size() - close.size()));
            return true;
        }
        return false;
    };
    while (strip("\"", "\"") || strip("'", "'") || strip("\xE2\x80\x9C", "\xE2\x80\x9D")) {
    }
    std::string out;
    bool space = false;
    for (char c : t) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = true;
            continue;
        }
        if (space && !out.empty()) out.push_back(' ');
        space = false;
        out.push_back(c);
    }
    return out;
}

ParsedGeneration parse_generation(std::string_view response) {
    ParsedGeneration out;
    std::string query, para, topic;
    Field current = Field::None;
    bool any = false;

    auto finish = [&] {
        if (any) {
            const auto q = clean_generation(query);
            const auto p = clean_generation(para);
            if (!q.empty() && !p.empty()) {
                out.pairs.push_back({q, p});
                out.topics.push_back(clean_generation(topic));
            } else {
                ++out.malformed;
            }
        }
        query.clear();
        para.clear();
        topic.clear();
        current = Field::None;
        any = false;
    };

    std::istringstream in{std::string(response)};
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty() || is_pair_header(line)) {
            finish();
            continue;
        }
        std::string_view rest;
        const auto f = field_of(line, rest);
        if (f == Field::Query && any) finish();
        if (f != Field::None) {
            current = f;
            any = true;
            auto& slot = f == Field::Query ? query : f == Field::Paraphrase ? para : topic;
            slot.append(rest);
            continue;
        }
        // Continuation of the previous field, or stray text.
        if (current == Field::Query) query += " " + line;
        else if (current == Field::Paraphrase) para += " " + line;
        else if (current == Field::Topic) topic += " " + line;
    }
    finish();
    return out;
}

GenerationResult generate(Characteristic characteristic, std::size_t count,
                          std::span<const ExamplePair> few_shot, ChatProvider& provider,
                          const GenerateOptions& options) {
    if (count == 0) throw std::invalid_argument("generate: count must be at least 1");
    if (few_shot.size() < 3) throw std::invalid_argument("generate: need at least three examples");
    if (options.max_per_call == 0) throw std::invalid_argument("generate: max_per_call is zero");

    std::string examples;
    for (std::size_t i = 0; i < few_shot.size(); ++i) {
        examples += "QUERY: " + few_shot[i].styled + "\nPARAPHRASE: " + few_shot[i].clarified;
        if (i + 1 < few_shot.size()) examples += "\n\n";
    }
    const auto prompts = load_prompt_set(options.template_version);
    const auto& tmpl = prompts.synthesize;
    const std::string name(to_string(characteristic));

    GenerationResult result;
    std::size_t retries_left = options.retry_cap;
    while (result.pairs.size() < count) {
        const std::size_t want = std::min(options.max_per_call, count - result.pairs.size());
        ++result.calls;
        ChatRequest req;
        req.key = {"synthesize", name + "#" + std::to_string(result.calls)};
        req.system_text = tmpl.system;
        req.user_text = render(tmpl.user, {{"characteristic", name},
                                           {"characteristic_description",
                                            std::string(description(characteristic))},
                                           {"examples", examples},
                                           {"count", std::to_string(want)}});
        // Some diversity helps here; the chain stays at temperature 0.
        req.params.temperature = 0.7;
        req.params.max_output_tokens =
            std::min(provider.limits().max_output_tokens, static_cast<int>(400 * want));

        std::size_t accepted = 0;
        try {
            const auto parsed = parse_generation(provider.complete(req));
            for (std::size_t i = 0; i < parsed.pairs.size() && accepted < want; ++i) {
                SyntheticPair p;
                p.id = name + "-" + pad3(result.pairs.size() + 1);
                p.characteristic = characteristic;
                p.styled_query = parsed.pairs[i].styled;
                p.clarified_paraphrase = parsed.pairs[i].clarified;
                p.topic_tag = parsed.topics[i];
                p.generation_meta = {provider.name(), options.template_version, options.seed_batch};
                result.pairs.push_back(std::move(p));
                ++accepted;
            }
            if (parsed.malformed > 0)
                result.warnings.push_back(name + " call " + std::to_string(result.calls) +
                                          ": dropped " + std::to_string(parsed.malformed) +
                                          " malformed pair(s)");
        } catch (const ProviderError& e) {
            if (e.kind() != ProviderErrorKind::Malformed) throw;
            result.warnings.push_back(name + " call " + std::to_string(result.calls) + ": " +
                                      e.what());
        }
        if (accepted < want && result.pairs.size() < count) {
            if (retries_left == 0) {
                result.warnings.push_back(name + ": retry cap reached with " +
                                          std::to_string(result.pairs.size()) + " of " +
                                          std::to_string(count) + " pairs");
                break;
            }
            --retries_left;
        }
    }
    return result;
}

std::map<Characteristic, std::size_t> reference_distribution() {
    return {{Characteristic::Verbosity, 120},
            {Characteristic::OverSpecification, 120},
            {Characteristic::UnderSpecification, 154},
            {Characteristic::Incompleteness, 120}};
}

GenerationResult generate_corpus(const std::map<Characteristic, std::size_t>& counts,
                                 const std::map<Characteristic, std::vector<ExamplePair>>& few_shot,
                                 ChatProvider& provider, const GenerateOptions& options) {
    std::vector<std::pair<Characteristic, std::future<GenerationResult>>> jobs;
    for (const auto& [c, n] : counts) {
        if (n == 0) continue;
        auto it = few_shot.find(c);
        if (it == few_shot.end())
            throw std::invalid_argument("generate_corpus: no examples for " +
                                        std::string(to_string(c)));
        const auto* examples = &it->second;
        jobs.emplace_back(c, std::async(std::launch::async, [&, c = c, n = n, examples] {
                              return generate(c, n, *examples, provider, options);
                          }));
    }
    GenerationResult all;
    for (auto& [c, job] : jobs) {
        auto r = job.get();
        all.calls += r.calls;
        std::move(r.pairs.begin(), r.pairs.end(), std::back_inserter(all.pairs));
        std::move(r.warnings.begin(), r.warnings.end(), std::back_inserter(all.warnings));
    }
    return all;
}

std::vector<SyntheticPair> dedupe(std::span<const SyntheticPair> pairs,
                                  EmbeddingProvider& embedder, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw std::invalid_argument("dedupe: threshold must be within (0, 1]");
    if (pairs.empty()) return {};
    std::vector<std::string> texts;
    texts.reserve(pairs.size());
    for (const auto& p : pairs) texts.push_back(p.styled_query);
    const auto vecs = embedder.embed(texts);

    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const bool dup = std::any_of(kept.begin(), kept.end(), [&](std::size_t j) {
            return metrics::cosine(vecs[i].values, vecs[j].values) >= threshold;
        });
        if (!dup) kept.push_back(i);
    }
    std::vector<SyntheticPair> out;
    out.reserve(kept.size());
    for (auto i : kept) out.push_back(pairs[i]);
    return out;
}

FidelityReport fidelity_from_embeddings(std::span<const std::vector<double>> real,
                                        std::span<const std::vector<double>> synth) {
    if (real.size() < 2 || synth.size() < 2)
        throw std::invalid_argument("fidelity: each corpus needs at least two texts");
    std::vector<std::vector<double>> pooled(real.begin(), real.end());
    pooled.insert(pooled.end(), synth.begin(), synth.end());
    const auto fit = pca(pooled, 2);

    FidelityReport r;
    r.explained_variance = fit.explained_variance;
    for (std::size_t i = 0; i < pooled.size(); ++i) {
        const Point2 p{fit.projections[i][0], fit.projections[i][1]};
        (i < real.size() ? r.projections_real : r.projections_synth).push_back(p);
    }
    auto centroid = [](const std::vector<Point2>& pts) {
        Point2 c;
        for (const auto& p : pts) {
            c.x += p.x;
            c.y += p.y;
        }
        c.x /= static_cast<double>(pts.size());
        c.y /= static_cast<double>(pts.size());
        return c;
    };
    const auto cr = centroid(r.projections_real);
    const auto cs = centroid(r.projections_synth);
    r.centroid_distance = std::hypot(cr.x - cs.x, cr.y - cs.y);

    double within = 0.0;
    for (const auto& p : r.projections_real) within += std::hypot(p.x - cr.x, p.y - cr.y);
    for (const auto& p : r.projections_synth) within += std::hypot(p.x - cs.x, p.y - cs.y);
    within /= static_cast<double>(pooled.size());
    if (r.centroid_distance == 0.0)
        r.spread_ratio = 0.0;
    else
        r.spread_ratio = within > 0.0 ? r.centroid_distance / within
                                      : std::numeric_limits<double>::infinity();
    return r;
}

FidelityReport fidelity(std::span<const std::string> real_texts,
                        std::span<const std::string> synth_texts, EmbeddingProvider& embedder) {
    if (real_texts.size() < 2 || synth_texts.size() < 2)
        throw std::invalid_argument("fidelity: each corpus needs at least two texts");
    std::vector<std::string> all(real_texts.begin(), real_texts.end());
    all.insert(all.end(), synth_texts.begin(), synth_texts.end());
    const auto vecs = embedder.embed(all);
    std::vector<std::vector<double>> real, synth;
    for (std::size_t i = 0; i < vecs.size(); ++i)
        (i < real_texts.size() ? real : synth).push_back(vecs[i].values);
    return fidelity_from_embeddings(real, synth);
}

std::string fidelity_points_tsv(const FidelityReport& report) {
    std::ostringstream os;
    os.precision(10);
    os << "group\tpc1\tpc2\n";
    for (const auto& p : report.projections_real) os << "real\t" << p.x << '\t' << p.y << '\n';
    for (const auto& p : report.projections_synth) os << "synthetic\t" << p.x << '\t' << p.y << '\n';
    return os.str();
}

std::string_view to_string(ReviewVerdict v) {
    switch (v) {
        case ReviewVerdict::Likely: return "likely";
        case ReviewVerdict::Possibly: return "possibly";
        case ReviewVerdict::Unlikely: return "unlikely";
    }
    return "?";
}

ReviewVerdict review_verdict_from_string(std::string_view s) {
    std::string low;
    for (char c : trim(s)) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (low == "likely") return ReviewVerdict::Likely;
    if (low == "possibly") return ReviewVerdict::Possibly;
    if (low == "unlikely") return ReviewVerdict::Unlikely;
    throw std::invalid_argument("unknown review verdict '" + std::string(s) + "'");
}

std::vector<ReviewItem> sample_for_review(std::span<const SyntheticPair> pairs, std::size_t n,
                                          std::uint64_t seed) {
    if (n > pairs.size())
        throw std::invalid_argument("sample_for_review: sample larger than the pair set");
    const auto order = stats::seeded_permutation(pairs.size(), seed);
    std::vector<ReviewItem> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back({i + 1, pairs[order[i]]});
    return out;
}

std::string review_sheet_tsv(std::span<const ReviewItem> sample) {
    auto flat = [](std::string s) {
        std::replace_if(s.begin(), s.end(), [](char c) { return c == '\t' || c == '\n' || c == '\r'; }, ' ');
        return s;
    };
    std::string out = "item\tpair_id\tcharacteristic\tstyled_query\tverdict\n";
    for (const auto& item : sample)
        out += std::to_string(item.position) + '\t' + item.pair.id + '\t' +
               std::string(to_string(item.pair.characteristic)) + '\t' +
               flat(item.pair.styled_query) + "\t\n";
    return out;
}

std::map<std::string, ReviewVerdict> parse_review_sheet(std::string_view tsv) {
    std::map<std::string, ReviewVerdict> out;
    std::istringstream in{std::string(tsv)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        if (line_no == 1 && line.rfind("item\t", 0) == 0) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, '\t')) cols.push_back(col);
        if (cols.size() < 2) throw ParseError("review row needs at least two columns", line_no);
        const auto& id = cols[1];
        if (cols.size() < 5 || trim(cols[4]).empty())
            throw ParseError("blank verdict for " + id, line_no);
        try {
            out[id] = review_verdict_from_string(cols[4]);
        } catch (const std::invalid_argument& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

double review_agreement(const std::map<std::string, ReviewVerdict>& rater_a,
                        const std::map<std::string, ReviewVerdict>& rater_b) {
    std::vector<std::string> a, b;
    for (const auto& [id, v] : rater_a) {
        auto it = rater_b.find(id);
        if (it == rater_b.end()) continue;
        a.emplace_back(to_string(v));
        b.emplace_back(to_string(it->second));
    }
    if (a.empty()) throw std::invalid_argument("review_agreement: no item rated by both sheets");
    return stats::cohen_kappa(a, b);
}

LexicalReport lexical_report(std::span<const SyntheticPair> pairs) {
    if (pairs.empty()) throw std::invalid_argument("lexical_report: no pairs");
    std::vector<std::string> styled, para;
    for (const auto& p : pairs) {
        styled.push_back(p.styled_query);
        para.push_back(p.clarified_paraphrase);
    }
    LexicalReport r;
    r.styled_ttr = metrics::ttr(styled);
    r.paraphrase_ttr = metrics::ttr(para);
    r.styled = metrics::token_stats(styled);
    r.paraphrase = metrics::token_stats(para);
    return r;
}

}  // namespace clarify::synth
