#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "clarify/app.hpp"
#include "clarify/error.hpp"
#include "clarify/metrics.hpp"
#include "clarify/stats.hpp"
#include "clarify/synth.hpp"

namespace clarify::app {
namespace {

std::string read_text(const std::string& path, std::istream& in) {
    if (path == "-") {
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::invalid_argument("cannot write " + path);
    f << text;
}

// Whitespace-separated rows; blank lines and '#' comments are skipped.
std::vector<std::vector<std::string>> read_rows(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::vector<std::string> cols;
        std::string c;
        while (ls >> c) cols.push_back(c);
        if (!cols.empty()) rows.push_back(std::move(cols));
    }
    return rows;
}

bool numeric(const std::string& s) {
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end != s.c_str() && *end == '\0';
}

double to_double(const std::string& s) {
    if (!numeric(s)) throw std::invalid_argument("not a number: '" + s + "'");
    return std::strtod(s.c_str(), nullptr);
}

bool to_bool(const std::string& s) {
    std::string l;
    for (char c : s) l.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (l == "1" || l == "true" || l == "yes" || l == "y") return true;
    if (l == "0" || l == "false" || l == "no" || l == "n") return false;
    throw std::invalid_argument("not a boolean: '" + s + "'");
}

// Rows with at least two columns, dropping a non-numeric header row when
// numbers are expected.
std::vector<std::pair<std::string, std::string>> two_columns(const std::string& text,
                                                             bool expect_numbers) {
    std::vector<std::pair<std::string, std::string>> out;
    const auto rows = read_rows(text);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() < 2) throw std::invalid_argument("row " + std::to_string(i + 1) + " has fewer than two columns");
        if (i == 0 && expect_numbers && !numeric(rows[i][0]) && !numeric(rows[i][1])) continue;
        out.emplace_back(rows[i][0], rows[i][1]);
    }
    return out;
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

struct Globals {
    std::string config_path;
    std::string mock_script;
    std::optional<std::uint64_t> seed;
    std::optional<double> threshold;
};

AppConfig resolve_config(const Globals& g) {
    AppConfig c = g.config_path.empty() ? AppConfig{} : AppConfig::load(g.config_path);
    if (g.config_path.empty()) c.provider.http.apply_environment();
    if (!g.mock_script.empty()) {
        c.provider.kind = "mock";
        c.provider.mock_script = g.mock_script;
    }
    if (g.seed) c.seed = *g.seed;
    if (g.threshold) c.chain.confidence_threshold = *g.threshold;
    c.provider.limits.parallelism = c.parallelism;
    c.validate();
    return c;
}

void print_session(const chain::Session& s, std::ostream& out) {
    if (!s.paraphrase) {
        out << "Paraphrase: (none)\n";
    } else {
        out << "Paraphrase:\n";
        for (std::size_t i = 0; i < s.paraphrase->questions.size(); ++i)
            out << "  " << i + 1 << ". " << s.paraphrase->questions[i] << '\n';
    }
    if (s.state == chain::State::Failed) {
        out << "Session failed: " << s.note << '\n';
        return;
    }
    out << "Solution:\n" << s.user_facing_text().value_or("") << '\n';
}

std::vector<metrics::TextPair> load_text_pairs(const std::string& text) {
    std::vector<metrics::TextPair> pairs;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            metrics::TextPair p;
            p.id = j.value("id", "pair" + std::to_string(pairs.size() + 1));
            p.candidate = j.at("candidate").get<std::string>();
            if (j.contains("references"))
                p.references = j["references"].get<std::vector<std::string>>();
            else
                p.references = {j.at("reference").get<std::string>()};
            pairs.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return pairs;
}

std::vector<synth::ExamplePair> examples_for(const std::string& text, Characteristic c) {
    std::vector<synth::ExamplePair> out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            if (j.value("kind", "") == "synthetic_pair") {
                const auto p = synth::pair_from_json(j);
                if (p.characteristic == c) out.push_back({p.styled_query, p.clarified_paraphrase});
            } else if (from_string<Characteristic>(j.at("characteristic").get<std::string>()) == c) {
                out.push_back({j.at("styled").get<std::string>(), j.at("clarified").get<std::string>()});
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

std::string pairs_ndjson(std::span<const synth::SyntheticPair> pairs) {
    std::string out;
    for (const auto& p : pairs) out += synth::to_json(p).dump() + "\n";
    return out;
}

}  // namespace

int cli_run(std::span<const std::string> argv, std::istream& in, std::ostream& out,
            std::ostream& err) {
    CLI::App app{"Clarification pipeline, metrics, statistics and synthetic data tools",
                 "clarify"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    Globals g;
    app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--mock-script", g.mock_script, "Replay responses from an NDJSON mock script")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed for every random choice");
    app.add_option("--threshold", g.threshold, "Confidence threshold for solutions")
        ->check(CLI::Range(0.0, 1.0));

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Validate a corpus and print its summary");
    std::string ingest_in, ingest_format = "ndjson", ingest_out;
    ingest->add_option("--in", ingest_in, "Corpus file")->required()->check(CLI::ExistingFile);
    ingest->add_option("--format", ingest_format, "ndjson or text")
        ->check(CLI::IsMember({"ndjson", "text"}));
    ingest->add_option("--out", ingest_out, "Write the normalized corpus here");

    // ask
    auto* ask = app.add_subcommand("ask", "Run the pipeline for one query");
    std::string ask_file, ask_text, ask_id = "q1", ask_device = "unknown";
    bool ask_interactive = false, ask_json = false;
    auto* ask_src = ask->add_option_group("query");
    ask_src->add_option("--query-file", ask_file, "File holding the query text")
        ->check(CLI::ExistingFile);
    ask_src->add_option("--query", ask_text, "Query text");
    ask_src->require_option(1);
    ask->add_option("--id", ask_id, "Query id (mock script key)");
    ask->add_option("--device", ask_device, "Device tag");
    ask->add_flag("--interactive", ask_interactive, "Answer follow-up questions on the terminal");
    ask->add_flag("--json", ask_json, "Print the session record instead of text");

    // batch
    auto* batch = app.add_subcommand("batch", "Run the pipeline over every query of a corpus");
    std::string batch_corpus, batch_answers = "corpus", batch_out;
    std::size_t batch_parallel = 0;
    batch->add_option("--corpus", batch_corpus, "Corpus NDJSON")->required()->check(CLI::ExistingFile);
    batch->add_option("--answers", batch_answers, "corpus or none")
        ->check(CLI::IsMember({"corpus", "none"}));
    batch->add_option("--out", batch_out, "Session NDJSON output")->required();
    batch->add_option("--parallel", batch_parallel, "Concurrent pipelines (default: config)");

    // eval
    auto* eval = app.add_subcommand("eval", "BLEU, ROUGE-L and cosine per candidate/reference pair");
    std::string eval_pairs, eval_out;
    bool eval_embed = false, eval_json = false;
    eval->add_option("--pairs", eval_pairs, "NDJSON with id, candidate, reference(s)")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--out", eval_out, "Report file (default stdout)");
    eval->add_flag("--embed", eval_embed, "Add embedding cosine via the provider");
    eval->add_flag("--json", eval_json, "NDJSON metric_report records instead of TSV");

    // stats
    auto* st = app.add_subcommand("stats", "Agreement and significance tests");
    st->require_subcommand(1);
    bool st_json = false;
    st->add_flag("--json", st_json, "Emit a test_result record");
    std::string st_in;
    auto* kappa = st->add_subcommand("kappa", "Cohen's kappa over two label columns");
    kappa->add_option("--in", st_in, "Rows: label_a label_b")->required();
    auto* mcn = st->add_subcommand("mcnemar", "McNemar test over paired booleans");
    bool mcn_continuity = false;
    mcn->add_option("--in", st_in, "Rows: a b (0/1)")->required();
    mcn->add_flag("--continuity", mcn_continuity, "Apply continuity correction");
    auto* wil = st->add_subcommand("wilcoxon", "Wilcoxon signed-rank test over paired values");
    wil->add_option("--in", st_in, "Rows: x y")->required();
    auto* spe = st->add_subcommand("spearman", "Spearman rank correlation");
    bool spe_exact = false;
    spe->add_option("--in", st_in, "Rows: x y")->required();
    spe->add_flag("--exact", spe_exact, "Exact permutation p (n <= 8)");
    auto* tost = st->add_subcommand("tost", "Two one-sided tests for equivalence");
    double tost_delta = 0.5, tost_alpha = 0.05;
    tost->add_option("--in", st_in, "Rows: group value (two groups)")->required();
    tost->add_option("--delta", tost_delta, "Standardized bound")->check(CLI::PositiveNumber);
    tost->add_option("--alpha", tost_alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
    auto* phi = st->add_subcommand("phi", "Effect size phi from a chi-square statistic");
    double phi_chi = 0.0;
    std::size_t phi_n = 0;
    phi->add_option("--chi-square", phi_chi, "Chi-square statistic")->required();
    phi->add_option("--n", phi_n, "Sample size")->required();
    auto* latin = st->add_subcommand("latin", "Balanced item assignment for raters");
    std::size_t latin_items = 0, latin_raters = 0, latin_per = 0;
    latin->add_option("--items", latin_items, "Item count")->required();
    latin->add_option("--raters", latin_raters, "Rater count")->required();
    latin->add_option("--per-rater", latin_per, "Items per rater")->required();

    // synth
    auto* sy = app.add_subcommand("synth", "Synthetic query/paraphrase pairs");
    sy->require_subcommand(1);
    auto* gen = sy->add_subcommand("generate", "Generate pairs with few-shot prompting");
    std::string gen_char = "all", gen_examples, gen_out;
    std::size_t gen_count = 0, gen_retry = 3;
    gen->add_option("--characteristic", gen_char, "Characteristic or 'all'");
    gen->add_option("--count", gen_count, "Pairs to generate (default: reference sizes)");
    gen->add_option("--examples", gen_examples, "Few-shot examples NDJSON")
        ->required()
        ->check(CLI::ExistingFile);
    gen->add_option("--retry-cap", gen_retry, "Short or malformed calls tolerated");
    gen->add_option("--out", gen_out, "Dataset NDJSON")->required();
    auto* dd = sy->add_subcommand("dedupe", "Drop near-duplicate styled queries");
    std::string dd_in, dd_out;
    double dd_threshold = 0.95;
    dd->add_option("--in", dd_in, "Dataset NDJSON")->required()->check(CLI::ExistingFile);
    dd->add_option("--out", dd_out, "Filtered dataset")->required();
    dd->add_option("--threshold", dd_threshold, "Cosine threshold")->check(CLI::Range(0.0, 1.0));
    auto* lex = sy->add_subcommand("lexical", "TTR and token statistics per side");
    std::string lex_in;
    lex->add_option("--in", lex_in, "Dataset NDJSON")->required()->check(CLI::ExistingFile);
    auto* sample = sy->add_subcommand("sample", "Review sheet for a seeded random sample");
    std::string sample_in, sample_out;
    std::size_t sample_n = 50;
    sample->add_option("--in", sample_in, "Dataset NDJSON")->required()->check(CLI::ExistingFile);
    sample->add_option("--n", sample_n, "Sample size");
    sample->add_option("--out", sample_out, "Sheet TSV (default stdout)");
    auto* agree = sy->add_subcommand("agreement", "Kappa between two completed review sheets");
    std::string agree_a, agree_b;
    agree->add_option("--a", agree_a, "First sheet")->required()->check(CLI::ExistingFile);
    agree->add_option("--b", agree_b, "Second sheet")->required()->check(CLI::ExistingFile);

    // fidelity
    auto* fid = app.add_subcommand("fidelity", "Pooled PCA of real and synthetic query embeddings");
    std::string fid_real, fid_synth, fid_points, fid_real_format = "ndjson";
    fid->add_option("--real", fid_real, "Real queries (corpus NDJSON or text)")
        ->required()
        ->check(CLI::ExistingFile);
    fid->add_option("--real-format", fid_real_format, "ndjson or text")
        ->check(CLI::IsMember({"ndjson", "text"}));
    fid->add_option("--synth", fid_synth, "Synthetic dataset NDJSON")
        ->required()
        ->check(CLI::ExistingFile);
    fid->add_option("--points", fid_points, "Plot-ready point file");

    // serve
    auto* srv = app.add_subcommand("serve", "Run the session HTTP service");
    std::string srv_address, srv_persist;
    int srv_port = -1;
    srv->add_option("--address", srv_address, "Bind address (default: config)");
    srv->add_option("--port", srv_port, "Port (default: config, 0 picks one)");
    srv->add_option("--persist", srv_persist, "Session NDJSON kept across restarts");

    std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (ingest->parsed()) {
            const auto store = CorpusStore::ingest(
                ingest_in, ingest_format == "text" ? CorpusFormat::PlainText : CorpusFormat::Ndjson);
            out << "records\t" << store.record_count() << '\n'
                << "queries\t" << store.queries().size() << '\n'
                << "conversations\t" << store.conversations().size() << '\n'
                << "solutions\t" << store.solutions().size() << '\n'
                << "ratings\t" << store.ratings().size() << '\n';
            for (const auto& [c, n] : store.label_histogram())
                out << "label:" << to_string(c) << '\t' << n << '\n';
            for (const auto& [q, n] : store.qtype_histogram())
                out << "qtype:" << to_string(q) << '\t' << n << '\n';
            if (!ingest_out.empty()) store.export_ndjson(ingest_out);
            return 0;
        }

        if (ask->parsed()) {
            const auto config = resolve_config(g);
            auto providers = make_providers(config);
            std::string text = ask_file.empty() ? ask_text : read_text(ask_file, in);
            const auto query = make_query(ask_id, text, ask_device);
            chain::AnswerSourceSpec spec;
            if (ask_interactive) {
                spec.kind = chain::AnswerSource::Interactive;
                spec.ask = [&](const chain::FollowUpQuestion& q) -> std::optional<std::string> {
                    out << "Question " << q.index << ": " << q.text << "\n> " << std::flush;
                    std::string line;
                    if (!std::getline(in, line)) return std::nullopt;
                    return line;
                };
            }
            const auto s = chain::run_pipeline(query, spec, config.chain, *providers.chat);
            if (ask_json)
                out << chain::to_json(s).dump() << '\n';
            else
                print_session(s, out);
            return s.state == chain::State::Failed ? 1 : 0;
        }

        if (batch->parsed()) {
            const auto config = resolve_config(g);
            auto providers = make_providers(config);
            const auto store = CorpusStore::ingest(batch_corpus);
            const auto& queries = store.queries();
            std::vector<std::string> lines(queries.size());
            std::vector<chain::State> states(queries.size());
            std::vector<std::string> warnings(queries.size());
            std::atomic<std::size_t> next{0};
            auto worker = [&] {
                for (auto i = next++; i < queries.size(); i = next++) {
                    chain::AnswerSourceSpec spec;
                    if (batch_answers == "corpus") {
                        if (const auto* conv = store.find_conversation(queries[i].id)) {
                            spec.kind = chain::AnswerSource::Corpus;
                            spec.conversation = conv;
                        } else {
                            warnings[i] = "no conversation for " + queries[i].id +
                                          "; follow-up answers are unknown";
                        }
                    }
                    const auto s =
                        chain::run_pipeline(queries[i], spec, config.chain, *providers.chat);
                    states[i] = s.state;
                    lines[i] = chain::to_json(s).dump() + "\n";
                }
            };
            const std::size_t threads = std::max<std::size_t>(
                1, std::min(batch_parallel ? batch_parallel : config.parallelism, queries.size()));
            std::vector<std::thread> pool;
            for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();

            std::string all;
            for (const auto& l : lines) all += l;
            write_text(batch_out, all, out);
            for (const auto& w : warnings)
                if (!w.empty()) err << "warning: " << w << '\n';
            std::map<chain::State, std::size_t> counts;
            for (auto s : states) ++counts[s];
            out << "sessions\t" << queries.size() << '\n';
            for (const auto& [s, n] : counts) out << chain::to_string(s) << '\t' << n << '\n';
            return 0;
        }

        if (eval->parsed()) {
            const auto pairs = load_text_pairs(read_text(eval_pairs, in));
            std::optional<Providers> providers;
            if (eval_embed) providers = make_providers(resolve_config(g));
            const auto reports =
                metrics::evaluate(pairs, providers ? providers->embedder.get() : nullptr);
            std::string text;
            if (eval_json) {
                for (const auto& r : reports) text += metrics::to_json(r).dump() + "\n";
            } else {
                text = metrics::to_tsv(reports);
            }
            write_text(eval_out, text, out);
            return 0;
        }

        if (st->parsed()) {
            auto emit = [&](const std::string& name, const stats::TestResult& r) {
                if (st_json)
                    out << stats::to_json(r, name).dump() << '\n';
                else
                    out << stats::format_table({{name, r}});
            };
            if (kappa->parsed()) {
                std::vector<std::string> a, b;
                for (auto& [x, y] : two_columns(read_text(st_in, in), false)) {
                    a.push_back(x);
                    b.push_back(y);
                }
                const double k = stats::cohen_kappa(a, b);
                if (st_json)
                    out << nlohmann::json{{"kind", "test_result"}, {"test", "kappa"},
                                          {"statistic", k}, {"n", a.size()}}
                               .dump()
                        << '\n';
                else
                    out << "kappa\t" << fixed(k) << "\nn\t" << a.size() << '\n';
                return 0;
            }
            if (mcn->parsed()) {
                std::vector<std::pair<bool, bool>> pairs;
                const auto rows = read_rows(read_text(st_in, in));
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    if (rows[i].size() < 2) throw std::invalid_argument("row needs two columns");
                    if (i == 0 && !numeric(rows[i][0])) {
                        try {
                            to_bool(rows[i][0]);
                        } catch (const std::invalid_argument&) {
                            continue;  // header
                        }
                    }
                    pairs.emplace_back(to_bool(rows[i][0]), to_bool(rows[i][1]));
                }
                emit("mcnemar", stats::mcnemar(pairs, mcn_continuity));
                return 0;
            }
            if (wil->parsed() || spe->parsed()) {
                std::vector<double> x, y;
                std::vector<std::pair<double, double>> xy;
                for (auto& [a, b] : two_columns(read_text(st_in, in), true)) {
                    x.push_back(to_double(a));
                    y.push_back(to_double(b));
                    xy.emplace_back(x.back(), y.back());
                }
                if (wil->parsed())
                    emit("wilcoxon", stats::wilcoxon_signed_rank(xy));
                else
                    emit("spearman", stats::spearman(x, y, spe_exact));
                return 0;
            }
            if (tost->parsed()) {
                std::map<std::string, std::vector<double>> groups;
                std::vector<std::string> order;
                for (auto& [label, v] : two_columns(read_text(st_in, in), true)) {
                    if (!groups.count(label)) order.push_back(label);
                    groups[label].push_back(to_double(v));
                }
                if (order.size() != 2)
                    throw std::invalid_argument("tost needs exactly two groups, got " +
                                                std::to_string(order.size()));
                const auto r =
                    stats::tost_equivalence(groups[order[0]], groups[order[1]], tost_delta, tost_alpha);
                if (st_json) {
                    out << nlohmann::json{{"kind", "test_result"},    {"test", "tost"},
                                          {"mean_difference", r.mean_difference},
                                          {"pooled_sd", r.pooled_sd}, {"t_lower", r.t_lower},
                                          {"t_upper", r.t_upper},     {"df", r.df},
                                          {"p_lower", r.p_lower},     {"p_upper", r.p_upper},
                                          {"equivalent", r.equivalent},
                                          {"degenerate", r.degenerate}}
                               .dump()
                        << '\n';
                } else {
                    out << "mean_difference\t" << fixed(r.mean_difference) << '\n'
                        << "pooled_sd\t" << fixed(r.pooled_sd) << '\n'
                        << "t_lower\t" << fixed(r.t_lower) << "\tp_lower\t" << fixed(r.p_lower) << '\n'
                        << "t_upper\t" << fixed(r.t_upper) << "\tp_upper\t" << fixed(r.p_upper) << '\n'
                        << "df\t" << fixed(r.df, 0) << '\n'
                        << "equivalent\t" << (r.equivalent ? "yes" : "no")
                        << (r.degenerate ? " (degenerate: zero pooled variance)" : "") << '\n';
                }
                return 0;
            }
            if (phi->parsed()) {
                out << "phi\t" << fixed(stats::phi_from_chi_square(phi_chi, phi_n)) << '\n';
                return 0;
            }
            if (latin->parsed()) {
                const auto seed = g.seed.value_or(0);
                const auto plan = stats::latin_square_assign(latin_items, latin_raters, latin_per, seed);
                std::vector<std::size_t> exposure(latin_items, 0);
                out << "rater\titems\n";
                for (std::size_t r = 0; r < plan.size(); ++r) {
                    out << r + 1 << '\t';
                    for (std::size_t j = 0; j < plan[r].size(); ++j) {
                        out << (j ? "," : "") << plan[r][j] + 1;
                        ++exposure[plan[r][j]];
                    }
                    out << '\n';
                }
                if (!exposure.empty()) {
                    const auto [lo, hi] = std::minmax_element(exposure.begin(), exposure.end());
                    out << "# exposure min " << *lo << " max " << *hi << '\n';
                }
                return 0;
            }
        }

        if (sy->parsed()) {
            if (gen->parsed()) {
                const auto config = resolve_config(g);
                auto providers = make_providers(config);
                const auto examples_text = read_text(gen_examples, in);
                std::map<Characteristic, std::size_t> counts;
                if (gen_char == "all") {
                    counts = synth::reference_distribution();
                    if (gen_count)
                        for (auto& [c, n] : counts) n = gen_count;
                } else {
                    counts[from_string<Characteristic>(gen_char)] =
                        gen_count ? gen_count : synth::reference_distribution().at(
                                                    from_string<Characteristic>(gen_char));
                }
                std::map<Characteristic, std::vector<synth::ExamplePair>> few_shot;
                for (const auto& [c, n] : counts) few_shot[c] = examples_for(examples_text, c);
                synth::GenerateOptions opts;
                opts.retry_cap = gen_retry;
                opts.template_version = config.chain.prompt_template_set;
                opts.seed_batch = std::to_string(config.seed);
                const auto result = synth::generate_corpus(counts, few_shot, *providers.chat, opts);
                for (const auto& w : result.warnings) err << "warning: " << w << '\n';
                write_text(gen_out, pairs_ndjson(result.pairs), out);
                out << "pairs\t" << result.pairs.size() << "\ncalls\t" << result.calls << '\n';
                return 0;
            }
            if (dd->parsed()) {
                auto providers = make_providers(resolve_config(g));
                const auto pairs = synth::load_pairs(dd_in);
                const auto kept = synth::dedupe(pairs, *providers.embedder, dd_threshold);
                write_text(dd_out, pairs_ndjson(kept), out);
                out << "kept\t" << kept.size() << "\nremoved\t" << pairs.size() - kept.size() << '\n';
                return 0;
            }
            if (lex->parsed()) {
                const auto r = synth::lexical_report(synth::load_pairs(lex_in));
                out << "side\tttr\tmean_tokens\tmin\tmax\n"
                    << "styled\t" << fixed(r.styled_ttr, 3) << '\t' << fixed(r.styled.mean, 2) << '\t'
                    << r.styled.min << '\t' << r.styled.max << '\n'
                    << "paraphrase\t" << fixed(r.paraphrase_ttr, 3) << '\t'
                    << fixed(r.paraphrase.mean, 2) << '\t' << r.paraphrase.min << '\t'
                    << r.paraphrase.max << '\n';
                return 0;
            }
            if (sample->parsed()) {
                const auto pairs = synth::load_pairs(sample_in);
                const auto items = synth::sample_for_review(pairs, sample_n, g.seed.value_or(0));
                write_text(sample_out, synth::review_sheet_tsv(items), out);
                return 0;
            }
            if (agree->parsed()) {
                const auto a = synth::parse_review_sheet(read_text(agree_a, in));
                const auto b = synth::parse_review_sheet(read_text(agree_b, in));
                out << "kappa\t" << fixed(synth::review_agreement(a, b)) << '\n';
                return 0;
            }
        }

        if (fid->parsed()) {
            auto providers = make_providers(resolve_config(g));
            std::vector<std::string> real;
            const auto store = CorpusStore::ingest(
                fid_real, fid_real_format == "text" ? CorpusFormat::PlainText : CorpusFormat::Ndjson);
            for (const auto& q : store.queries()) real.push_back(q.text);
            std::vector<std::string> synthetic;
            for (const auto& p : synth::load_pairs(fid_synth)) synthetic.push_back(p.styled_query);
            const auto r = synth::fidelity(real, synthetic, *providers.embedder);
            out << "real\t" << real.size() << "\nsynthetic\t" << synthetic.size() << '\n'
                << "explained_variance\t" << fixed(r.explained_variance[0]) << ','
                << fixed(r.explained_variance[1]) << '\n'
                << "centroid_distance\t" << fixed(r.centroid_distance) << '\n'
                << "spread_ratio\t" << fixed(r.spread_ratio) << '\n';
            if (!fid_points.empty()) write_text(fid_points, synth::fidelity_points_tsv(r), out);
            return 0;
        }

        if (srv->parsed()) {
            auto config = resolve_config(g);
            auto providers = make_providers(config);
            std::optional<std::filesystem::path> persist;
            if (!srv_persist.empty()) persist = srv_persist;
            SessionService service(config.chain, *providers.chat, persist);
            const auto address = srv_address.empty() ? config.bind_address : srv_address;
            const int port = srv_port >= 0 ? srv_port : config.port;
            const int rc = serve(service, address, port, [&](int bound) {
                out << "listening on http://" << address << ':' << bound << std::endl;
            });
            if (rc != 0) err << "error: cannot bind " << address << ':' << port << '\n';
            return rc;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace clarify::app
