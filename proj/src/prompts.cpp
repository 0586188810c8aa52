#include "clarify/prompts.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace clarify {
namespace detail {
std::string_view builtin_prompt(std::string_view name);
}

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read prompt template " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

PromptTemplate builtin(std::string_view name) {
    const auto text = detail::builtin_prompt(name);
    if (text.empty()) throw std::logic_error("missing builtin prompt " + std::string(name));
    return parse_prompt_template(text);
}

}  // namespace

PromptTemplate parse_prompt_template(std::string_view text) {
    PromptTemplate t;
    constexpr std::string_view kSystem = "SYSTEM:";
    if (text.substr(0, kSystem.size()) != kSystem) {
        t.user = std::string(text);
        return t;
    }
    const auto sep = text.find("\n---\n");
    if (sep == std::string_view::npos)
        throw std::invalid_argument("prompt template has a SYSTEM block but no --- separator");
    auto system = text.substr(kSystem.size(), sep - kSystem.size());
    while (!system.empty() && (system.front() == '\n' || system.front() == ' '))
        system.remove_prefix(1);
    t.system = std::string(system);
    t.user = std::string(text.substr(sep + 5));
    return t;
}

const PromptSet& default_prompt_set() {
    static const PromptSet set = [] {
        PromptSet s;
        s.id = "default";
        s.questions = builtin("questions");
        s.paraphrase = builtin("paraphrase");
        s.solution = builtin("solution");
        s.lookup = builtin("lookup");
        s.synthesize = builtin("synthesize");
        return s;
    }();
    return set;
}

PromptSet load_prompt_set(std::string_view id) {
    if (id.empty() || id == "default") return default_prompt_set();
    const std::filesystem::path dir{std::string(id)};
    if (!std::filesystem::is_directory(dir))
        throw std::invalid_argument("prompt template set '" + std::string(id) +
                                    "' is neither 'default' nor a directory");
    PromptSet s;
    s.id = std::string(id);
    s.questions = parse_prompt_template(read_file(dir / "questions.txt"));
    s.paraphrase = parse_prompt_template(read_file(dir / "paraphrase.txt"));
    s.solution = parse_prompt_template(read_file(dir / "solution.txt"));
    s.lookup = parse_prompt_template(read_file(dir / "lookup.txt"));
    s.synthesize = parse_prompt_template(read_file(dir / "synthesize.txt"));
    return s;
}

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (true) {
        const auto open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        const auto close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        out.append(tmpl.substr(pos, open - pos));
        const std::string name(tmpl.substr(open + 2, close - open - 2));
        auto it = slots.find(name);
        if (it == slots.end())
            throw std::invalid_argument("prompt template slot '" + name + "' has no value");
        out += it->second;
        pos = close + 2;
    }
    return out;
}

}  // namespace clarify
