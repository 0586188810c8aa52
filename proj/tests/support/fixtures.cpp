#include "support/fixtures.hpp"

#include <atomic>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

namespace fixture {
namespace {

const std::vector<std::string> kDevices{"phone", "tablet", "laptop", "smart_tv"};

const std::vector<std::string> kProblems{
    "my email will not send the pictures",
    "the screen keeps going dark while I read",
    "I cannot find where the downloaded file went",
    "the sound stopped working after the update",
    "my password is not accepted anymore",
    "the printer says it is offline",
    "the video call drops after a minute",
    "my contacts disappeared from the list",
    "the wifi keeps asking for a password",
    "the font got very small all of a sudden",
    "the app closes by itself when I open it",
    "I get a message saying storage is full",
};

std::string two(std::size_t n) { return (n < 10 ? "0" : "") + std::to_string(n); }

nlohmann::json line(const std::string& stage, const std::string& qid, const std::string& response) {
    return {{"stage", stage}, {"query_id", qid}, {"response", response}};
}

}  // namespace

const char* const kVerbosityQuery =
    "Well my daughter got me this tablet for my birthday last spring and I do love it for the "
    "grandkids pictures, but every time I go to put my photos on Facebook the tablet just "
    "freezes up and nothing I press does anything, so I have to wait or turn it off, it has "
    "been like this for weeks now.";

TempDir::TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("clarify-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::filesystem::path TempDir::write(const std::string& name, const std::string& content) const {
    const auto p = path_ / name;
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
}

clarify::ProviderLimits fast_limits(int attempts) {
    clarify::ProviderLimits l;
    l.retry.max_attempts = attempts;
    l.sleep = [](std::chrono::milliseconds) {};
    return l;
}

std::string study_corpus_ndjson() {
    std::string out;
    for (std::size_t i = 1; i <= 57; ++i) {
        const auto id = "q" + two(i);
        const auto& problem = kProblems[i % kProblems.size()];
        std::string text = "Hello, " + problem + " on my " + kDevices[i % kDevices.size()] +
                           " and I do not know what to do";
        if (i <= 9) text += ", my son set it up years ago and he is away now, I tried the "
                            "buttons on the side and waited a long time but nothing changed";
        nlohmann::json q{{"kind", "query"},     {"id", id},
                         {"text", text},        {"device", kDevices[i % kDevices.size()]},
                         {"source", "diary"},   {"has_screenshot", i % 6 == 0}};
        if (i % 3 == 0) q["app"] = "Mail";
        out += q.dump() + "\n";
    }
    auto label = [&](std::size_t i, const char* c) {
        out += nlohmann::json{{"kind", "label"}, {"query_id", "q" + two(i)}, {"characteristic", c}}
                   .dump() +
               "\n";
    };
    std::size_t i = 1;
    for (int k = 0; k < 9; ++k) label(i++, "verbosity");
    for (int k = 0; k < 12; ++k) label(i++, "over_specification");
    for (int k = 0; k < 13; ++k) label(i++, "under_specification");
    for (int k = 0; k < 23; ++k) label(i++, "incompleteness");
    label(1, "incompleteness");
    const char* qtypes[] = {"validation", "directed_informational", "undirected_informational",
                            "navigational", "conceptual"};
    for (std::size_t q = 1; q <= 57; ++q)
        out += nlohmann::json{{"kind", "qtype"},
                              {"query_id", "q" + two(q)},
                              {"qtype", qtypes[q % 5]},
                              {"rater_id", "r1"}}
                   .dump() +
               "\n";
    return out;
}

std::string batch_corpus_ndjson() {
    std::string out;
    for (std::size_t i = 1; i <= 48; ++i) {
        const auto id = "b" + two(i);
        const auto& device = kDevices[i % kDevices.size()];
        out += nlohmann::json{{"kind", "query"},
                              {"id", id},
                              {"text", "Something is wrong, " + kProblems[i % kProblems.size()]},
                              {"device", device},
                              {"source", "diary"}}
                   .dump() +
               "\n";
    }
    for (std::size_t i = 1; i <= 48; ++i) {
        const auto id = "b" + two(i);
        nlohmann::json messages = nlohmann::json::array();
        messages.push_back({{"role", "seeker"},
                            {"text", "It is my " + kDevices[i % kDevices.size()] + "."},
                            {"timestamp", "2024-03-0" + std::to_string(1 + i % 9) + "T10:00:00Z"}});
        messages.push_back({{"role", "helper"},
                            {"text", "Which app were you using?"},
                            {"timestamp", "2024-03-0" + std::to_string(1 + i % 9) + "T10:05:00Z"}});
        messages.push_back({{"role", "seeker"},
                            {"text", "The one with the blue envelope."},
                            {"timestamp", "2024-03-0" + std::to_string(1 + i % 9) + "T10:09:30+00:00"}});
        out += nlohmann::json{{"kind", "conversation"},
                              {"query_id", id},
                              {"messages", messages},
                              {"resolved", i % 2 == 0}}
                   .dump() +
               "\n";
    }
    return out;
}

std::string batch_script_ndjson() {
    std::string out;
    for (std::size_t i = 1; i <= 48; ++i) {
        const auto id = "b" + two(i);
        std::string questions;
        switch (i % 6) {
            case 0: questions = "QUESTIONS: NONE"; break;
            case 1: questions = "QUESTIONS:\n1. Which device are you using?"; break;
            case 2:
                questions = "Here is what I need.\nQUESTIONS:\n1. Which device?\n2. Which app?";
                break;
            case 3:
                questions =
                    "QUESTIONS:\n1. Which device?\n2. Which app?\n3. What did you tap?\n"
                    "4. When did it start?\n5. Any error text?";
                break;
            case 4: questions = "QUESTIONS:\n- Which app is it?\n- What do you see?"; break;
            case 5: questions = "No further context needed."; break;
        }
        out += line("questions", id, questions).dump() + "\n";
        out += line("paraphrase", id,
                    "PARAPHRASE:\n1. How do I fix this problem with " +
                        kProblems[i % kProblems.size()] + "?")
                   .dump() +
               "\n";
        const int confidence = 80 + static_cast<int>(i % 4) * 5;  // 80, 85, 90, 95
        std::string solution = "CONFIDENCE: " + std::to_string(confidence) + "%\n";
        if (i % 5 != 0) solution += "SOLUTION_KIND: steps\n";
        solution += "SOLUTION:\n1. Open Settings.\n2. Tap the app.\n3. Restart the device.";
        if (i == 7) solution = "I am not sure how to answer.";
        out += line("solution", id, solution).dump() + "\n";
    }
    out += line("lookup", "*", "ANSWER: It is my phone, the blue envelope app.").dump() + "\n";
    return out;
}

clarify::MockScript replay_script(const std::string& query_id) {
    clarify::MockScript s;
    s.add({"questions", query_id},
          "QUESTIONS:\n1. Which tablet do you have?\n2. Do you use the Facebook app or the "
          "website?");
    s.add({"lookup", query_id + "#1"}, "ANSWER: A Samsung Galaxy Tab.");
    s.add({"lookup", query_id + "#2"}, "ANSWER: UNKNOWN");
    s.add({"paraphrase", query_id}, std::string("PARAPHRASE:\n1. ") + kVerbosityParaphrase);
    s.add({"solution", query_id},
          "CONFIDENCE: 0.93\nSOLUTION_KIND: steps\nSOLUTION:\n1. Close the Facebook app "
          "completely.\n2. Clear the app cache in Settings.\n3. Update the Facebook app.\n4. "
          "Restart the tablet and try again.");
    return s;
}

std::string examples_ndjson() {
    const std::vector<std::pair<std::string, std::string>> ex{
        {"So my phone, the new one from the store, I think it is a Samsung, keeps making a "
         "ding noise all day and my cat jumps every time, how do I make it stop",
         "How do I turn off notification sounds on my Samsung phone?"},
        {"The computer my nephew gave me has the letters so tiny now, I can hardly see "
         "anything, it was fine last week before I pressed something",
         "How do I increase the text size on my computer?"},
        {"I was trying to look at the pictures from the wedding that my friend sent on the "
         "email but they will not open, it just shows a little box",
         "Why won't photo attachments open in my email, and how can I view them?"},
    };
    std::string out;
    for (const char* c : {"verbosity", "over_specification", "under_specification",
                          "incompleteness"})
        for (const auto& [styled, clarified] : ex)
            out += nlohmann::json{{"characteristic", c}, {"styled", styled}, {"clarified", clarified}}
                       .dump() +
                   "\n";
    return out;
}

}  // namespace fixture
