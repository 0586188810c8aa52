#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "clarify/provider.hpp"

namespace fixture {

// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path file(const std::string& name) const { return path_ / name; }
    std::filesystem::path write(const std::string& name, const std::string& content) const;

private:
    std::filesystem::path path_;
};

// Provider limits with no real sleeping between retries.
clarify::ProviderLimits fast_limits(int attempts = 3);

// Diary-style corpus: 57 queries labeled verbosity 9, over_specification 12,
// under_specification 13, incompleteness 24 (q01 carries two labels).
std::string study_corpus_ndjson();

// 48 queries b01..b48, each with a seeker/helper conversation.
std::string batch_corpus_ndjson();

// Mock script covering every stage for the batch corpus. Question counts,
// confidences and output quirks vary by query.
std::string batch_script_ndjson();

// Single-query replay whose paraphrase stage returns the published
// verbosity-row paraphrase.
inline constexpr const char* kVerbosityParaphrase =
    "Why does my tablet freeze and become unresponsive when I try to post photos on Facebook, "
    "and how can I fix it?";
inline constexpr const char* kUnderSpecParaphrase =
    "How can I successfully send images through email using Gmail?";
inline constexpr const char* kUnderSpecQuery =
    "I want to send pictures to my grandson but my Gmail is just not doing it.";
extern const char* const kVerbosityQuery;

clarify::MockScript replay_script(const std::string& query_id);

// Three well-formed styled/clarified example pairs.
std::string examples_ndjson();

}  // namespace fixture
