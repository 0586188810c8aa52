#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace clarify {

// Prompt text for every model call the toolkit makes. Each template is
// plain text with {{slot}} markers; the first line "SYSTEM:" block (up to a
// line containing only "---") becomes the system message.
struct PromptTemplate {
    std::string system;
    std::string user;
};

struct PromptSet {
    std::string id;
    PromptTemplate questions;
    PromptTemplate paraphrase;
    PromptTemplate solution;
    PromptTemplate lookup;
    PromptTemplate synthesize;
};

// Template file body split into system and user parts.
PromptTemplate parse_prompt_template(std::string_view text);

// "default" resolves to the templates compiled in from prompts/; any other
// id is treated as a directory containing questions.txt, paraphrase.txt,
// solution.txt, lookup.txt and synthesize.txt.
PromptSet load_prompt_set(std::string_view id);

const PromptSet& default_prompt_set();

// Replaces every {{name}} with slots[name]. Throws std::invalid_argument when
// the template references a slot that is not supplied.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& slots);

}  // namespace clarify
