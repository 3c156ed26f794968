#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "refaug/util.hpp"

namespace refaug {

/// Plain-text prompt template with {name} placeholders.
struct PromptTemplate {
    std::string name;
    std::string text;

    static PromptTemplate from_file(const std::filesystem::path& path) {
        return {path.stem().string(), read_text_file(path)};
    }

    static PromptTemplate from_string(std::string name, std::string text) {
        return {std::move(name), std::move(text)};
    }

    std::string fill(const std::map<std::string, std::string>& vars) const {
        std::string out = text;
        for (const auto& [key, value] : vars) {
            out = replace_all(out, "{" + key + "}", value);
        }
        return out;
    }

    /// Stable identity for lineage records.
    std::string hash() const { return sha256_hex(text).substr(0, 16); }
};

}  // namespace refaug
