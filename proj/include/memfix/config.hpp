#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "memfix/error.hpp"

namespace memfix {

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Closed-world description of the archives the toolkit knows about.
///
/// File format: plain text, "#" starts a comment, blank lines ignored. Section headers
/// are "[prefixes]", "[deny]" and "[banner-selectors]"; lines before any header are
/// replay prefixes, so a bare list of prefixes is a valid config.
struct ArchiveConfig {
    std::vector<std::string> prefixes;
    /// URI patterns for archive-inserted resources. '*' matches any run of characters;
    /// a pattern without '*' matches as a prefix.
    std::vector<std::string> deny;
    /// "#id" or ".class" selectors for banner elements stripped from replay HTML.
    std::vector<std::string> banner_selectors;

    static ArchiveConfig defaults();
    static ArchiveConfig parse(std::string_view text);
    static ArchiveConfig load(const std::filesystem::path& path);

    bool is_denied(std::string_view uri) const;
    /// True when the URI's host:port belongs to one of the configured prefixes.
    bool is_archive_host(std::string_view uri) const;
};

/// Glob match where '*' is the only metacharacter.
bool glob_match(std::string_view pattern, std::string_view text);

}  // namespace memfix
