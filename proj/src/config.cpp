#include "memfix/config.hpp"

#include <fstream>
#include <sstream>

#include "memfix/uri.hpp"

namespace memfix {

ArchiveConfig ArchiveConfig::defaults() {
    ArchiveConfig c;
    c.prefixes = {"https://web.archive.org/web/", "http://web.archive.org/web/",
                  "https://www.webarchive.org.uk/wayback/archive/",
                  "http://webarchive.proni.gov.uk/"};
    c.deny = {"*://web.archive.org/_static/*", "*://web.archive.org/static/*",
              "*://web-static.archive.org/*", "*/wayback/archive/images/toolbar/*",
              "*/wayback/archive/js/*"};
    c.banner_selectors = {"#wm-ipp", "#wm-ipp-base", "#donato", ".wb-autocomplete-suggestions"};
    return c;
}

ArchiveConfig ArchiveConfig::parse(std::string_view text) {
    ArchiveConfig c;
    enum class Section { Prefixes, Deny, Banner } section = Section::Prefixes;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view v = uri::trim(line);
        if (v.empty()) continue;
        if (v.front() == '#') {
            // "#id" is a selector inside [banner-selectors]; anywhere else '#' opens a comment
            bool selector = section == Section::Banner && v.size() > 1 && v[1] != ' ' && v[1] != '#';
            if (!selector) continue;
        }
        if (auto pos = v.find(" #"); pos != std::string_view::npos) v = uri::trim(v.substr(0, pos));
        if (v.front() == '[') {
            if (v == "[prefixes]")
                section = Section::Prefixes;
            else if (v == "[deny]")
                section = Section::Deny;
            else if (v == "[banner-selectors]")
                section = Section::Banner;
            else
                throw ConfigError("config line " + std::to_string(line_no) + ": unknown section " +
                                  std::string(v));
            continue;
        }
        switch (section) {
            case Section::Prefixes:
                if (!uri::is_http_uri(v))
                    throw ConfigError("config line " + std::to_string(line_no) +
                                      ": prefix is not an absolute http(s) URI: " + std::string(v));
                c.prefixes.emplace_back(v);
                break;
            case Section::Deny: c.deny.emplace_back(v); break;
            case Section::Banner:
                if (v.size() < 2 || (v.front() != '#' && v.front() != '.'))
                    throw ConfigError("config line " + std::to_string(line_no) +
                                      ": banner selector must be #id or .class");
                c.banner_selectors.emplace_back(v);
                break;
        }
    }
    return c;
}

ArchiveConfig ArchiveConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

bool ArchiveConfig::is_denied(std::string_view uri) const {
    for (const auto& pattern : deny) {
        if (pattern.find('*') == std::string::npos) {
            if (uri.substr(0, pattern.size()) == pattern) return true;
        } else if (glob_match(pattern, uri)) {
            return true;
        }
    }
    return false;
}

bool ArchiveConfig::is_archive_host(std::string_view u) const {
    auto host = uri::host_port(u);
    if (host.empty()) return false;
    for (const auto& p : prefixes)
        if (uri::host_port(p) == host) return true;
    return false;
}

bool glob_match(std::string_view pattern, std::string_view text) {
    std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = t;
        } else if (p < pattern.size() && pattern[p] == text[t]) {
            ++p;
            ++t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

}  // namespace memfix
