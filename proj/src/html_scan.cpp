#include "html_scan.hpp"

#include <array>
#include <cctype>

#include "memfix/uri.hpp"

namespace memfix::extract::detail {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f'; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == ':' || c == '_'; }

bool starts_with_at(std::string_view s, std::size_t pos, std::string_view needle) {
    return s.size() >= pos + needle.size() && uri::iequals(s.substr(pos, needle.size()), needle);
}

void append_utf8(std::string& out, unsigned long cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x110000) {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

// Parses the start tag beginning at html[at] == '<'. nullopt on an unterminated tag or quote.
std::optional<Token> parse_start_tag(std::string_view html, std::size_t at) {
    Token tok{Token::Kind::StartTag, {}, {}, at, 0, false};
    std::size_t j = at + 1;
    while (j < html.size() && is_name_char(html[j])) ++j;
    tok.name = uri::lowercase(html.substr(at + 1, j - at - 1));
    while (true) {
        while (j < html.size() && is_space(html[j])) ++j;
        if (j >= html.size()) return std::nullopt;
        char c = html[j];
        if (c == '>') {
            tok.end = j + 1;
            return tok;
        }
        if (c == '/') {
            if (j + 1 < html.size() && html[j + 1] == '>') {
                tok.self_closing = true;
                tok.end = j + 2;
                return tok;
            }
            ++j;
            continue;
        }
        std::size_t name_start = j;
        while (j < html.size() && !is_space(html[j]) && html[j] != '=' && html[j] != '>' &&
               html[j] != '/')
            ++j;
        if (j == name_start) {  // a stray '='
            ++j;
            continue;
        }
        std::string name = uri::lowercase(html.substr(name_start, j - name_start));
        std::size_t k = j;
        while (k < html.size() && is_space(html[k])) ++k;
        std::string value;
        if (k < html.size() && html[k] == '=') {
            ++k;
            while (k < html.size() && is_space(html[k])) ++k;
            if (k >= html.size()) return std::nullopt;
            if (html[k] == '"' || html[k] == '\'') {
                auto close = html.find(html[k], k + 1);
                if (close == std::string_view::npos) return std::nullopt;
                value = decode_entities(html.substr(k + 1, close - k - 1));
                j = close + 1;
            } else {
                std::size_t v = k;
                while (k < html.size() && !is_space(html[k]) && html[k] != '>') ++k;
                value = decode_entities(html.substr(v, k - v));
                j = k;
            }
        }
        if (!tok.attribute(name)) tok.attributes.emplace_back(std::move(name), std::move(value));
    }
}

bool is_raw_text_element(std::string_view name) {
    return name == "script" || name == "style" || name == "textarea" || name == "title" ||
           name == "xmp";
}

}  // namespace

std::optional<std::string> Token::attribute(std::string_view attr) const {
    for (const auto& [k, v] : attributes)
        if (k == attr) return v;
    return std::nullopt;
}

bool is_void_element(std::string_view name) {
    static constexpr std::array<std::string_view, 14> kVoid = {
        "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta",
        "param", "source", "track", "wbr"};
    for (auto v : kVoid)
        if (v == name) return true;
    return false;
}

std::string decode_entities(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '&') {
            out.push_back(s[i]);
            continue;
        }
        auto semi = s.find(';', i + 1);
        if (semi == std::string_view::npos || semi - i > 10) {
            out.push_back('&');
            continue;
        }
        std::string_view ent = s.substr(i + 1, semi - i - 1);
        std::optional<unsigned long> cp;
        if (ent == "amp") cp = '&';
        else if (ent == "lt") cp = '<';
        else if (ent == "gt") cp = '>';
        else if (ent == "quot") cp = '"';
        else if (ent == "apos") cp = '\'';
        else if (ent.size() > 1 && ent[0] == '#') {
            bool hex = ent[1] == 'x' || ent[1] == 'X';
            std::string_view digits = ent.substr(hex ? 2 : 1);
            if (!digits.empty()) {
                unsigned long v = 0;
                bool ok = true;
                for (char c : digits) {
                    int d = std::isdigit(static_cast<unsigned char>(c)) ? c - '0'
                            : (hex && std::isxdigit(static_cast<unsigned char>(c)))
                                ? (std::tolower(c) - 'a' + 10)
                                : -1;
                    if (d < 0) {
                        ok = false;
                        break;
                    }
                    v = v * (hex ? 16 : 10) + static_cast<unsigned long>(d);
                    if (v > 0x10FFFF) {
                        ok = false;
                        break;
                    }
                }
                if (ok) cp = v;
            }
        }
        if (!cp) {
            out.push_back('&');
            continue;
        }
        append_utf8(out, *cp);
        i = semi;
    }
    return out;
}

TokenStream tokenize_html(std::string_view html) {
    TokenStream ts;
    const std::string lower = uri::lowercase(html);
    std::size_t i = 0;
    const std::size_t n = html.size();
    while (i < n) {
        std::size_t lt = html.find('<', i);
        if (lt == std::string_view::npos) break;
        i = lt;
        if (starts_with_at(html, i, "<!--")) {
            auto close = html.find("-->", i + 4);
            if (close == std::string_view::npos) {
                ++ts.skipped;
                ts.tokens.push_back({Token::Kind::Comment, {}, {}, i, n, false});
                break;
            }
            ts.tokens.push_back({Token::Kind::Comment, {}, {}, i, close + 3, false});
            i = close + 3;
            continue;
        }
        if (i + 1 < n && (html[i + 1] == '!' || html[i + 1] == '?')) {
            auto gt = html.find('>', i);
            if (gt == std::string_view::npos) {
                ++ts.skipped;
                break;
            }
            i = gt + 1;
            continue;
        }
        if (i + 2 < n && html[i + 1] == '/' && is_alpha(html[i + 2])) {
            std::size_t j = i + 2;
            while (j < n && is_name_char(html[j])) ++j;
            auto gt = html.find('>', j);
            if (gt == std::string_view::npos) {
                ++ts.skipped;
                break;
            }
            ts.tokens.push_back({Token::Kind::EndTag, uri::lowercase(html.substr(i + 2, j - i - 2)),
                                 {}, i, gt + 1, false});
            i = gt + 1;
            continue;
        }
        if (i + 1 < n && is_alpha(html[i + 1])) {
            auto tag = parse_start_tag(html, i);
            if (!tag) {
                ++ts.skipped;
                i = lt + 1;
                continue;
            }
            i = tag->end;
            std::string name = tag->name;
            bool raw = is_raw_text_element(name) && !tag->self_closing;
            ts.tokens.push_back(std::move(*tag));
            if (raw) {
                auto close = lower.find("</" + name, i);
                if (close == std::string::npos) {
                    ++ts.skipped;
                    ts.tokens.push_back({Token::Kind::RawText, {}, {}, i, n, false});
                    break;
                }
                ts.tokens.push_back({Token::Kind::RawText, {}, {}, i, close, false});
                i = close;
            }
            continue;
        }
        i = lt + 1;  // a literal '<'
    }
    return ts;
}

CssScan scan_css(std::string_view css) {
    CssScan out;
    std::size_t i = 0;
    const std::size_t n = css.size();
    auto read_string = [&](std::size_t at, std::string& value) -> std::optional<std::size_t> {
        char quote = css[at];
        std::size_t j = at + 1;
        while (j < n && css[j] != quote) {
            if (css[j] == '\\' && j + 1 < n) ++j;
            if (css[j] == '\n') return std::nullopt;
            value.push_back(css[j]);
            ++j;
        }
        if (j >= n) return std::nullopt;
        return j + 1;
    };
    while (i < n) {
        if (css.compare(i, 2, "/*") == 0) {
            auto close = css.find("*/", i + 2);
            if (close == std::string_view::npos) {
                ++out.skipped;
                break;
            }
            i = close + 2;
            continue;
        }
        if (starts_with_at(css, i, "@import")) {
            std::size_t j = i + 7;
            while (j < n && is_space(css[j])) ++j;
            if (j < n && (css[j] == '"' || css[j] == '\'')) {
                std::string value;
                auto after = read_string(j, value);
                if (!after) {
                    ++out.skipped;
                    i = j + 1;
                    continue;
                }
                out.references.push_back({std::string(uri::trim(value)), j});
                i = *after;
                continue;
            }
            i = j;
            continue;
        }
        if (css[i] == '"' || css[i] == '\'') {
            std::string ignored;
            auto after = read_string(i, ignored);
            if (!after) {
                ++out.skipped;
                ++i;
                continue;
            }
            i = *after;
            continue;
        }
        if (starts_with_at(css, i, "url(") && (i == 0 || !is_name_char(css[i - 1]))) {
            std::size_t j = i + 4;
            while (j < n && is_space(css[j])) ++j;
            std::string value;
            bool ok = true;
            if (j < n && (css[j] == '"' || css[j] == '\'')) {
                auto after = read_string(j, value);
                if (!after) {
                    ok = false;
                } else {
                    j = *after;
                    while (j < n && is_space(css[j])) ++j;
                    ok = j < n && css[j] == ')';
                }
            } else {
                std::size_t start = j;
                while (j < n && css[j] != ')' && css[j] != '(' && css[j] != '"' && css[j] != '\'') ++j;
                ok = j < n && css[j] == ')';
                value = std::string(uri::trim(css.substr(start, j - start)));
                if (ok && value.find_first_of(" \t\n") != std::string::npos) ok = false;
            }
            if (!ok) {
                ++out.skipped;
                i += 4;
                continue;
            }
            out.references.push_back({std::move(value), i});
            i = j + 1;
            continue;
        }
        ++i;
    }
    return out;
}

}  // namespace memfix::extract::detail
