#include "memfix/uri.hpp"

#include <algorithm>
#include <cctype>

namespace memfix::uri {

namespace {

bool is_scheme_char(char c, bool first) {
    if (std::isalpha(static_cast<unsigned char>(c))) return true;
    if (first) return false;
    return std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.';
}

std::string merge(const Parts& base, std::string_view ref_path) {
    if (base.authority && base.path.empty()) return "/" + std::string(ref_path);
    auto slash = base.path.rfind('/');
    if (slash == std::string::npos) return std::string(ref_path);
    return base.path.substr(0, slash + 1) + std::string(ref_path);
}

}  // namespace

Parts split(std::string_view s) {
    Parts p;
    std::size_t i = 0;
    // scheme
    std::size_t colon = s.find(':');
    if (colon != std::string_view::npos && colon > 0) {
        bool ok = true;
        for (std::size_t k = 0; k < colon; ++k) {
            if (!is_scheme_char(s[k], k == 0)) {
                ok = false;
                break;
            }
        }
        // a '/', '?' or '#' before the colon means it is a path, not a scheme
        if (ok) {
            p.scheme = std::string(s.substr(0, colon));
            i = colon + 1;
        }
    }
    if (s.substr(i, 2) == "//") {
        i += 2;
        std::size_t end = s.find_first_of("/?#", i);
        if (end == std::string_view::npos) end = s.size();
        p.authority = std::string(s.substr(i, end - i));
        i = end;
    }
    std::size_t path_end = s.find_first_of("?#", i);
    if (path_end == std::string_view::npos) path_end = s.size();
    p.path = std::string(s.substr(i, path_end - i));
    i = path_end;
    if (i < s.size() && s[i] == '?') {
        std::size_t end = s.find('#', i);
        if (end == std::string_view::npos) end = s.size();
        p.query = std::string(s.substr(i + 1, end - i - 1));
        i = end;
    }
    if (i < s.size() && s[i] == '#') p.fragment = std::string(s.substr(i + 1));
    return p;
}

std::string compose(const Parts& p) {
    std::string out;
    if (!p.scheme.empty()) out += p.scheme + ":";
    if (p.authority) out += "//" + *p.authority;
    out += p.path;
    if (p.query) out += "?" + *p.query;
    if (p.fragment) out += "#" + *p.fragment;
    return out;
}

std::string remove_dot_segments(std::string_view path) {
    std::string in(path);
    std::string out;
    while (!in.empty()) {
        if (in.rfind("../", 0) == 0) {
            in.erase(0, 3);
        } else if (in.rfind("./", 0) == 0) {
            in.erase(0, 2);
        } else if (in.rfind("/./", 0) == 0) {
            in.erase(0, 2);
        } else if (in == "/.") {
            in = "/";
        } else if (in.rfind("/../", 0) == 0 || in == "/..") {
            in = in == "/.." ? "/" : in.substr(3);
            auto slash = out.rfind('/');
            out.erase(slash == std::string::npos ? 0 : slash);
        } else if (in == "." || in == "..") {
            in.clear();
        } else {
            std::size_t start = in[0] == '/' ? 1 : 0;
            std::size_t next = in.find('/', start);
            if (next == std::string::npos) next = in.size();
            out += in.substr(0, next);
            in.erase(0, next);
        }
    }
    return out;
}

std::optional<std::string> resolve(std::string_view base, std::string_view reference) {
    Parts b = split(base);
    if (b.scheme.empty()) return std::nullopt;
    Parts r = split(reference);
    Parts t;
    if (!r.scheme.empty()) {
        t = r;
        t.path = remove_dot_segments(r.path);
    } else {
        if (r.authority) {
            t.authority = r.authority;
            t.path = remove_dot_segments(r.path);
            t.query = r.query;
        } else {
            if (r.path.empty()) {
                t.path = b.path;
                t.query = r.query ? r.query : b.query;
            } else {
                if (r.path[0] == '/')
                    t.path = remove_dot_segments(r.path);
                else
                    t.path = remove_dot_segments(merge(b, r.path));
                t.query = r.query;
            }
            t.authority = b.authority;
        }
        t.scheme = b.scheme;
    }
    t.fragment = r.fragment;
    return compose(t);
}

std::string lowercase(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

bool istarts_with(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && iequals(s.substr(0, prefix.size()), prefix);
}

std::string_view trim(std::string_view s) {
    auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && ws(s.front())) s.remove_prefix(1);
    while (!s.empty() && ws(s.back())) s.remove_suffix(1);
    return s;
}

bool is_http_uri(std::string_view s) {
    Parts p = split(s);
    return (iequals(p.scheme, "http") || iequals(p.scheme, "https")) && p.authority &&
           !p.authority->empty();
}

std::string host_port(std::string_view s) {
    Parts p = split(s);
    if (!p.authority) return {};
    std::string_view a = *p.authority;
    if (auto at = a.rfind('@'); at != std::string_view::npos) a.remove_prefix(at + 1);
    return lowercase(a);
}

std::string request_target(std::string_view s) {
    Parts p = split(s);
    std::string out = p.path.empty() ? "/" : p.path;
    if (p.query) out += "?" + *p.query;
    return out;
}

std::string strip_fragment(std::string_view s) {
    auto hash = s.find('#');
    return std::string(hash == std::string_view::npos ? s : s.substr(0, hash));
}

}  // namespace memfix::uri
