#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace memfix::uri {

/// Generic RFC 3986 component split. Components are kept verbatim (no decoding).
struct Parts {
    std::string scheme;
    std::optional<std::string> authority;
    std::string path;
    std::optional<std::string> query;
    std::optional<std::string> fragment;
};

Parts split(std::string_view reference);
std::string compose(const Parts& parts);

/// Resolves `reference` against the absolute `base`. Returns nullopt if base is not absolute.
std::optional<std::string> resolve(std::string_view base, std::string_view reference);

std::string remove_dot_segments(std::string_view path);

std::string lowercase(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool istarts_with(std::string_view s, std::string_view prefix);
std::string_view trim(std::string_view s);

/// True for absolute http/https URIs with a non-empty authority.
bool is_http_uri(std::string_view s);

/// Lowercased host[:port] without userinfo, or empty if the URI has no authority.
std::string host_port(std::string_view s);

/// Everything after the authority: path plus "?query" (fragment dropped). Never empty.
std::string request_target(std::string_view s);

std::string strip_fragment(std::string_view s);

}  // namespace memfix::uri
