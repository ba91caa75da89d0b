#pragma once

// Memento protocol artifacts: URI-Ms, Link headers, link-format TimeMaps and
// the HTTP datetime form used by Memento-Datetime / Accept-Datetime.

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "memfix/error.hpp"
#include "memfix/time.hpp"

namespace memfix::protocol {

class ProtocolError : public Error {
public:
    enum class Kind {
        InvalidUri,
        NotAMemento,
        MalformedLinkHeader,
        MalformedLinkFormat,
        MalformedDatetime,
        OriginalMismatch,
    };

    ProtocolError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// A URI-R: an absolute http(s) URI of an original resource.
class OriginalUri {
public:
    /// Throws ProtocolError(InvalidUri).
    static OriginalUri parse(std::string_view uri);
    static std::optional<OriginalUri> try_parse(std::string_view uri);

    const std::string& str() const noexcept { return uri_; }

    friend bool operator==(const OriginalUri&, const OriginalUri&) = default;
    friend auto operator<=>(const OriginalUri&, const OriginalUri&) = default;

private:
    explicit OriginalUri(std::string uri) : uri_(std::move(uri)) {}
    std::string uri_;
};

enum class Modifier {
    None,
    Raw,    // "id_"
    Image,  // "im_"
    Opaque  // any other letters+underscore suffix, kept verbatim
};

/// A parsed URI-M: <archive_prefix><timestamp14><modifier>/<target>.
struct MementoUri {
    std::string archive_prefix;  // up to and including the replay path segment, e.g. ".../web/"
    std::string timestamp14;
    Modifier modifier = Modifier::None;
    std::string opaque_modifier;  // set only when modifier == Opaque, e.g. "js_"
    OriginalUri target;

    std::string modifier_text() const;
    UtcTime datetime() const;
    std::string str() const;

    friend bool operator==(const MementoUri&, const MementoUri&) = default;
};

std::string serialize(const MementoUri& m);

/// Matches `uri` against the configured replay prefixes (longest match wins).
/// nullopt means NotAMemento: the caller treats the URI as a live-web candidate.
std::optional<MementoUri> parse_memento_uri(std::string_view uri,
                                            std::span<const std::string> archive_prefixes);

/// Prefix-free variant: locates the first "/<14 digits>[modifier]/" segment after the
/// authority and takes everything before it as the prefix.
std::optional<MementoUri> parse_memento_uri(std::string_view uri);

/// Same memento with modifier Raw. Opaque modifiers are replaced as well.
MementoUri build_raw_uri(MementoUri m);

struct Link {
    std::string target;
    std::vector<std::string> rels;  // lowercased relation types, in order
    std::vector<std::pair<std::string, std::string>> attributes;  // lowercased names

    bool has_rel(std::string_view rel) const;
    std::optional<std::string> attribute(std::string_view name) const;
};

class LinkRelationSet {
public:
    LinkRelationSet() = default;
    explicit LinkRelationSet(std::vector<Link> links) : links_(std::move(links)) {}

    const std::vector<Link>& links() const noexcept { return links_; }
    bool empty() const noexcept { return links_.empty(); }

    /// The first link carrying `rel`, if any.
    const Link* find(std::string_view rel) const;

    /// True iff a link targets the donotnegotiate term with rel containing "type".
    bool is_do_not_negotiate() const;

private:
    std::vector<Link> links_;
};

inline constexpr std::string_view kDoNotNegotiate = "http://mementoweb.org/terms/donotnegotiate";

/// Throws ProtocolError(MalformedLinkHeader) on unbalanced quotes or angle brackets.
LinkRelationSet parse_link_header(std::string_view value);

/// IMF-fixdate, e.g. "Wed, 24 Jul 2013 14:48:01 GMT". Throws ProtocolError(MalformedDatetime).
UtcTime parse_http_datetime(std::string_view value);
std::optional<UtcTime> try_parse_http_datetime(std::string_view value);
std::string format_http_datetime(UtcTime t);

struct TimeMapEntry {
    MementoUri memento;
    UtcTime datetime;

    friend bool operator==(const TimeMapEntry&, const TimeMapEntry&) = default;
};

struct TimeMapSnapshot {
    std::string timemap_uri;
    std::optional<OriginalUri> original;
    std::vector<TimeMapEntry> entries;
    std::optional<std::size_t> first;  // index into entries
    std::optional<std::size_t> last;
    std::optional<std::string> timegate;
    UtcTime observed_at{};
    /// Memento links dropped because their datetime or URI-M did not parse.
    std::size_t parse_warnings = 0;
};

/// Parses an application/link-format TimeMap. `base` is the URI-T it was fetched from;
/// relative targets resolve against it. Throws ProtocolError(MalformedLinkFormat).
TimeMapSnapshot parse_link_format(std::string_view body, std::string_view base,
                                  std::span<const std::string> archive_prefixes = {});

struct TimeMapDelta {
    std::vector<TimeMapEntry> added;
    std::vector<TimeMapEntry> removed;
    std::size_t unchanged_count = 0;

    bool empty() const noexcept { return added.empty() && removed.empty(); }
};

/// `a` is the earlier snapshot. Throws ProtocolError(OriginalMismatch).
TimeMapDelta diff_timemaps(const TimeMapSnapshot& a, const TimeMapSnapshot& b);

void to_json(nlohmann::ordered_json& j, const TimeMapEntry& e);
void to_json(nlohmann::ordered_json& j, const TimeMapSnapshot& s);
void to_json(nlohmann::ordered_json& j, const TimeMapDelta& d);
TimeMapSnapshot snapshot_from_json(const nlohmann::ordered_json& j);
TimeMapDelta delta_from_json(const nlohmann::ordered_json& j);

}  // namespace memfix::protocol
