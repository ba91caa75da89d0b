#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "memfix/config.hpp"
#include "memfix/fetch.hpp"
#include "memfix/protocol.hpp"

namespace memfix::extract {

/// Where a reference was found. Root marks the composite's own row.
enum class Origin {
    Root,
    ImgSrc,
    ImgSrcset,
    ScriptSrc,
    StylesheetHref,
    CssUrl,
    IframeSrc,
    FrameSrc,
    ObjectData,
    EmbedSrc,
    LinkIconHref
};

std::string_view to_string(Origin o);
std::optional<Origin> origin_from_string(std::string_view s);

struct DiscoveredResource {
    std::string raw_reference;  // as written in the markup, entities decoded
    std::string resolved_uri;   // absolute, fragment removed
    Origin origin = Origin::Root;
    std::string source_uri;
    int depth = 0;  // 0 only for the root row

    friend bool operator==(const DiscoveredResource&, const DiscoveredResource&) = default;
};

struct Discovery {
    std::vector<DiscoveredResource> resources;
    std::size_t skipped = 0;  // unparseable regions
    std::size_t dropped = 0;  // references that did not resolve to an http(s) URI
};

bool is_html_type(std::string_view content_type);
bool is_css_type(std::string_view content_type);

/// Pure. HTML and CSS bodies only; anything else yields an empty Discovery. Discovered
/// resources get depth source_depth + 1.
Discovery discover_resources(std::string_view body, std::string_view content_type,
                             std::string_view base, int source_depth = 0);

enum class ClassValue { ArchivedMemento, ArchiveSpecific, LiveWeb };
enum class Evidence { UriPattern, DoNotNegotiateHeader, ConfigDenyList, NoArchivePrefix };

std::string_view to_string(ClassValue v);
std::string_view to_string(Evidence e);

struct Classification {
    ClassValue value = ClassValue::LiveWeb;
    Evidence evidence = Evidence::NoArchivePrefix;

    friend bool operator==(const Classification&, const Classification&) = default;
};

Classification classify_uri(std::string_view uri, const protocol::LinkRelationSet* probe,
                            const ArchiveConfig& config);

struct StripProfile {
    std::vector<std::string> banner_selectors;  // "#id" or ".class"
    std::vector<std::string> deny;              // script src patterns

    static StripProfile from_config(const ArchiveConfig& config);
};

inline constexpr std::string_view kArchivedOnMarker = "FILE ARCHIVED ON";

/// Pure and idempotent. Removes archive comments, banner elements and deny-listed
/// scripts; every other byte is kept. `base` resolves relative script sources.
std::string strip_archive_markup(std::string_view body, const StripProfile& profile,
                                 std::string_view base = {});

struct ExpansionRow {
    DiscoveredResource resource;
    Classification classification;
    std::optional<protocol::MementoUri> memento;  // set for ArchivedMemento rows
    /// Final content for fetched mementos, or the probe response for classified URIs.
    std::optional<fetch::FetchResult> result;
    std::optional<fetch::FetchError> error;      // nothing usable was retrieved
    std::optional<fetch::FetchError> raw_error;  // why the id_ retrieval was abandoned
    bool stripped = false;
};

/// Breadth-first expansion of the composite rooted at `root`. Rows come back in a
/// deterministic order (root first, then level by level in document order) whatever
/// the fetch scheduling. The root's replay prefix is always treated as configured.
std::vector<ExpansionRow> expand_composite(const protocol::MementoUri& root,
                                           const fetch::FetchPolicy& policy,
                                           const ArchiveConfig& config);

}  // namespace memfix::extract
