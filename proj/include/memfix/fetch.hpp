#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "memfix/error.hpp"
#include "memfix/protocol.hpp"
#include "memfix/time.hpp"

namespace memfix::fetch {

/// Query parameter appended on the last cache-bypass retry. Archives see it as part of
/// the requested URI, which is why it is only a last resort.
inline constexpr std::string_view kCacheBusterParam = "memfix-nocache";

inline constexpr int kMaxCacheRetries = 10;
inline constexpr int kMaxRedirects = 5;

struct FetchPolicy {
    int cache_retry_limit = 3;
    bool cache_bypass = true;
    bool stability_probe = true;
    int stability_delay_ms = 1000;
    int request_timeout_ms = 10000;
    std::string user_agent = "memfix/0.1";
    /// Composite expansion knobs.
    int max_depth = 3;
    int concurrency = 4;

    /// Throws Error when a knob is out of range.
    void validate() const;
};

void to_json(nlohmann::ordered_json& j, const FetchPolicy& p);
/// Missing keys keep their defaults.
FetchPolicy policy_from_json(const nlohmann::ordered_json& j);

enum class PageCache { Hit, Miss, Absent };
enum class Stability { Stable, Dynamic, Unprobed };

std::string_view to_string(PageCache c);
std::string_view to_string(Stability s);
std::optional<PageCache> page_cache_from_string(std::string_view s);
std::optional<Stability> stability_from_string(std::string_view s);

struct Header {
    std::string name;  // lowercase
    std::string value;
};

/// One step of a redirect chain.
struct Hop {
    std::string uri;
    int status = 0;
    std::optional<std::string> location;
};

struct FetchResult {
    std::string requested_uri;
    std::string final_uri;
    int status = 0;
    std::optional<UtcTime> memento_datetime;
    /// First Location value seen in the redirect chain, verbatim.
    std::optional<std::string> location;
    std::optional<std::string> content_type;
    PageCache page_cache = PageCache::Absent;
    protocol::LinkRelationSet link_relations;
    /// Set when the Link header could not be parsed; link_relations is then empty.
    bool link_header_malformed = false;
    std::string body;
    UtcTime fetched_at{};
    Stability stability = Stability::Unprobed;

    std::vector<Header> headers;  // final response, lowercase names, in arrival order
    std::vector<Hop> hops;        // every response in the chain, the final one included
    int attempts = 1;             // requests spent on cache avoidance
    std::optional<std::string> cache_buster;  // the query value, when the last resort was used
    bool raw_used = false;

    /// All values of a header joined with ", ", or nullopt when absent.
    std::optional<std::string> header(std::string_view name) const;
    /// Human-readable redirect log, one "status uri -> location" per hop.
    std::string detail() const;
    /// The Link header names the donotnegotiate term (also when it was unparseable).
    bool signals_do_not_negotiate() const;
};

class FetchError : public Error {
public:
    enum class Kind { Timeout, ConnectionFailed, TooManyCacheHits, NonHttpScheme, BadStatus };

    FetchError(Kind kind, std::string uri, std::string detail);

    Kind kind() const noexcept { return kind_; }
    const std::string& uri() const noexcept { return uri_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    Kind kind_;
    std::string uri_;
    std::string detail_;
};

std::string_view to_string(FetchError::Kind k);

/// GET with cache avoidance: a cache HIT triggers up to cache_retry_limit retries with
/// no-cache request headers (plus a throwaway query parameter on the final retry) when
/// cache_bypass is set. Redirects are followed up to kMaxRedirects hops.
FetchResult fetch_resource(std::string_view uri, const FetchPolicy& policy);

/// Two fetches stability_delay_ms apart; both results are marked Stable iff status and
/// body bytes are equal, else Dynamic.
std::pair<FetchResult, FetchResult> probe_stability(std::string_view uri, const FetchPolicy& policy);

/// fetch_resource on the id_ form of `m`. Non-2xx final statuses raise BadStatus so the
/// caller can fall back to replay content.
FetchResult fetch_raw(const protocol::MementoUri& m, const FetchPolicy& policy);

/// HEAD request used for classification; falls back to GET when HEAD is rejected
/// (405/501). Never retries for cache state.
FetchResult probe_headers(std::string_view uri, const FetchPolicy& policy);

}  // namespace memfix::fetch
