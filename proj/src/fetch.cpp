#include "memfix/fetch.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "memfix/uri.hpp"

namespace memfix::fetch {

namespace {

struct RawResponse {
    int status = 0;
    std::vector<Header> headers;
    std::string body;

    std::optional<std::string> get(std::string_view name) const {
        std::optional<std::string> out;
        for (const auto& h : headers) {
            if (h.name != name) continue;
            out = out ? *out + ", " + h.value : h.value;
        }
        return out;
    }
};

const char* env(const char* upper, const char* lower) {
    if (const char* v = std::getenv(upper); v && *v) return v;
    if (const char* v = std::getenv(lower); v && *v) return v;
    return nullptr;
}

bool is_loopback(std::string_view host) {
    return host == "localhost" || host == "::1" || host == "[::1]" || host.rfind("127.", 0) == 0;
}

bool bypass_proxy(std::string_view host) {
    if (is_loopback(host)) return true;
    const char* no_proxy = env("NO_PROXY", "no_proxy");
    if (!no_proxy) return false;
    std::stringstream list(no_proxy);
    std::string item;
    while (std::getline(list, item, ',')) {
        std::string entry = uri::lowercase(uri::trim(item));
        if (entry.empty()) continue;
        if (entry == "*") return true;
        if (entry.front() == '.') entry.erase(0, 1);
        if (host == entry ||
            (host.size() > entry.size() && host.substr(host.size() - entry.size()) == entry &&
             host[host.size() - entry.size() - 1] == '.'))
            return true;
    }
    return false;
}

void apply_proxy(httplib::Client& client, std::string_view scheme, std::string_view host) {
    if (bypass_proxy(host)) return;
    const char* proxy = scheme == "https" ? env("HTTPS_PROXY", "https_proxy")
                                          : env("HTTP_PROXY", "http_proxy");
    if (!proxy) return;
    std::string value = proxy;
    if (value.find("://") == std::string::npos) value = "http://" + value;
    auto hp = uri::host_port(value);
    auto colon = hp.rfind(':');
    int port = 80;
    std::string phost = hp;
    if (colon != std::string::npos && hp.find(']', colon) == std::string::npos) {
        phost = hp.substr(0, colon);
        port = std::atoi(hp.c_str() + colon + 1);
    }
    client.set_proxy(phost, port);
}

RawResponse single_request(const std::string& method, const std::string& target_uri,
                           const FetchPolicy& policy, const httplib::Headers& extra) {
    auto parts = uri::split(target_uri);
    std::string scheme = uri::lowercase(parts.scheme);
    if (scheme != "http" && scheme != "https")
        throw FetchError(FetchError::Kind::NonHttpScheme, target_uri,
                         "scheme '" + parts.scheme + "' is not http or https");
    if (!parts.authority || parts.authority->empty())
        throw FetchError(FetchError::Kind::ConnectionFailed, target_uri, "URI has no host");

    std::string host_port = uri::host_port(target_uri);
    httplib::Client client(scheme + "://" + host_port);
    auto timeout = std::chrono::milliseconds(policy.request_timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    client.set_follow_location(false);
    client.set_url_encode(false);
    client.set_keep_alive(false);
    std::string bare_host = host_port;
    if (!bare_host.empty() && bare_host.front() == '[')
        bare_host = bare_host.substr(0, bare_host.find(']') + 1);
    else if (auto colon = bare_host.rfind(':'); colon != std::string::npos)
        bare_host.erase(colon);
    apply_proxy(client, scheme, bare_host);

    httplib::Headers headers = extra;
    headers.emplace("User-Agent", policy.user_agent);
    std::string target = uri::request_target(target_uri);

    httplib::Result res = method == "HEAD" ? client.Head(target, headers) : client.Get(target, headers);
    if (!res) {
        auto err = res.error();
        auto kind = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                        ? FetchError::Kind::Timeout
                        : FetchError::Kind::ConnectionFailed;
        throw FetchError(kind, target_uri, httplib::to_string(err));
    }
    RawResponse out;
    out.status = res->status;
    for (const auto& [name, value] : res->headers) out.headers.push_back({uri::lowercase(name), value});
    out.body = std::move(res->body);
    return out;
}

PageCache cache_state(const RawResponse& r) {
    auto v = r.get("x-page-cache");
    if (!v) return PageCache::Absent;
    return uri::iequals(uri::trim(*v), "HIT") ? PageCache::Hit : PageCache::Miss;
}

FetchResult follow_chain(const std::string& method, const std::string& uri_text,
                         const FetchPolicy& policy, const httplib::Headers& extra) {
    FetchResult result;
    result.requested_uri = uri_text;
    std::string current = uri_text;
    RawResponse response;
    bool saw_hit = false, saw_miss = false;
    for (int hop = 0;; ++hop) {
        response = single_request(method, current, policy, extra);
        auto location = response.get("location");
        result.hops.push_back({current, response.status, location});
        switch (cache_state(response)) {
            case PageCache::Hit: saw_hit = true; break;
            case PageCache::Miss: saw_miss = true; break;
            case PageCache::Absent: break;
        }
        bool redirect = response.status >= 300 && response.status < 400 && location;
        if (redirect && !result.location) result.location = *location;
        if (!redirect || hop >= kMaxRedirects) break;
        auto next = uri::resolve(current, *location);
        if (!next) break;
        current = uri::strip_fragment(*next);
    }
    result.final_uri = current;
    result.status = response.status;
    result.page_cache = saw_hit ? PageCache::Hit : (saw_miss ? PageCache::Miss : PageCache::Absent);
    if (auto md = response.get("memento-datetime")) result.memento_datetime = protocol::try_parse_http_datetime(uri::trim(*md));
    result.content_type = response.get("content-type");
    if (auto link = response.get("link")) {
        try {
            result.link_relations = protocol::parse_link_header(*link);
        } catch (const protocol::ProtocolError&) {
            result.link_header_malformed = true;
        }
    }
    result.headers = std::move(response.headers);
    result.body = std::move(response.body);
    result.fetched_at = utc_now();
    return result;
}

std::string next_cache_buster() {
    static std::atomic<unsigned long> counter{0};
    auto ticks = std::chrono::steady_clock::now().time_since_epoch().count();
    std::ostringstream out;
    out << std::hex << ticks << '-' << counter.fetch_add(1);
    return out.str();
}

std::string with_query_param(const std::string& u, std::string_view name, const std::string& value) {
    auto parts = uri::split(u);
    std::string param = std::string(name) + "=" + value;
    parts.query = parts.query && !parts.query->empty() ? *parts.query + "&" + param : param;
    parts.fragment.reset();
    return uri::compose(parts);
}

}  // namespace

// ---- policy -------------------------------------------------------------------------------

void FetchPolicy::validate() const {
    if (cache_retry_limit < 0 || cache_retry_limit > kMaxCacheRetries)
        throw Error("cache_retry_limit must be within 0.." + std::to_string(kMaxCacheRetries));
    if (stability_delay_ms < 0) throw Error("stability_delay_ms must be >= 0");
    if (request_timeout_ms <= 0) throw Error("request_timeout_ms must be > 0");
    if (max_depth < 0) throw Error("max_depth must be >= 0");
    if (concurrency < 1) throw Error("concurrency must be >= 1");
}

void to_json(nlohmann::ordered_json& j, const FetchPolicy& p) {
    j = nlohmann::ordered_json{{"cache_retry_limit", p.cache_retry_limit},
                               {"cache_bypass", p.cache_bypass},
                               {"stability_probe", p.stability_probe},
                               {"stability_delay_ms", p.stability_delay_ms},
                               {"request_timeout_ms", p.request_timeout_ms},
                               {"user_agent", p.user_agent},
                               {"max_depth", p.max_depth},
                               {"concurrency", p.concurrency}};
}

FetchPolicy policy_from_json(const nlohmann::ordered_json& j) {
    FetchPolicy p;
    p.cache_retry_limit = j.value("cache_retry_limit", p.cache_retry_limit);
    p.cache_bypass = j.value("cache_bypass", p.cache_bypass);
    p.stability_probe = j.value("stability_probe", p.stability_probe);
    p.stability_delay_ms = j.value("stability_delay_ms", p.stability_delay_ms);
    p.request_timeout_ms = j.value("request_timeout_ms", p.request_timeout_ms);
    p.user_agent = j.value("user_agent", p.user_agent);
    p.max_depth = j.value("max_depth", p.max_depth);
    p.concurrency = j.value("concurrency", p.concurrency);
    p.validate();
    return p;
}

std::string_view to_string(PageCache c) {
    switch (c) {
        case PageCache::Hit: return "Hit";
        case PageCache::Miss: return "Miss";
        case PageCache::Absent: return "Absent";
    }
    return "Absent";
}

std::string_view to_string(Stability s) {
    switch (s) {
        case Stability::Stable: return "Stable";
        case Stability::Dynamic: return "Dynamic";
        case Stability::Unprobed: return "Unprobed";
    }
    return "Unprobed";
}

std::optional<PageCache> page_cache_from_string(std::string_view s) {
    for (auto c : {PageCache::Hit, PageCache::Miss, PageCache::Absent})
        if (to_string(c) == s) return c;
    return std::nullopt;
}

std::optional<Stability> stability_from_string(std::string_view s) {
    for (auto v : {Stability::Stable, Stability::Dynamic, Stability::Unprobed})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

// ---- results and errors -------------------------------------------------------------------

std::optional<std::string> FetchResult::header(std::string_view name) const {
    std::string key = uri::lowercase(name);
    std::optional<std::string> out;
    for (const auto& h : headers) {
        if (h.name != key) continue;
        out = out ? *out + ", " + h.value : h.value;
    }
    return out;
}

std::string FetchResult::detail() const {
    std::string out;
    for (const auto& hop : hops) {
        out += std::to_string(hop.status) + " " + hop.uri;
        if (hop.location) out += " -> " + *hop.location;
        out += "\n";
    }
    return out;
}

bool FetchResult::signals_do_not_negotiate() const {
    if (link_relations.is_do_not_negotiate()) return true;
    if (!link_header_malformed) return false;
    auto link = header("link");
    return link && link->find(protocol::kDoNotNegotiate) != std::string::npos;
}

FetchError::FetchError(Kind kind, std::string uri, std::string detail)
    : Error(std::string(to_string(kind)) + " fetching " + uri + ": " + detail),
      kind_(kind),
      uri_(std::move(uri)),
      detail_(std::move(detail)) {}

std::string_view to_string(FetchError::Kind k) {
    switch (k) {
        case FetchError::Kind::Timeout: return "Timeout";
        case FetchError::Kind::ConnectionFailed: return "ConnectionFailed";
        case FetchError::Kind::TooManyCacheHits: return "TooManyCacheHits";
        case FetchError::Kind::NonHttpScheme: return "NonHttpScheme";
        case FetchError::Kind::BadStatus: return "BadStatus";
    }
    return "ConnectionFailed";
}

// ---- operations ---------------------------------------------------------------------------

FetchResult fetch_resource(std::string_view uri_view, const FetchPolicy& policy) {
    policy.validate();
    std::string u(uri_view);
    FetchResult result = follow_chain("GET", u, policy, {});
    if (result.page_cache != PageCache::Hit || !policy.cache_bypass) return result;

    const httplib::Headers no_cache = {{"Cache-Control", "no-cache"}, {"Pragma", "no-cache"}};
    for (int retry = 1; retry <= policy.cache_retry_limit; ++retry) {
        std::optional<std::string> buster;
        std::string target = u;
        if (retry == policy.cache_retry_limit) {
            buster = next_cache_buster();
            target = with_query_param(u, kCacheBusterParam, *buster);
        }
        FetchResult again = follow_chain("GET", target, policy, no_cache);
        if (again.page_cache != PageCache::Hit) {
            again.attempts = retry + 1;
            again.cache_buster = buster;
            return again;
        }
    }
    throw FetchError(FetchError::Kind::TooManyCacheHits, u,
                     std::to_string(policy.cache_retry_limit + 1) + " consecutive cache HITs");
}

std::pair<FetchResult, FetchResult> probe_stability(std::string_view uri, const FetchPolicy& policy) {
    FetchResult first = fetch_resource(uri, policy);
    if (policy.stability_delay_ms > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(policy.stability_delay_ms));
    FetchResult second = fetch_resource(uri, policy);
    Stability s = (first.status == second.status && first.body == second.body) ? Stability::Stable
                                                                               : Stability::Dynamic;
    first.stability = s;
    second.stability = s;
    return {std::move(first), std::move(second)};
}

FetchResult fetch_raw(const protocol::MementoUri& m, const FetchPolicy& policy) {
    std::string raw = serialize(protocol::build_raw_uri(m));
    FetchResult result = fetch_resource(raw, policy);
    result.raw_used = true;
    if (result.status < 200 || result.status >= 300)
        throw FetchError(FetchError::Kind::BadStatus, raw,
                         "raw retrieval answered " + std::to_string(result.status));
    return result;
}

FetchResult probe_headers(std::string_view uri, const FetchPolicy& policy) {
    policy.validate();
    std::string u(uri);
    FetchResult head = follow_chain("HEAD", u, policy, {});
    if (head.status == 405 || head.status == 501) return follow_chain("GET", u, policy, {});
    return head;
}

}  // namespace memfix::fetch
