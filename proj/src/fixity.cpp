#include "memfix/fixity.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "memfix/uri.hpp"

namespace memfix::fixity {

namespace {

using json = nlohmann::ordered_json;

// Headers whose value varies per request or per hop, or that describe cache plumbing.
constexpr std::string_view kRejectedHeaders[] = {
    "date",       "age",     "expires",           "last-modified-by-proxy", "connection",
    "keep-alive", "te",      "trailer",           "transfer-encoding",      "upgrade",
    "proxy-authenticate",    "proxy-authorization", "x-page-cache",         "set-cookie",
};

std::string normalize_value(std::string_view v) {
    std::string out;
    bool pending_space = false;
    for (char c : uri::trim(v)) {
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            pending_space = true;
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

std::optional<std::string> field_value(const fetch::FetchResult& r, const std::string& name) {
    if (name == "location") return r.location;
    if (name == "content-type" && r.content_type) return r.content_type;
    return r.header(name);
}

[[noreturn]] void malformed(const std::string& what) {
    throw FixityError(FixityError::Kind::MalformedManifest, "malformed manifest: " + what);
}

json optional_time(const std::optional<UtcTime>& t) {
    return t ? json(format_rfc3339(*t)) : json(nullptr);
}

template <typename E>
E enum_field(const json& j, const char* key, std::optional<E> (*parse)(std::string_view)) {
    auto v = parse(j.at(key).get<std::string>());
    if (!v) malformed(std::string("unknown value for ") + key);
    return *v;
}

std::optional<extract::ClassValue> class_value_from_string(std::string_view s) {
    using extract::ClassValue;
    for (auto v : {ClassValue::ArchivedMemento, ClassValue::ArchiveSpecific, ClassValue::LiveWeb})
        if (extract::to_string(v) == s) return v;
    return std::nullopt;
}

std::optional<extract::Evidence> evidence_from_string(std::string_view s) {
    using extract::Evidence;
    for (auto v : {Evidence::UriPattern, Evidence::DoNotNegotiateHeader, Evidence::ConfigDenyList,
                   Evidence::NoArchivePrefix})
        if (extract::to_string(v) == s) return v;
    return std::nullopt;
}

json record_to_json(const ResourceRecord& r) {
    return json{{"target", r.target.str()},
                {"memento_uri", r.memento_uri},
                {"classification",
                 {{"value", extract::to_string(r.classification.value)},
                  {"evidence", extract::to_string(r.classification.evidence)}}},
                {"memento_datetime", optional_time(r.memento_datetime)},
                {"content_hash", r.content_hash},
                {"header_digest_input", r.header_digest_input},
                {"cache_status", fetch::to_string(r.cache_status)},
                {"stability", fetch::to_string(r.stability)},
                {"raw_used", r.raw_used},
                {"stripped", r.stripped},
                {"datetime_mismatch", r.datetime_mismatch}};
}

ResourceRecord record_from_json(const json& j) {
    auto target = protocol::OriginalUri::try_parse(j.at("target").get<std::string>());
    if (!target) malformed("record target is not an original URI");
    ResourceRecord r{*target, j.at("memento_uri").get<std::string>(), {}, {}, {}, {}};
    const auto& c = j.at("classification");
    r.classification = {enum_field(c, "value", class_value_from_string),
                        enum_field(c, "evidence", evidence_from_string)};
    if (!j.at("memento_datetime").is_null()) {
        r.memento_datetime = parse_rfc3339(j["memento_datetime"].get<std::string>());
        if (!r.memento_datetime) malformed("bad memento_datetime");
    }
    r.content_hash = j.at("content_hash").get<std::string>();
    r.header_digest_input = j.at("header_digest_input").get<std::string>();
    r.cache_status = enum_field(j, "cache_status", fetch::page_cache_from_string);
    r.stability = enum_field(j, "stability", fetch::stability_from_string);
    r.raw_used = j.at("raw_used").get<bool>();
    r.stripped = j.value("stripped", false);
    r.datetime_mismatch = j.value("datetime_mismatch", false);
    return r;
}

auto record_key(const ResourceRecord& r) { return std::tie(r.target.str(), r.memento_uri); }

}  // namespace

// ---- profile ------------------------------------------------------------------------------

void HashProfile::validate() {
    std::set<std::string> seen;
    for (auto& name : included_headers) {
        name = uri::lowercase(uri::trim(name));
        if (name.empty()) throw FixityError(FixityError::Kind::InvalidProfile, "empty header name");
        for (auto rejected : kRejectedHeaders)
            if (name == rejected)
                throw FixityError(FixityError::Kind::InvalidProfile,
                                  "header '" + name + "' varies between retrievals and cannot be hashed");
        if (!seen.insert(name).second)
            throw FixityError(FixityError::Kind::InvalidProfile, "header '" + name + "' listed twice");
    }
}

void to_json(json& j, const HashProfile& p) {
    j = json{{"algorithm", algorithm_name(p.algorithm)},
             {"included_headers", p.included_headers},
             {"include_body", p.include_body},
             {"html_only", p.html_only}};
}

HashProfile profile_from_json(const json& j) {
    HashProfile p;
    if (j.contains("algorithm")) {
        auto a = parse_algorithm(j["algorithm"].get<std::string>());
        if (!a) throw FixityError(FixityError::Kind::InvalidProfile, "unknown hash algorithm");
        p.algorithm = *a;
    }
    if (j.contains("included_headers"))
        p.included_headers = j["included_headers"].get<std::vector<std::string>>();
    p.include_body = j.value("include_body", p.include_body);
    p.html_only = j.value("html_only", p.html_only);
    p.validate();
    return p;
}

// ---- per-resource hashing -----------------------------------------------------------------

std::string canonical_header_section(const fetch::FetchResult& r, const HashProfile& profile) {
    std::string out;
    for (const auto& name : profile.included_headers) {
        if (name == kStatusField) {
            out += "status:" + std::to_string(r.status) + "\n";
            continue;
        }
        auto value = field_value(r, name);
        out += name + ":" + (value ? normalize_value(*value) : std::string("-")) + "\n";
    }
    return out;
}

std::string canonical_serialization(const fetch::FetchResult& r, const HashProfile& profile) {
    std::string out = canonical_header_section(r, profile);
    if (!out.empty()) out += "\n";
    if (profile.include_body) out += r.body;
    return out;
}

std::string hash_resource(const fetch::FetchResult& r, const HashProfile& profile) {
    return hex_digest(profile.algorithm, canonical_serialization(r, profile));
}

// ---- aggregation --------------------------------------------------------------------------

std::string_view to_string(ExclusionReason r) {
    switch (r) {
        case ExclusionReason::ArchiveSpecific: return "ArchiveSpecific";
        case ExclusionReason::LiveWeb: return "LiveWeb";
        case ExclusionReason::Dynamic: return "Dynamic";
        case ExclusionReason::CacheHit: return "CacheHit";
        case ExclusionReason::FetchError: return "FetchError";
    }
    return "FetchError";
}

std::optional<ExclusionReason> exclusion_from_string(std::string_view s) {
    for (auto r : {ExclusionReason::ArchiveSpecific, ExclusionReason::LiveWeb, ExclusionReason::Dynamic,
                   ExclusionReason::CacheHit, ExclusionReason::FetchError})
        if (to_string(r) == s) return r;
    return std::nullopt;
}

void sort_records(std::vector<ResourceRecord>& records) {
    std::sort(records.begin(), records.end(),
              [](const ResourceRecord& a, const ResourceRecord& b) { return record_key(a) < record_key(b); });
}

std::string aggregate_input(const std::vector<ResourceRecord>& records) {
    auto sorted = records;
    sort_records(sorted);
    std::string out;
    for (const auto& r : sorted) out += r.content_hash + " " + r.target.str() + "\n";
    return out;
}

std::string aggregate(const std::vector<ResourceRecord>& records, const HashProfile& profile) {
    if (records.empty())
        throw FixityError(FixityError::Kind::EmptyManifest, "no hashable resources in the composite");
    if (records.size() == 1) return records.front().content_hash;
    return hex_digest(profile.algorithm, aggregate_input(records));
}

FixityManifest build_manifest(const protocol::MementoUri& root,
                              const std::vector<extract::ExpansionRow>& rows,
                              const HashProfile& profile, UtcTime observed_at) {
    using extract::ClassValue;
    FixityManifest m{root, observed_at, profile, {}, {}, {}, std::string(kToolkitVersion)};
    for (const auto& row : rows) {
        const std::string& u = row.resource.resolved_uri;
        switch (row.classification.value) {
            case ClassValue::ArchiveSpecific:
                m.excluded.push_back({u, ExclusionReason::ArchiveSpecific,
                                      std::string(extract::to_string(row.classification.evidence))});
                continue;
            case ClassValue::LiveWeb:
                m.excluded.push_back({u, ExclusionReason::LiveWeb,
                                      std::string(extract::to_string(row.classification.evidence))});
                continue;
            case ClassValue::ArchivedMemento: break;
        }
        if (row.error) {
            bool cache = row.error->kind() == fetch::FetchError::Kind::TooManyCacheHits;
            m.excluded.push_back({u, cache ? ExclusionReason::CacheHit : ExclusionReason::FetchError,
                                  row.error->what()});
            continue;
        }
        const auto& r = *row.result;
        // An embedded 404 is evidence worth hashing; a root that is not there is not a memento.
        if (row.resource.origin == extract::Origin::Root && (r.status < 200 || r.status >= 300)) {
            m.excluded.push_back({u, ExclusionReason::FetchError,
                                  "root answered " + std::to_string(r.status)});
            continue;
        }
        if (r.stability == fetch::Stability::Dynamic) {
            m.excluded.push_back({u, ExclusionReason::Dynamic, "content differed between two retrievals"});
            continue;
        }
        const auto& memento = *row.memento;
        ResourceRecord rec{memento.target, u, row.classification, r.memento_datetime,
                           hash_resource(r, profile), canonical_header_section(r, profile)};
        rec.cache_status = r.page_cache;
        rec.stability = r.stability;
        rec.raw_used = r.raw_used;
        rec.stripped = row.stripped;
        rec.datetime_mismatch = r.memento_datetime && *r.memento_datetime != memento.datetime();
        m.records.push_back(std::move(rec));
    }
    sort_records(m.records);
    std::sort(m.excluded.begin(), m.excluded.end(), [](const Exclusion& a, const Exclusion& b) {
        return std::tie(a.uri, a.reason) < std::tie(b.uri, b.reason);
    });
    m.aggregate_hash = aggregate(m.records, profile);
    return m;
}

FixityManifest hash_composite_memento(const protocol::MementoUri& root,
                                      const fetch::FetchPolicy& policy,
                                      const HashProfile& profile, const ArchiveConfig& config) {
    HashProfile p = profile;
    p.validate();
    UtcTime observed = utc_now();
    auto rows = extract::expand_composite(root, policy, config);
    return build_manifest(root, rows, p, observed);
}

std::string hash_html_only(const protocol::MementoUri& root, const fetch::FetchPolicy& policy,
                           const HashProfile& profile) {
    auto r = fetch::fetch_resource(serialize(root), policy);
    return hex_digest(profile.algorithm, r.body);
}

FixityManifest html_only_manifest(const protocol::MementoUri& root,
                                  const fetch::FetchPolicy& policy, HashProfile profile) {
    profile.html_only = true;
    profile.validate();
    UtcTime observed = utc_now();
    std::string uri = serialize(root);
    auto r = fetch::fetch_resource(uri, policy);
    ResourceRecord rec{root.target, uri, {extract::ClassValue::ArchivedMemento, extract::Evidence::UriPattern},
                       r.memento_datetime, hex_digest(profile.algorithm, r.body), ""};
    rec.cache_status = r.page_cache;
    rec.datetime_mismatch = r.memento_datetime && *r.memento_datetime != root.datetime();
    FixityManifest m{root, observed, profile, {std::move(rec)}, {}, {}, std::string(kToolkitVersion)};
    m.aggregate_hash = aggregate(m.records, profile);
    return m;
}

// ---- manifest documents -------------------------------------------------------------------

json manifest_to_json(const FixityManifest& m) {
    json records = json::array();
    for (const auto& r : m.records) records.push_back(record_to_json(r));
    json excluded = json::array();
    for (const auto& e : m.excluded)
        excluded.push_back(json{{"uri", e.uri}, {"reason", to_string(e.reason)}, {"detail", e.detail}});
    return json{{"root", serialize(m.root)},
                {"observed_at", format_rfc3339(m.observed_at)},
                {"profile", m.profile},
                {"records", std::move(records)},
                {"excluded", std::move(excluded)},
                {"aggregate_hash", m.aggregate_hash},
                {"toolkit_version", m.toolkit_version}};
}

FixityManifest manifest_from_json(const json& j) {
    try {
        auto root = protocol::parse_memento_uri(j.at("root").get<std::string>());
        if (!root) malformed("root is not a URI-M");
        auto observed = parse_rfc3339(j.at("observed_at").get<std::string>());
        if (!observed) malformed("bad observed_at");
        FixityManifest m{*root, *observed, profile_from_json(j.at("profile")), {}, {}, {}, {}};
        for (const auto& r : j.at("records")) m.records.push_back(record_from_json(r));
        for (const auto& e : j.at("excluded"))
            m.excluded.push_back({e.at("uri").get<std::string>(),
                                  enum_field(e, "reason", exclusion_from_string),
                                  e.value("detail", std::string())});
        m.aggregate_hash = j.at("aggregate_hash").get<std::string>();
        m.toolkit_version = j.value("toolkit_version", std::string());
        for (const auto& r : m.records)
            if (r.content_hash.size() != hex_length(m.profile.algorithm) || !is_lower_hex(r.content_hash))
                malformed("content_hash of " + r.memento_uri + " is not a " +
                          std::string(algorithm_name(m.profile.algorithm)) + " digest");
        auto sorted = m.records;
        sort_records(sorted);
        if (sorted != m.records) malformed("records are not sorted");
        if (aggregate(m.records, m.profile) != m.aggregate_hash)
            malformed("aggregate_hash does not match the records");
        return m;
    } catch (const nlohmann::json::exception& e) {
        malformed(e.what());
    } catch (const protocol::ProtocolError& e) {
        malformed(e.what());
    }
}

// ---- comparison ---------------------------------------------------------------------------

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::Match: return "Match";
        case Verdict::Tampered: return "Tampered";
        case Verdict::Inconclusive: return "Inconclusive";
    }
    return "Inconclusive";
}

json report_to_json(const VerificationReport& r) {
    auto changes = [](const std::vector<RecordChange>& list) {
        json out = json::array();
        for (const auto& c : list)
            out.push_back(json{{"target", c.target},
                               {"memento_uri", c.memento_uri},
                               {"before", c.before ? json(*c.before) : json(nullptr)},
                               {"after", c.after ? json(*c.after) : json(nullptr)}});
        return out;
    };
    return json{{"verdict", to_string(r.verdict)},
                {"changed", changes(r.changed)},
                {"added", changes(r.added)},
                {"removed", changes(r.removed)},
                {"notes", r.notes}};
}

VerificationReport report_from_json(const json& j) {
    auto changes = [](const json& list) {
        std::vector<RecordChange> out;
        for (const auto& c : list) {
            RecordChange rc{c.at("target").get<std::string>(), c.at("memento_uri").get<std::string>(), {}, {}};
            if (!c.at("before").is_null()) rc.before = c["before"].get<std::string>();
            if (!c.at("after").is_null()) rc.after = c["after"].get<std::string>();
            out.push_back(std::move(rc));
        }
        return out;
    };
    try {
        VerificationReport r;
        auto verdict = j.at("verdict").get<std::string>();
        bool known = false;
        for (auto v : {Verdict::Match, Verdict::Tampered, Verdict::Inconclusive})
            if (to_string(v) == verdict) {
                r.verdict = v;
                known = true;
            }
        if (!known) malformed("unknown verdict " + verdict);
        r.changed = changes(j.at("changed"));
        r.added = changes(j.at("added"));
        r.removed = changes(j.at("removed"));
        r.notes = j.at("notes").get<std::vector<std::string>>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        malformed(e.what());
    }
}

VerificationReport compare_manifests(const FixityManifest& a, const FixityManifest& b) {
    if (!(a.root == b.root))
        throw FixityError(FixityError::Kind::RootMismatch,
                          "manifests describe different roots: " + serialize(a.root) + " vs " + serialize(b.root));
    if (!(a.profile == b.profile))
        throw FixityError(FixityError::Kind::ProfileMismatch, "manifests were hashed under different profiles");

    using Key = std::pair<std::string, std::string>;
    auto index = [](const FixityManifest& m) {
        std::map<Key, const ResourceRecord*> out;
        for (const auto& r : m.records) out[{r.target.str(), r.memento_uri}] = &r;
        return out;
    };
    auto exclusions = [](const FixityManifest& m) {
        std::map<std::string, ExclusionReason> out;
        for (const auto& e : m.excluded) out.emplace(e.uri, e.reason);
        return out;
    };
    auto ra = index(a), rb = index(b);
    auto ea = exclusions(a), eb = exclusions(b);

    VerificationReport rep;
    for (const auto& [k, rec] : ra) {
        auto it = rb.find(k);
        if (it == rb.end()) {
            rep.removed.push_back({k.first, k.second, rec->content_hash, std::nullopt});
            if (auto ex = eb.find(k.second); ex != eb.end())
                rep.notes.push_back(k.second + " was recorded before and is now excluded as " +
                                    std::string(to_string(ex->second)));
        } else if (it->second->content_hash != rec->content_hash) {
            rep.changed.push_back({k.first, k.second, rec->content_hash, it->second->content_hash});
        }
    }
    for (const auto& [k, rec] : rb) {
        if (ra.count(k)) continue;
        rep.added.push_back({k.first, k.second, std::nullopt, rec->content_hash});
        if (auto ex = ea.find(k.second); ex != ea.end())
            rep.notes.push_back(k.second + " was excluded before as " + std::string(to_string(ex->second)) +
                                " and is now recorded");
    }
    // Exclusions that reflect retrieval conditions rather than content.
    auto unstable = [](ExclusionReason r) {
        return r == ExclusionReason::Dynamic || r == ExclusionReason::CacheHit ||
               r == ExclusionReason::FetchError;
    };
    auto unstable_shift = [&](const auto& from, const auto& to, const char* what) {
        for (const auto& [u, reason] : from) {
            if (!unstable(reason)) continue;
            auto it = to.find(u);
            if (it != to.end() && it->second == reason) continue;
            bool recorded_elsewhere = false;
            for (const auto& [k, rec] : ra) recorded_elsewhere |= k.second == u;
            for (const auto& [k, rec] : rb) recorded_elsewhere |= k.second == u;
            if (recorded_elsewhere) continue;  // already noted above
            rep.notes.push_back(u + " is excluded as " + std::string(to_string(reason)) + " only in the " + what +
                                " manifest");
        }
    };
    unstable_shift(ea, eb, "earlier");
    unstable_shift(eb, ea, "later");

    if (!rep.changed.empty())
        rep.verdict = Verdict::Tampered;
    else if (!rep.notes.empty())
        rep.verdict = Verdict::Inconclusive;
    else if (!rep.added.empty() || !rep.removed.empty())
        rep.verdict = Verdict::Tampered;
    else
        rep.verdict = Verdict::Match;
    return rep;
}

}  // namespace memfix::fixity
