#include "memfix/protocol.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <tuple>

#include "memfix/uri.hpp"

namespace memfix::protocol {

namespace {

constexpr std::array<std::string_view, 7> kWeekdays = {"Sun", "Mon", "Tue", "Wed",
                                                       "Thu", "Fri", "Sat"};
constexpr std::array<std::string_view, 12> kMonths = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                      "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

std::string weekday_of(UtcTime t) {
    std::chrono::weekday wd{std::chrono::floor<std::chrono::days>(t)};
    return std::string(kWeekdays[wd.c_encoding()]);
}

// Normalizes the part after "<ts><modifier>/" into an absolute http(s) URI.
std::optional<std::string> normalize_target(std::string_view target, std::string_view prefix) {
    if (target.empty()) return std::nullopt;
    for (std::string_view scheme : {"http", "https"}) {
        std::string with_colon = std::string(scheme) + ":";
        if (!uri::istarts_with(target, with_colon)) continue;
        std::string_view rest = target.substr(with_colon.size());
        if (rest.substr(0, 2) == "//") return std::string(target);
        // replay systems sometimes collapse "http://" into "http:/"
        if (rest.substr(0, 1) == "/") return with_colon + "/" + std::string(rest);
        return std::nullopt;
    }
    if (target.substr(0, 2) == "//") {
        auto scheme = uri::split(prefix).scheme;
        if (scheme.empty()) scheme = "http";
        return scheme + ":" + std::string(target);
    }
    // A different explicit scheme is not an http(s) original.
    auto colon = target.find(':');
    auto slash = target.find('/');
    if (colon != std::string_view::npos && (slash == std::string_view::npos || colon < slash)) {
        auto scheme = target.substr(0, colon);
        bool all_alpha = std::all_of(scheme.begin(), scheme.end(), [](char c) {
            return std::isalpha(static_cast<unsigned char>(c)) != 0;
        });
        // "host:port/..." has digits after the colon; "mailto:" etc. do not
        if (all_alpha && !(colon + 1 < target.size() && is_digit(target[colon + 1])))
            return std::nullopt;
    }
    return "http://" + std::string(target);
}

std::optional<MementoUri> parse_with_prefix(std::string_view uri, std::string_view prefix) {
    std::string_view rest = uri.substr(prefix.size());
    if (rest.size() < 15) return std::nullopt;
    std::string_view ts = rest.substr(0, 14);
    if (!parse_timestamp14(ts)) return std::nullopt;
    rest.remove_prefix(14);
    Modifier modifier = Modifier::None;
    std::string opaque;
    if (rest.front() != '/') {
        auto slash = rest.find('/');
        if (slash == std::string_view::npos || slash < 2) return std::nullopt;
        std::string_view mod = rest.substr(0, slash);
        if (mod.back() != '_') return std::nullopt;
        for (char c : mod.substr(0, mod.size() - 1))
            if (!std::isalnum(static_cast<unsigned char>(c))) return std::nullopt;
        if (mod == "id_")
            modifier = Modifier::Raw;
        else if (mod == "im_")
            modifier = Modifier::Image;
        else {
            modifier = Modifier::Opaque;
            opaque = std::string(mod);
        }
        rest.remove_prefix(slash);
    }
    rest.remove_prefix(1);  // the '/'
    auto target = normalize_target(rest, prefix);
    if (!target) return std::nullopt;
    auto original = OriginalUri::try_parse(*target);
    if (!original) return std::nullopt;
    return MementoUri{std::string(prefix), std::string(ts), modifier, std::move(opaque),
                      std::move(*original)};
}

// Tokenizer for RFC 8288 link-values; also used for link-format bodies.
class LinkParser {
public:
    explicit LinkParser(std::string_view text) : s_(text) {}

    std::vector<Link> parse() {
        std::vector<Link> links;
        while (true) {
            skip_separators();
            if (at_end()) break;
            links.push_back(parse_link());
        }
        return links;
    }

private:
    [[noreturn]] void fail(const std::string& why) const {
        throw ProtocolError(ProtocolError::Kind::MalformedLinkHeader,
                            "malformed Link value at offset " + std::to_string(i_) + ": " + why);
    }

    bool at_end() const { return i_ >= s_.size(); }
    char peek() const { return s_[i_]; }

    void skip_ws() {
        while (!at_end() && is_ws(peek())) ++i_;
    }

    void skip_separators() {
        while (!at_end() && (is_ws(peek()) || peek() == ',')) ++i_;
    }

    Link parse_link() {
        if (peek() != '<') fail("expected '<'");
        auto close = s_.find('>', i_ + 1);
        if (close == std::string_view::npos) fail("unterminated '<'");
        Link link;
        link.target = std::string(uri::trim(s_.substr(i_ + 1, close - i_ - 1)));
        if (link.target.find('<') != std::string::npos) fail("nested '<'");
        i_ = close + 1;
        bool seen_rel = false;
        while (true) {
            skip_ws();
            if (at_end() || peek() == ',') break;
            if (peek() != ';') fail("expected ';' or ','");
            ++i_;
            skip_ws();
            auto [name, value] = parse_param();
            if (name.empty()) continue;
            if (name == "rel") {
                if (seen_rel) continue;  // only the first rel counts
                seen_rel = true;
                std::size_t k = 0;
                while (k < value.size()) {
                    while (k < value.size() && is_ws(value[k])) ++k;
                    std::size_t start = k;
                    while (k < value.size() && !is_ws(value[k])) ++k;
                    if (k > start) link.rels.push_back(uri::lowercase(value.substr(start, k - start)));
                }
            }
            link.attributes.emplace_back(std::move(name), std::move(value));
        }
        return link;
    }

    std::pair<std::string, std::string> parse_param() {
        std::size_t start = i_;
        while (!at_end() && peek() != '=' && peek() != ';' && peek() != ',' && !is_ws(peek())) {
            if (peek() == '"' || peek() == '<' || peek() == '>') fail("unexpected character in parameter name");
            ++i_;
        }
        std::string name = uri::lowercase(s_.substr(start, i_ - start));
        skip_ws();
        if (at_end() || peek() != '=') return {name, ""};
        ++i_;
        skip_ws();
        std::string value;
        if (!at_end() && peek() == '"') {
            ++i_;
            bool closed = false;
            while (!at_end()) {
                char c = peek();
                ++i_;
                if (c == '\\') {
                    if (at_end()) break;
                    value.push_back(peek());
                    ++i_;
                } else if (c == '"') {
                    closed = true;
                    break;
                } else {
                    value.push_back(c);
                }
            }
            if (!closed) fail("unterminated quoted string");
        } else {
            std::size_t vstart = i_;
            while (!at_end() && peek() != ';' && peek() != ',' && !is_ws(peek())) {
                if (peek() == '"' || peek() == '<' || peek() == '>') fail("unbalanced quote or bracket");
                ++i_;
            }
            value = std::string(s_.substr(vstart, i_ - vstart));
        }
        return {name, value};
    }

    std::string_view s_;
    std::size_t i_ = 0;
};

using EntryKey = std::pair<std::string, UtcTime::rep>;

EntryKey key_of(const TimeMapEntry& e) {
    return {serialize(e.memento), e.datetime.time_since_epoch().count()};
}

std::optional<OriginalUri> original_embedded_in(std::string_view timemap_uri) {
    // ".../timemap/link/<uri-r>": the URI-R is the first http(s) URI after the authority.
    auto scheme_end = timemap_uri.find("://");
    if (scheme_end == std::string_view::npos) return std::nullopt;
    for (std::size_t pos = scheme_end + 3; pos < timemap_uri.size(); ++pos) {
        auto tail = timemap_uri.substr(pos);
        if (uri::istarts_with(tail, "http://") || uri::istarts_with(tail, "https://"))
            return OriginalUri::try_parse(tail);
    }
    return std::nullopt;
}

}  // namespace

// ---- OriginalUri / MementoUri --------------------------------------------------------------

OriginalUri OriginalUri::parse(std::string_view uri) {
    auto parsed = try_parse(uri);
    if (!parsed)
        throw ProtocolError(ProtocolError::Kind::InvalidUri,
                            "not an absolute http(s) URI: " + std::string(uri));
    return *parsed;
}

std::optional<OriginalUri> OriginalUri::try_parse(std::string_view text) {
    if (!uri::is_http_uri(text)) return std::nullopt;
    for (char c : text)
        if (static_cast<unsigned char>(c) <= 0x20) return std::nullopt;
    return OriginalUri(std::string(text));
}

std::string MementoUri::modifier_text() const {
    switch (modifier) {
        case Modifier::None: return "";
        case Modifier::Raw: return "id_";
        case Modifier::Image: return "im_";
        case Modifier::Opaque: return opaque_modifier;
    }
    return "";
}

UtcTime MementoUri::datetime() const { return *parse_timestamp14(timestamp14); }

std::string MementoUri::str() const { return serialize(*this); }

std::string serialize(const MementoUri& m) {
    return m.archive_prefix + m.timestamp14 + m.modifier_text() + "/" + m.target.str();
}

std::optional<MementoUri> parse_memento_uri(std::string_view uri,
                                            std::span<const std::string> archive_prefixes) {
    const std::string* best = nullptr;
    for (const auto& prefix : archive_prefixes) {
        if (prefix.empty() || uri.substr(0, prefix.size()) != prefix) continue;
        if (!best || prefix.size() > best->size()) best = &prefix;
    }
    if (!best) return std::nullopt;
    return parse_with_prefix(uri, *best);
}

std::optional<MementoUri> parse_memento_uri(std::string_view uri) {
    auto scheme_end = uri.find("://");
    if (scheme_end == std::string_view::npos) return std::nullopt;
    auto path_start = uri.find('/', scheme_end + 3);
    while (path_start != std::string_view::npos) {
        std::size_t ts_start = path_start + 1;
        if (ts_start + 14 < uri.size() &&
            std::all_of(uri.begin() + static_cast<std::ptrdiff_t>(ts_start),
                        uri.begin() + static_cast<std::ptrdiff_t>(ts_start + 14), is_digit)) {
            if (auto m = parse_with_prefix(uri, uri.substr(0, ts_start))) return m;
        }
        path_start = uri.find('/', path_start + 1);
    }
    return std::nullopt;
}

MementoUri build_raw_uri(MementoUri m) {
    m.modifier = Modifier::Raw;
    m.opaque_modifier.clear();
    return m;
}

// ---- Link headers -------------------------------------------------------------------------

bool Link::has_rel(std::string_view rel) const {
    return std::any_of(rels.begin(), rels.end(), [&](const std::string& r) { return r == rel; });
}

std::optional<std::string> Link::attribute(std::string_view name) const {
    for (const auto& [k, v] : attributes)
        if (k == name) return v;
    return std::nullopt;
}

const Link* LinkRelationSet::find(std::string_view rel) const {
    for (const auto& link : links_)
        if (link.has_rel(rel)) return &link;
    return nullptr;
}

bool LinkRelationSet::is_do_not_negotiate() const {
    return std::any_of(links_.begin(), links_.end(), [](const Link& l) {
        return l.target == kDoNotNegotiate && l.has_rel("type");
    });
}

LinkRelationSet parse_link_header(std::string_view value) {
    return LinkRelationSet(LinkParser(value).parse());
}

// ---- HTTP datetimes -----------------------------------------------------------------------

std::optional<UtcTime> try_parse_http_datetime(std::string_view v) {
    // "Wed, 24 Jul 2013 14:48:01 GMT"
    if (v.size() != 29 || v[3] != ',' || v[4] != ' ' || v[7] != ' ' || v[11] != ' ' ||
        v[16] != ' ' || v[19] != ':' || v[22] != ':' || v[25] != ' ' || v.substr(26) != "GMT")
        return std::nullopt;
    auto month_it = std::find(kMonths.begin(), kMonths.end(), v.substr(8, 3));
    if (month_it == kMonths.end()) return std::nullopt;
    auto num = [&](std::size_t pos, std::size_t n) -> std::optional<unsigned> {
        unsigned out = 0;
        for (std::size_t i = pos; i < pos + n; ++i) {
            if (!is_digit(v[i])) return std::nullopt;
            out = out * 10 + static_cast<unsigned>(v[i] - '0');
        }
        return out;
    };
    auto day = num(5, 2), year = num(12, 4), h = num(17, 2), mi = num(20, 2), s = num(23, 2);
    if (!day || !year || !h || !mi || !s) return std::nullopt;
    auto t = make_utc(static_cast<int>(*year),
                      static_cast<unsigned>(month_it - kMonths.begin()) + 1, *day, *h, *mi, *s);
    if (!t || weekday_of(*t) != v.substr(0, 3)) return std::nullopt;
    return t;
}

UtcTime parse_http_datetime(std::string_view value) {
    auto t = try_parse_http_datetime(value);
    if (!t)
        throw ProtocolError(ProtocolError::Kind::MalformedDatetime,
                            "not an IMF-fixdate: " + std::string(value));
    return *t;
}

std::string format_http_datetime(UtcTime t) {
    using namespace std::chrono;
    auto day_point = floor<days>(t);
    year_month_day ymd{day_point};
    hh_mm_ss hms{t - day_point};
    char buf[40];
    std::snprintf(buf, sizeof buf, "%s, %02u %s %04d %02ld:%02ld:%02ld GMT",
                  weekday_of(t).c_str(), static_cast<unsigned>(ymd.day()),
                  std::string(kMonths[static_cast<unsigned>(ymd.month()) - 1]).c_str(),
                  static_cast<int>(ymd.year()), static_cast<long>(hms.hours().count()),
                  static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()));
    return buf;
}

// ---- TimeMaps -----------------------------------------------------------------------------

TimeMapSnapshot parse_link_format(std::string_view body, std::string_view base,
                                  std::span<const std::string> archive_prefixes) {
    std::vector<Link> links;
    try {
        links = LinkParser(body).parse();
    } catch (const ProtocolError& e) {
        throw ProtocolError(ProtocolError::Kind::MalformedLinkFormat, e.what());
    }

    TimeMapSnapshot snap;
    snap.timemap_uri = std::string(base);
    snap.observed_at = utc_now();
    for (const auto& link : links) {
        auto resolved = uri::resolve(base, link.target);
        std::string target = resolved ? *resolved : link.target;
        if (link.has_rel("original") && !snap.original) snap.original = OriginalUri::try_parse(target);
        if (link.has_rel("timegate") && !snap.timegate) snap.timegate = target;
        if (link.has_rel("self")) snap.timemap_uri = target;
        if (!link.has_rel("memento")) continue;

        auto datetime = link.attribute("datetime");
        auto when = datetime ? try_parse_http_datetime(*datetime) : std::nullopt;
        // rel="memento" already says what the target is, so an unlisted prefix is fine
        auto memento = archive_prefixes.empty() ? std::nullopt : parse_memento_uri(target, archive_prefixes);
        if (!memento) memento = parse_memento_uri(target);
        if (!when || !memento) {
            ++snap.parse_warnings;
            continue;
        }
        if (link.has_rel("first")) snap.first = snap.entries.size();
        if (link.has_rel("last")) snap.last = snap.entries.size();
        snap.entries.push_back({std::move(*memento), *when});
    }
    if (!snap.original) snap.original = original_embedded_in(snap.timemap_uri);
    return snap;
}

TimeMapDelta diff_timemaps(const TimeMapSnapshot& a, const TimeMapSnapshot& b) {
    if (a.original && b.original && *a.original != *b.original)
        throw ProtocolError(ProtocolError::Kind::OriginalMismatch,
                            "TimeMaps describe different originals: " + a.original->str() +
                                " vs " + b.original->str());
    std::set<EntryKey> in_a, in_b;
    for (const auto& e : a.entries) in_a.insert(key_of(e));
    for (const auto& e : b.entries) in_b.insert(key_of(e));

    TimeMapDelta delta;
    std::set<EntryKey> emitted;
    for (const auto& e : b.entries) {
        auto k = key_of(e);
        if (!in_a.count(k) && emitted.insert(k).second) delta.added.push_back(e);
    }
    emitted.clear();
    for (const auto& e : a.entries) {
        auto k = key_of(e);
        if (!in_b.count(k) && emitted.insert(k).second) delta.removed.push_back(e);
    }
    for (const auto& k : in_a) delta.unchanged_count += in_b.count(k);
    return delta;
}

// ---- JSON ---------------------------------------------------------------------------------

void to_json(nlohmann::ordered_json& j, const TimeMapEntry& e) {
    j = nlohmann::ordered_json{{"memento_uri", serialize(e.memento)},
                               {"datetime", format_rfc3339(e.datetime)}};
}

void to_json(nlohmann::ordered_json& j, const TimeMapSnapshot& s) {
    j = nlohmann::ordered_json::object();
    j["timemap_uri"] = s.timemap_uri;
    j["original"] = s.original ? nlohmann::ordered_json(s.original->str()) : nullptr;
    j["entries"] = s.entries;
    j["first"] = s.first ? nlohmann::ordered_json(*s.first) : nullptr;
    j["last"] = s.last ? nlohmann::ordered_json(*s.last) : nullptr;
    j["timegate"] = s.timegate ? nlohmann::ordered_json(*s.timegate) : nullptr;
    j["observed_at"] = format_rfc3339(s.observed_at);
    j["parse_warnings"] = s.parse_warnings;
}

void to_json(nlohmann::ordered_json& j, const TimeMapDelta& d) {
    j = nlohmann::ordered_json{{"added", d.added},
                               {"removed", d.removed},
                               {"unchanged_count", d.unchanged_count}};
}

namespace {

TimeMapEntry entry_from_json(const nlohmann::ordered_json& j) {
    auto uri = j.at("memento_uri").get<std::string>();
    auto memento = parse_memento_uri(uri);
    auto when = parse_rfc3339(j.at("datetime").get<std::string>());
    if (!memento || !when)
        throw ProtocolError(ProtocolError::Kind::NotAMemento, "bad TimeMap entry: " + uri);
    return {std::move(*memento), *when};
}

std::vector<TimeMapEntry> entries_from_json(const nlohmann::ordered_json& j) {
    std::vector<TimeMapEntry> out;
    for (const auto& e : j) out.push_back(entry_from_json(e));
    return out;
}

}  // namespace

TimeMapSnapshot snapshot_from_json(const nlohmann::ordered_json& j) {
    TimeMapSnapshot s;
    s.timemap_uri = j.at("timemap_uri").get<std::string>();
    if (!j.at("original").is_null()) s.original = OriginalUri::parse(j["original"].get<std::string>());
    s.entries = entries_from_json(j.at("entries"));
    if (!j.at("first").is_null()) s.first = j["first"].get<std::size_t>();
    if (!j.at("last").is_null()) s.last = j["last"].get<std::size_t>();
    if (!j.at("timegate").is_null()) s.timegate = j["timegate"].get<std::string>();
    auto observed = parse_rfc3339(j.at("observed_at").get<std::string>());
    if (!observed)
        throw ProtocolError(ProtocolError::Kind::MalformedDatetime, "bad observed_at in snapshot");
    s.observed_at = *observed;
    s.parse_warnings = j.value("parse_warnings", std::size_t{0});
    return s;
}

TimeMapDelta delta_from_json(const nlohmann::ordered_json& j) {
    TimeMapDelta d;
    d.added = entries_from_json(j.at("added"));
    d.removed = entries_from_json(j.at("removed"));
    d.unchanged_count = j.at("unchanged_count").get<std::size_t>();
    return d;
}

}  // namespace memfix::protocol
