#include "memfix/extract.hpp"

#include <algorithm>
#include <future>
#include <set>
#include <utility>

#include "html_scan.hpp"
#include "memfix/uri.hpp"

namespace memfix::extract {

namespace {

using detail::Token;

constexpr std::pair<Origin, std::string_view> kOriginNames[] = {
    {Origin::Root, "Root"},
    {Origin::ImgSrc, "ImgSrc"},
    {Origin::ImgSrcset, "ImgSrcset"},
    {Origin::ScriptSrc, "ScriptSrc"},
    {Origin::StylesheetHref, "StylesheetHref"},
    {Origin::CssUrl, "CssUrl"},
    {Origin::IframeSrc, "IframeSrc"},
    {Origin::FrameSrc, "FrameSrc"},
    {Origin::ObjectData, "ObjectData"},
    {Origin::EmbedSrc, "EmbedSrc"},
    {Origin::LinkIconHref, "LinkIconHref"},
};

std::string media_type(std::string_view content_type) {
    auto semi = content_type.find(';');
    return uri::lowercase(uri::trim(content_type.substr(0, semi)));
}

bool has_token(std::string_view list, std::string_view token) {
    std::size_t i = 0;
    while (i < list.size()) {
        while (i < list.size() && std::isspace(static_cast<unsigned char>(list[i]))) ++i;
        std::size_t start = i;
        while (i < list.size() && !std::isspace(static_cast<unsigned char>(list[i]))) ++i;
        if (i > start && uri::iequals(list.substr(start, i - start), token)) return true;
    }
    return false;
}

// Browsers drop tabs and newlines inside URL attributes and trim surrounding space.
std::string clean_reference(std::string_view raw) {
    std::string out;
    for (char c : uri::trim(raw))
        if (c != '\t' && c != '\n' && c != '\r') out.push_back(c);
    return out;
}

// Every candidate URL of a srcset, descriptors dropped.
std::vector<std::string> srcset_candidates(std::string_view srcset) {
    auto space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < srcset.size()) {
        while (i < srcset.size() && (space(srcset[i]) || srcset[i] == ',')) ++i;
        std::size_t start = i;
        while (i < srcset.size() && !space(srcset[i])) ++i;
        std::string_view url = srcset.substr(start, i - start);
        bool bare = !url.empty() && url.back() == ',';  // no descriptors follow
        while (!url.empty() && url.back() == ',') url.remove_suffix(1);
        if (!url.empty()) out.emplace_back(url);
        if (bare) continue;
        int parens = 0;
        for (; i < srcset.size(); ++i) {
            if (srcset[i] == '(') ++parens;
            else if (srcset[i] == ')' && parens > 0) --parens;
            else if (srcset[i] == ',' && parens == 0) break;
        }
    }
    return out;
}

class Collector {
public:
    Collector(std::string base, std::string source, int depth)
        : base_(std::move(base)), source_(std::move(source)), depth_(depth) {}

    void set_base(std::string base) { base_ = std::move(base); }

    void add(std::string_view raw, Origin origin) {
        std::string ref = clean_reference(raw);
        if (ref.empty() || ref.front() == '#') {
            ++out_.dropped;
            return;
        }
        auto resolved = uri::resolve(base_, ref);
        if (!resolved || !uri::is_http_uri(*resolved)) {
            ++out_.dropped;
            return;
        }
        std::string target = uri::strip_fragment(*resolved);
        if (!seen_.insert(target).second) return;
        out_.resources.push_back({std::string(raw), std::move(target), origin, source_, depth_});
    }

    void add_css(std::string_view css) {
        auto scan = detail::scan_css(css);
        out_.skipped += scan.skipped;
        for (const auto& ref : scan.references) add(ref.value, Origin::CssUrl);
    }

    Discovery finish(std::size_t skipped) {
        out_.skipped += skipped;
        return std::move(out_);
    }

private:
    std::string base_;
    std::string source_;
    int depth_;
    std::set<std::string> seen_;
    Discovery out_;
};

void collect_tag(const Token& tag, Collector& c) {
    const std::string& n = tag.name;
    auto attr = [&](std::string_view name) { return tag.attribute(name); };
    if (n == "img") {
        if (auto v = attr("src")) c.add(*v, Origin::ImgSrc);
        if (auto v = attr("srcset"))
            for (const auto& cand : srcset_candidates(*v)) c.add(cand, Origin::ImgSrcset);
    } else if (n == "source") {
        if (auto v = attr("srcset"))
            for (const auto& cand : srcset_candidates(*v)) c.add(cand, Origin::ImgSrcset);
    } else if (n == "script") {
        if (auto v = attr("src")) c.add(*v, Origin::ScriptSrc);
    } else if (n == "link") {
        auto rel = attr("rel");
        auto href = attr("href");
        if (rel && href) {
            if (has_token(*rel, "stylesheet"))
                c.add(*href, Origin::StylesheetHref);
            else if (has_token(*rel, "icon") || has_token(*rel, "apple-touch-icon"))
                c.add(*href, Origin::LinkIconHref);
        }
    } else if (n == "iframe") {
        if (auto v = attr("src")) c.add(*v, Origin::IframeSrc);
    } else if (n == "frame") {
        if (auto v = attr("src")) c.add(*v, Origin::FrameSrc);
    } else if (n == "object") {
        if (auto v = attr("data")) c.add(*v, Origin::ObjectData);
    } else if (n == "embed") {
        if (auto v = attr("src")) c.add(*v, Origin::EmbedSrc);
    }
    if (auto style = attr("style")) c.add_css(*style);
}

bool selector_matches(const Token& tag, std::string_view selector) {
    if (selector.size() < 2) return false;
    if (selector.front() == '#') {
        auto id = tag.attribute("id");
        return id && uri::trim(*id) == selector.substr(1);
    }
    if (selector.front() == '.') {
        auto cls = tag.attribute("class");
        if (!cls) return false;
        std::size_t i = 0;
        std::string_view list = *cls;
        while (i < list.size()) {
            while (i < list.size() && std::isspace(static_cast<unsigned char>(list[i]))) ++i;
            std::size_t start = i;
            while (i < list.size() && !std::isspace(static_cast<unsigned char>(list[i]))) ++i;
            if (i > start && list.substr(start, i - start) == selector.substr(1)) return true;
        }
    }
    return false;
}

// Index one past the end of the element opened at tokens[open], or nullopt when it is
// never closed.
std::optional<std::size_t> element_end(const std::vector<Token>& tokens, std::size_t open) {
    const std::string& name = tokens[open].name;
    int depth = 0;
    for (std::size_t k = open; k < tokens.size(); ++k) {
        const Token& t = tokens[k];
        if (t.kind == Token::Kind::StartTag && t.name == name && !t.self_closing) ++depth;
        if (t.kind == Token::Kind::EndTag && t.name == name && --depth == 0) return t.end;
    }
    return std::nullopt;
}

bool script_denied(const Token& tag, const StripProfile& profile, std::string_view base) {
    auto src = tag.attribute("src");
    if (!src) return false;
    std::string ref = clean_reference(*src);
    std::vector<std::string> candidates{ref};
    if (!base.empty())
        if (auto resolved = uri::resolve(base, ref)) candidates.push_back(*resolved);
    for (const auto& pattern : profile.deny)
        for (const auto& c : candidates)
            if (glob_match(pattern, c)) return true;
    return false;
}

bool is_2xx(int status) { return status >= 200 && status < 300; }

bool is_success(const fetch::FetchResult& r) { return is_2xx(r.status); }

}  // namespace

std::string_view to_string(Origin o) {
    for (const auto& [v, name] : kOriginNames)
        if (v == o) return name;
    return "Root";
}

std::optional<Origin> origin_from_string(std::string_view s) {
    for (const auto& [v, name] : kOriginNames)
        if (name == s) return v;
    return std::nullopt;
}

std::string_view to_string(ClassValue v) {
    switch (v) {
        case ClassValue::ArchivedMemento: return "ArchivedMemento";
        case ClassValue::ArchiveSpecific: return "ArchiveSpecific";
        case ClassValue::LiveWeb: return "LiveWeb";
    }
    return "LiveWeb";
}

std::string_view to_string(Evidence e) {
    switch (e) {
        case Evidence::UriPattern: return "UriPattern";
        case Evidence::DoNotNegotiateHeader: return "DoNotNegotiateHeader";
        case Evidence::ConfigDenyList: return "ConfigDenyList";
        case Evidence::NoArchivePrefix: return "NoArchivePrefix";
    }
    return "NoArchivePrefix";
}

bool is_html_type(std::string_view content_type) {
    auto t = media_type(content_type);
    return t == "text/html" || t == "application/xhtml+xml";
}

bool is_css_type(std::string_view content_type) { return media_type(content_type) == "text/css"; }

Discovery discover_resources(std::string_view body, std::string_view content_type,
                             std::string_view base, int source_depth) {
    Collector c{std::string(base), std::string(base), source_depth + 1};
    if (is_css_type(content_type)) {
        c.add_css(body);
        return c.finish(0);
    }
    if (!is_html_type(content_type)) return c.finish(0);

    auto stream = detail::tokenize_html(body);
    for (const auto& t : stream.tokens) {
        if (t.kind != Token::Kind::StartTag || t.name != "base") continue;
        if (auto href = t.attribute("href")) {
            if (auto resolved = uri::resolve(base, clean_reference(*href))) c.set_base(*resolved);
            break;
        }
    }
    const Token* previous = nullptr;
    for (const auto& t : stream.tokens) {
        if (t.kind == Token::Kind::StartTag) {
            collect_tag(t, c);
        } else if (t.kind == Token::Kind::RawText && previous && previous->name == "style") {
            c.add_css(t.text(body));
        }
        previous = &t;
    }
    return c.finish(stream.skipped);
}

Classification classify_uri(std::string_view uri, const protocol::LinkRelationSet* probe,
                            const ArchiveConfig& config) {
    if (probe && probe->is_do_not_negotiate())
        return {ClassValue::ArchiveSpecific, Evidence::DoNotNegotiateHeader};
    if (config.is_denied(uri)) return {ClassValue::ArchiveSpecific, Evidence::ConfigDenyList};
    if (protocol::parse_memento_uri(uri, config.prefixes))
        return {ClassValue::ArchivedMemento, Evidence::UriPattern};
    return {ClassValue::LiveWeb, Evidence::NoArchivePrefix};
}

StripProfile StripProfile::from_config(const ArchiveConfig& config) {
    return {config.banner_selectors, config.deny};
}

std::string strip_archive_markup(std::string_view body, const StripProfile& profile,
                                 std::string_view base) {
    auto stream = detail::tokenize_html(body);
    const auto& tokens = stream.tokens;
    std::vector<std::pair<std::size_t, std::size_t>> cut;
    for (std::size_t k = 0; k < tokens.size(); ++k) {
        const Token& t = tokens[k];
        if (t.kind == Token::Kind::Comment) {
            if (t.text(body).find(kArchivedOnMarker) != std::string_view::npos)
                cut.emplace_back(t.begin, t.end);
            continue;
        }
        if (t.kind != Token::Kind::StartTag) continue;
        bool banner = std::any_of(profile.banner_selectors.begin(), profile.banner_selectors.end(),
                                  [&](const std::string& s) { return selector_matches(t, s); });
        bool script = t.name == "script" && script_denied(t, profile, base);
        if (!banner && !script) continue;
        if (t.self_closing || detail::is_void_element(t.name)) {
            cut.emplace_back(t.begin, t.end);
            continue;
        }
        auto end = element_end(tokens, k);
        cut.emplace_back(t.begin, end ? *end : t.end);
    }
    if (cut.empty()) return std::string(body);

    std::sort(cut.begin(), cut.end());
    std::string out;
    out.reserve(body.size());
    std::size_t pos = 0;
    for (const auto& [b, e] : cut) {
        if (e <= pos) continue;
        if (b > pos) out.append(body.substr(pos, b - pos));
        pos = std::max(pos, e);
    }
    out.append(body.substr(pos));
    return out;
}

// ---- composite expansion ------------------------------------------------------------------

namespace {

struct Expander {
    const fetch::FetchPolicy& policy;
    ArchiveConfig config;
    StripProfile strip;

    std::optional<protocol::MementoUri> as_memento(std::string_view u) const {
        return protocol::parse_memento_uri(u, config.prefixes);
    }

    std::string dedupe_key(const std::string& u) const {
        if (auto m = as_memento(u)) return serialize(protocol::build_raw_uri(*m));
        return u;
    }

    fetch::FetchResult retrieve(const std::string& target) const {
        if (!policy.stability_probe) return fetch::fetch_resource(target, policy);
        return fetch::probe_stability(target, policy).first;
    }

    void fetch_memento(ExpansionRow& row) const {
        const auto& m = *row.memento;
        try {
            std::string raw = serialize(protocol::build_raw_uri(m));
            fetch::FetchResult r = retrieve(raw);
            if (!is_success(r))
                throw fetch::FetchError(fetch::FetchError::Kind::BadStatus, raw,
                                        "raw retrieval answered " + std::to_string(r.status));
            r.raw_used = true;
            row.result = std::move(r);
        } catch (const fetch::FetchError& e) {
            row.raw_error = e;
            try {
                row.result = retrieve(serialize(m));
            } catch (const fetch::FetchError& replay_error) {
                row.error = replay_error;
                return;
            }
        }
        auto& r = *row.result;
        if (r.signals_do_not_negotiate()) {
            row.classification = {ClassValue::ArchiveSpecific, Evidence::DoNotNegotiateHeader};
            return;
        }
        if (!r.raw_used && r.content_type && is_html_type(*r.content_type)) {
            r.body = strip_archive_markup(r.body, strip, r.final_uri);
            row.stripped = true;
        }
    }

    // Non-memento URIs on an archive host may still be archive furniture; one header
    // probe settles it. Everything else is classified from the URI alone.
    void probe(ExpansionRow& row) const {
        const std::string& u = row.resource.resolved_uri;
        if (!config.is_archive_host(u)) return;
        try {
            auto r = fetch::probe_headers(u, policy);
            auto c = r.signals_do_not_negotiate()
                         ? Classification{ClassValue::ArchiveSpecific, Evidence::DoNotNegotiateHeader}
                         : classify_uri(u, &r.link_relations, config);
            row.classification = c;
            row.result = std::move(r);
        } catch (const fetch::FetchError& e) {
            row.error = e;
        }
    }

    void process(ExpansionRow& row) const {
        if (row.classification.value == ClassValue::ArchivedMemento)
            fetch_memento(row);
        else if (row.classification.value == ClassValue::LiveWeb)
            probe(row);
    }

    std::vector<DiscoveredResource> children(const ExpansionRow& row) const {
        const auto& r = *row.result;
        std::string ct = r.content_type.value_or("");
        if (!r.raw_used)
            return discover_resources(r.body, ct, r.final_uri, row.resource.depth).resources;

        // Raw bytes reference the original web. Map every reference back into the
        // archive at the parent's capture time, the way replay rewriting would.
        const auto& m = *row.memento;
        auto found = discover_resources(r.body, ct, m.target.str(), row.resource.depth).resources;
        std::vector<DiscoveredResource> out;
        for (auto& d : found) {
            d.source_uri = row.resource.resolved_uri;
            if (!as_memento(d.resolved_uri)) {
                auto target = protocol::OriginalUri::try_parse(d.resolved_uri);
                if (!target) continue;
                bool image = d.origin == Origin::ImgSrc || d.origin == Origin::ImgSrcset ||
                             d.origin == Origin::LinkIconHref;
                protocol::MementoUri child{m.archive_prefix, m.timestamp14,
                                           image ? protocol::Modifier::Image : protocol::Modifier::None,
                                           {}, *target};
                d.resolved_uri = serialize(child);
            }
            out.push_back(std::move(d));
        }
        return out;
    }

    bool expandable(const ExpansionRow& row) const {
        if (row.classification.value != ClassValue::ArchivedMemento || !row.result) return false;
        if (row.resource.depth >= policy.max_depth || !is_success(*row.result)) return false;
        const auto& ct = row.result->content_type;
        return ct && (is_html_type(*ct) || is_css_type(*ct));
    }

    void run_level(std::vector<ExpansionRow>& rows, const std::vector<std::size_t>& level) const {
        std::size_t batch = static_cast<std::size_t>(policy.concurrency);
        for (std::size_t i = 0; i < level.size(); i += batch) {
            std::vector<std::future<void>> pending;
            for (std::size_t k = i; k < std::min(level.size(), i + batch); ++k) {
                ExpansionRow* row = &rows[level[k]];
                if (batch == 1)
                    process(*row);
                else
                    pending.push_back(std::async(std::launch::async, [this, row] { process(*row); }));
            }
            for (auto& f : pending) f.get();
        }
    }
};

}  // namespace

std::vector<ExpansionRow> expand_composite(const protocol::MementoUri& root,
                                           const fetch::FetchPolicy& policy,
                                           const ArchiveConfig& config) {
    policy.validate();
    Expander ex{policy, config, StripProfile::from_config(config)};
    if (std::find(ex.config.prefixes.begin(), ex.config.prefixes.end(), root.archive_prefix) ==
        ex.config.prefixes.end())
        ex.config.prefixes.push_back(root.archive_prefix);

    std::vector<ExpansionRow> rows;
    std::string root_uri = serialize(root);
    ExpansionRow first;
    first.resource = {root_uri, root_uri, Origin::Root, "", 0};
    first.classification = {ClassValue::ArchivedMemento, Evidence::UriPattern};
    first.memento = root;
    rows.push_back(std::move(first));

    std::set<std::string> seen{ex.dedupe_key(root_uri)};
    std::vector<std::size_t> level{0};
    while (!level.empty()) {
        ex.run_level(rows, level);
        std::vector<std::size_t> next;
        for (std::size_t idx : level) {
            if (!ex.expandable(rows[idx])) continue;
            for (auto& d : ex.children(rows[idx])) {
                if (!seen.insert(ex.dedupe_key(d.resolved_uri)).second) continue;
                ExpansionRow row;
                row.classification = classify_uri(d.resolved_uri, nullptr, ex.config);
                if (row.classification.value == ClassValue::ArchivedMemento)
                    row.memento = ex.as_memento(d.resolved_uri);
                row.resource = std::move(d);
                next.push_back(rows.size());
                rows.push_back(std::move(row));
            }
        }
        level = std::move(next);
    }
    return rows;
}

}  // namespace memfix::extract
