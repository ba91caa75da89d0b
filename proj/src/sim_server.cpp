#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <mutex>
#include <regex>
#include <thread>

#include <json.hpp>

#include "memfix/extract.hpp"
#include "memfix/fetch.hpp"
#include "memfix/protocol.hpp"
#include "memfix/sim.hpp"
#include "memfix/time.hpp"
#include "memfix/uri.hpp"

namespace memfix::sim {

namespace {

struct Runtime {
    std::string state = "base";
    int gets = 0;
    int banner_version = 1;
    std::optional<Representation> last_miss;
};

bool all_digits(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string drop_cache_buster(const std::string& target) {
    auto q = target.find('?');
    if (q == std::string::npos) return target;
    std::string kept;
    std::string query = target.substr(q + 1);
    std::size_t start = 0;
    while (start <= query.size()) {
        auto amp = query.find('&', start);
        std::string item = query.substr(start, amp == std::string::npos ? std::string::npos : amp - start);
        if (item.rfind(std::string(fetch::kCacheBusterParam) + "=", 0) != 0 && !item.empty())
            kept += (kept.empty() ? "" : "&") + item;
        if (amp == std::string::npos) break;
        start = amp + 1;
    }
    return kept.empty() ? target.substr(0, q) : target.substr(0, q + 1) + kept;
}

// Clients and proxies sometimes collapse "http://" to "http:/" inside a path.
std::string repair_scheme(std::string u) {
    for (std::string_view scheme : {"http:/", "https:/"})
        if (u.rfind(scheme, 0) == 0 && u.compare(scheme.size(), 1, "/") != 0) u.insert(scheme.size(), "/");
    return u;
}

std::string modifier_for(const std::string& absolute) {
    std::string path = uri::lowercase(uri::split(absolute).path);
    auto ends = [&](std::string_view ext) {
        return path.size() >= ext.size() && path.compare(path.size() - ext.size(), ext.size(), ext) == 0;
    };
    for (auto ext : {".gif", ".png", ".jpg", ".jpeg", ".svg", ".ico", ".webp"})
        if (ends(ext)) return "im_";
    if (ends(".css")) return "cs_";
    if (ends(".js")) return "js_";
    return "";
}

std::string archived_on(const std::string& ts14) {
    static const char* kMonths[] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                    "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
    int month = std::atoi(ts14.substr(4, 2).c_str());
    return ts14.substr(8, 2) + ":" + ts14.substr(10, 2) + ":" + ts14.substr(12, 2) + " " +
           kMonths[std::clamp(month, 1, 12) - 1] + " " + std::to_string(std::atoi(ts14.substr(6, 2).c_str())) +
           ", " + ts14.substr(0, 4);
}

}  // namespace

struct Server::Impl {
    Scenario scenario;
    httplib::Server http;
    std::thread thread;
    int port = 0;

    mutable std::mutex mu;
    std::vector<Runtime> runtime;
    std::map<std::string, std::size_t> timemap_state;
    std::map<std::string, int> hits;

    explicit Impl(Scenario s) : scenario(std::move(s)) { reset(); }

    std::string origin() const { return "http://127.0.0.1:" + std::to_string(port); }
    std::string live_origin() const { return "http://localhost:" + std::to_string(port); }
    std::string expand(const std::string& text) const { return substitute_origins(text, origin(), live_origin()); }

    void reset() {
        std::lock_guard lock(mu);
        runtime.assign(scenario.resources.size(), Runtime{});
        for (std::size_t i = 0; i < runtime.size(); ++i) {
            runtime[i].banner_version = scenario.resources[i].banner_version;
            runtime[i].state = scenario.resources[i].initial_state;
        }
        timemap_state.clear();
        hits.clear();
    }

    bool trigger(std::string_view name) {
        auto it = scenario.events.find(std::string(name));
        if (it == scenario.events.end()) return false;
        std::lock_guard lock(mu);
        for (const auto& a : it->second) {
            switch (a.kind) {
                case Action::Kind::SetState:
                    for (std::size_t i = 0; i < runtime.size(); ++i)
                        if (scenario.resources[i].id == a.resource) runtime[i].state = a.state;
                    break;
                case Action::Kind::BumpBanner:
                    for (std::size_t i = 0; i < runtime.size(); ++i)
                        if (a.resource.empty() || scenario.resources[i].id == a.resource)
                            runtime[i].banner_version += a.amount;
                    break;
                case Action::Kind::TimeMapAdvance: {
                    auto& idx = timemap_state[a.uri_r];
                    for (const auto& t : scenario.timemaps)
                        if (t.uri_r == a.uri_r && idx + 1 < t.states.size()) ++idx;
                    break;
                }
            }
        }
        return true;
    }

    // Timestamps of the mementos currently listed for uri_r.
    std::vector<std::string> timemap_entries(const std::string& uri_r) const {
        for (const auto& t : scenario.timemaps) {
            if (t.uri_r != uri_r) continue;
            auto it = timemap_state.find(uri_r);
            return t.states[it == timemap_state.end() ? 0 : it->second];
        }
        std::vector<std::string> out;
        for (const auto& r : scenario.resources)
            if (r.uri_r == uri_r) out.push_back(r.timestamp14);
        std::sort(out.begin(), out.end());
        return out;
    }

    std::string timemap_uri(const std::string& uri_r) const { return origin() + "/web/timemap/link/" + uri_r; }

    std::string link_header(const std::string& uri_r, bool donotnegotiate) const {
        if (donotnegotiate) return "<" + std::string(protocol::kDoNotNegotiate) + ">; rel=\"type\"";
        return "<" + uri_r + ">; rel=\"original\", <" + timemap_uri(uri_r) +
               ">; rel=\"timemap\"; type=\"application/link-format\"";
    }

    std::string rewrite_url(const std::string& value, const Resource& page) const {
        std::string v(uri::trim(value));
        if (v.empty() || v.front() == '#') return value;
        auto abs = uri::resolve(page.uri_r, v);
        if (!abs || !uri::is_http_uri(*abs)) return value;
        for (const auto& leak : scenario.live_leaks)
            if (expand(leak) == *abs) return value;
        if (uri::istarts_with(*abs, origin() + "/")) return value;
        return "/web/" + page.timestamp14 + modifier_for(*abs) + "/" + *abs;
    }

    std::string rewrite_links(const std::string& html, const Resource& page) const {
        static const std::regex attr(R"(((?:\bsrc|\bhref|\bdata|\bbackground)\s*=\s*)(["'])([^"']*)\2)",
                                     std::regex::icase);
        static const std::regex css(R"(url\(\s*(["']?)([^"')]*)\1\s*\))", std::regex::icase);
        auto replace_all = [&](const std::string& text, const std::regex& re, auto make) {
            std::string out;
            auto begin = std::sregex_iterator(text.begin(), text.end(), re);
            std::size_t last = 0;
            for (auto it = begin; it != std::sregex_iterator(); ++it) {
                const auto& m = *it;
                out.append(text, last, static_cast<std::size_t>(m.position(0)) - last);
                out += make(m);
                last = static_cast<std::size_t>(m.position(0) + m.length(0));
            }
            out.append(text, last);
            return out;
        };
        std::string step = replace_all(html, attr, [&](const std::smatch& m) {
            return m[1].str() + m[2].str() + rewrite_url(m[3].str(), page) + m[2].str();
        });
        return replace_all(step, css, [&](const std::smatch& m) {
            return "url(" + m[1].str() + rewrite_url(m[2].str(), page) + m[1].str() + ")";
        });
    }

    // Replay view: rewritten links, playback script, banner div and trailing comment.
    std::string replay_html(const std::string& body, const Resource& page, int banner_version) const {
        std::string out = rewrite_links(body, page);
        const std::string script = "<script src=\"" + std::string(kPlaybackScript) + "\"></script>";
        std::size_t captures = timemap_entries(page.uri_r).size() + static_cast<std::size_t>(banner_version);
        const std::string banner = "<div id=\"" + std::string(kBannerId) + "\" class=\"wb-banner\">Fixture archive v" +
                                   std::to_string(banner_version) + " | " + std::to_string(captures) +
                                   " captures | " + archived_on(page.timestamp14) + "</div>";
        static const std::regex head(R"(<head\b[^>]*>)", std::regex::icase);
        static const std::regex body_tag(R"(<body\b[^>]*>)", std::regex::icase);
        std::smatch m;
        std::size_t after_script;
        if (std::regex_search(out, m, head)) {
            after_script = static_cast<std::size_t>(m.position(0) + m.length(0));
            out.insert(after_script, script);
            after_script += script.size();
        } else {
            out.insert(0, script);
            after_script = script.size();
        }
        if (std::regex_search(out, m, body_tag))
            out.insert(static_cast<std::size_t>(m.position(0) + m.length(0)), banner);
        else
            out.insert(after_script, banner);
        out += "\n<!--\n     FILE ARCHIVED ON " + archived_on(page.timestamp14) +
               " AND RETRIEVED FROM THE\n     FIXTURE ARCHIVE (banner v" + std::to_string(banner_version) + ").\n-->";
        return out;
    }

    void serve_memento(const httplib::Request& req, httplib::Response& res, std::size_t index,
                       const std::string& modifier) {
        const Resource& r = scenario.resources[index];
        bool get = req.method == "GET";
        Representation rep;
        int banner_version;
        std::optional<std::string> cache_header;
        {
            std::lock_guard lock(mu);
            Runtime& rt = runtime[index];
            int n = rt.gets + 1;
            if (get) {
                rt.gets = n;
                if (r.tamper_at && n == r.tamper_at->request) rt.state = r.tamper_at->state;
            }
            rep = rt.state == "base" ? r.base : r.states.at(rt.state);
            if (rt.state == "base" && !r.dynamic_cycle.empty())
                rep.body = r.dynamic_cycle[static_cast<std::size_t>(n - 1) % r.dynamic_cycle.size()];
            if (get && !r.cache_script.empty()) {
                bool hit = r.cache_script[static_cast<std::size_t>(n - 1) % r.cache_script.size()];
                if (hit && rt.last_miss) rep = *rt.last_miss;
                else rt.last_miss = rep;
                cache_header = hit ? "HIT" : "MISS";
            }
            banner_version = rt.banner_version;
        }
        if (!rep.available) {
            res.status = 404;
            res.set_content("not archived\n", "text/plain");
            return;
        }
        std::string body;
        bool raw = modifier == "id_";
        bool pristine = rep.body == r.base.body;
        if (raw) {
            if (!r.raw_available) {
                res.status = 404;
                res.set_content("raw content unavailable\n", "text/plain");
                return;
            }
            body = expand(pristine && r.raw_body ? *r.raw_body : rep.body);
        } else if (extract::is_html_type(rep.content_type)) {
            body = replay_html(expand(rep.body), r, banner_version);
        } else {
            body = expand(rep.body);
        }
        res.status = 200;
        res.set_header("Memento-Datetime", protocol::format_http_datetime(*parse_timestamp14(r.timestamp14)));
        res.set_header("Link", link_header(r.uri_r, r.donotnegotiate));
        if (cache_header) res.set_header("X-Page-Cache", *cache_header);
        res.set_content(body, rep.content_type);
    }

    void serve_web(const httplib::Request& req, httplib::Response& res, const std::string& rest) {
        // rest = <ts14><modifier>/<uri-r>
        auto slash = rest.find('/');
        if (slash == std::string::npos || slash < 14 || !all_digits(rest.substr(0, 14))) {
            res.status = 404;
            return;
        }
        std::string ts = rest.substr(0, 14);
        std::string modifier = rest.substr(14, slash - 14);
        std::string uri_r = repair_scheme(rest.substr(slash + 1));
        std::optional<std::size_t> best;
        long long best_gap = 0;
        auto wanted = parse_timestamp14(ts);
        if (!wanted) {
            res.status = 404;
            return;
        }
        for (std::size_t i = 0; i < scenario.resources.size(); ++i) {
            const auto& r = scenario.resources[i];
            if (r.uri_r != uri_r) continue;
            long long gap = std::llabs((*parse_timestamp14(r.timestamp14) - *wanted).count());
            if (!best || gap < best_gap) {
                best = i;
                best_gap = gap;
            }
        }
        if (!best) {
            res.status = 404;
            res.set_content("not in archive\n", "text/plain");
            return;
        }
        const Resource& r = scenario.resources[*best];
        if (r.timestamp14 != ts) {
            res.status = 302;
            res.set_header("Location", "/web/" + r.timestamp14 + modifier + "/" + r.uri_r);
            return;
        }
        serve_memento(req, res, *best, modifier);
    }

    void serve_timemap(httplib::Response& res, const std::string& uri_r) {
        std::vector<std::string> stamps;
        {
            std::lock_guard lock(mu);
            stamps = timemap_entries(uri_r);
        }
        bool known = std::any_of(scenario.resources.begin(), scenario.resources.end(),
                                 [&](const Resource& r) { return r.uri_r == uri_r; }) ||
                     std::any_of(scenario.timemaps.begin(), scenario.timemaps.end(),
                                 [&](const TimeMapScript& t) { return t.uri_r == uri_r; });
        if (!known) {
            res.status = 404;
            return;
        }
        std::string body;
        if (!stamps.empty()) {
            body = "<" + uri_r + ">; rel=\"original\",\n<" + timemap_uri(uri_r) +
                   ">; rel=\"self\"; type=\"application/link-format\"";
            for (std::size_t i = 0; i < stamps.size(); ++i) {
                std::string rel = "memento";
                if (i == 0 && stamps.size() == 1) rel = "first last memento";
                else if (i == 0) rel = "first memento";
                else if (i + 1 == stamps.size()) rel = "last memento";
                body += ",\n<" + origin() + "/web/" + stamps[i] + "/" + uri_r + ">; rel=\"" + rel +
                        "\"; datetime=\"" + protocol::format_http_datetime(*parse_timestamp14(stamps[i])) + "\"";
            }
            body += "\n";
        }
        res.status = 200;
        res.set_content(body, "application/link-format");
    }

    void handle(const httplib::Request& req, httplib::Response& res) {
        std::string target = drop_cache_buster(req.target);
        std::string path = target.substr(0, target.find('?'));
        if (path == "/_sim/stats") {
            nlohmann::ordered_json j = nlohmann::ordered_json::object();
            {
                std::lock_guard lock(mu);
                for (const auto& [p, n] : hits) j[p] = n;
            }
            res.set_content(j.dump(), "application/json");
            return;
        }
        {
            std::lock_guard lock(mu);
            ++hits[path];
        }
        static const std::string kTimeMap = "/web/timemap/link/";
        if (target.rfind(kTimeMap, 0) == 0) return serve_timemap(res, repair_scheme(target.substr(kTimeMap.size())));
        if (target.rfind("/web/", 0) == 0) return serve_web(req, res, target.substr(5));
        for (const auto& s : scenario.statics) {
            if (s.path != path) continue;
            if (!s.content.available) break;
            if (s.donotnegotiate) res.set_header("Link", link_header("", true));
            res.set_content(expand(s.content.body), s.content.content_type);
            return;
        }
        res.status = 404;
        res.set_content("not found\n", "text/plain");
    }
};

Server::Server(Scenario scenario) : impl_(std::make_unique<Impl>(std::move(scenario))) {
    auto& http = impl_->http;
    Impl* impl = impl_.get();
    http.Get(R"(/.*)", [impl](const httplib::Request& req, httplib::Response& res) { impl->handle(req, res); });
    http.Post(R"(/_control/(.+))", [impl](const httplib::Request& req, httplib::Response& res) {
        std::string event = req.matches[1];
        if (event == "reset") {
            impl->reset();
        } else if (!impl->trigger(event)) {
            res.status = 404;
            res.set_content("unknown event " + event + "\n", "text/plain");
            return;
        }
        res.set_content(nlohmann::json{{"event", event}}.dump(), "application/json");
    });
}

Server::~Server() { stop(); }

int Server::start(int port) {
    auto& http = impl_->http;
    int bound = port == 0 ? http.bind_to_any_port("127.0.0.1") : (http.bind_to_port("127.0.0.1", port) ? port : -1);
    if (bound <= 0) throw Error("cannot bind 127.0.0.1:" + std::to_string(port));
    impl_->port = bound;
    impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
    http.wait_until_ready();
    return bound;
}

void Server::stop() {
    if (!impl_) return;
    impl_->http.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

void Server::wait() {
    if (impl_->thread.joinable()) impl_->thread.join();
}

int Server::port() const { return impl_->port; }
std::string Server::origin() const { return impl_->origin(); }
std::string Server::live_origin() const { return impl_->live_origin(); }

std::string Server::memento_uri(std::string_view resource_id) const {
    const Resource* r = impl_->scenario.find(resource_id);
    if (!r) throw Error("unknown resource " + std::string(resource_id));
    return origin() + "/web/" + r->timestamp14 + "/" + r->uri_r;
}

std::string Server::timemap_uri(std::string_view uri_r) const { return impl_->timemap_uri(std::string(uri_r)); }

bool Server::trigger(std::string_view event) { return impl_->trigger(event); }
void Server::reset() { impl_->reset(); }

std::map<std::string, int> Server::stats() const {
    std::lock_guard lock(impl_->mu);
    return impl_->hits;
}

}  // namespace memfix::sim
