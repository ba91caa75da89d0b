#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "memfix/extract.hpp"
#include "memfix/protocol.hpp"
#include "memfix/sim.hpp"
#include "memfix/time.hpp"
#include "memfix/uri.hpp"

namespace memfix::sim {

namespace {

using json = nlohmann::json;

// Stand-ins for the placeholders while checking references offline.
constexpr std::string_view kCheckOrigin = "http://127.0.0.1:1";
constexpr std::string_view kCheckLiveOrigin = "http://localhost:1";

std::optional<std::string> base64_decode(std::string_view text) {
    std::string clean;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
    if (clean.size() % 4 != 0) return std::nullopt;
    std::string out(clean.size() / 4 * 3, '\0');
    int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                            reinterpret_cast<const unsigned char*>(clean.data()), static_cast<int>(clean.size()));
    if (n < 0) return std::nullopt;
    std::size_t pad = 0;
    while (pad < 2 && pad < clean.size() && clean[clean.size() - 1 - pad] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

class Parser {
public:
    Parser(std::string_view text, std::filesystem::path base_dir) : text_(text), base_dir_(std::move(base_dir)) {}

    Scenario run() {
        json doc;
        try {
            doc = json::parse(text_, nullptr, true, /*ignore_comments=*/true);
        } catch (const json::parse_error& e) {
            error(line_at(e.byte == 0 ? 0 : e.byte - 1), std::string("not valid JSON: ") + e.what());
            throw ScenarioError(std::move(diags_));
        }
        if (!doc.is_object()) {
            error(1, "a scenario is a JSON object");
            throw ScenarioError(std::move(diags_));
        }
        Scenario s;
        s.base_dir = base_dir_;
        s.name = str(doc, "name", 0).value_or("");
        if (s.name.empty()) error(locate("\"name\""), "scenario needs a non-empty \"name\"");
        s.description = doc.value("description", std::string());
        for (const auto& r : array(doc, "resources")) s.resources.push_back(resource(r));
        for (const auto& r : array(doc, "static")) s.statics.push_back(static_resource(r));
        for (const auto& leak : array(doc, "live_leaks")) {
            if (leak.is_string()) s.live_leaks.push_back(leak.get<std::string>());
            else error(locate("\"live_leaks\""), "live_leaks entries must be strings");
        }
        for (const auto& t : array(doc, "timemaps")) s.timemaps.push_back(timemap(t));
        if (doc.contains("events")) {
            if (!doc["events"].is_object()) error(locate("\"events\""), "\"events\" must be an object");
            else
                for (const auto& [name, actions] : doc["events"].items()) s.events[name] = event(name, actions);
        }
        check(s);
        if (!diags_.empty()) throw ScenarioError(std::move(diags_));
        return s;
    }

private:
    std::size_t line_at(std::size_t offset) const {
        offset = std::min(offset, text_.size());
        return static_cast<std::size_t>(std::count(text_.begin(), text_.begin() + static_cast<long>(offset), '\n')) + 1;
    }

    std::size_t locate(std::string_view needle) const {
        auto pos = text_.find(needle);
        return pos == std::string_view::npos ? 0 : line_at(pos);
    }

    std::size_t locate_value(std::string_view value) const { return locate(json(std::string(value)).dump()); }

    void error(std::size_t line, std::string message) { diags_.push_back({line, std::move(message)}); }

    json array(const json& obj, const char* key) {
        if (!obj.contains(key)) return json::array();
        if (!obj[key].is_array()) {
            error(locate(std::string("\"") + key + "\""), std::string("\"") + key + "\" must be an array");
            return json::array();
        }
        return obj[key];
    }

    std::optional<std::string> str(const json& obj, const char* key, std::size_t line) {
        if (!obj.contains(key)) return std::nullopt;
        if (!obj[key].is_string()) {
            error(line, std::string("\"") + key + "\" must be a string");
            return std::nullopt;
        }
        return obj[key].get<std::string>();
    }

    // Exactly one of body / body_file / body_base64.
    std::optional<std::string> body(const json& obj, std::size_t line, const std::string& where) {
        int given = obj.contains("body") + obj.contains("body_file") + obj.contains("body_base64");
        if (given != 1) {
            error(line, where + " needs exactly one of \"body\", \"body_file\", \"body_base64\"");
            return std::nullopt;
        }
        if (auto b = str(obj, "body", line)) return b;
        if (auto b64 = str(obj, "body_base64", line)) {
            auto decoded = base64_decode(*b64);
            if (!decoded) error(line, where + ": body_base64 is not valid base64");
            return decoded;
        }
        if (auto file = str(obj, "body_file", line)) {
            auto path = base_dir_ / *file;
            std::ifstream in(path, std::ios::binary);
            if (!in) {
                error(locate_value(*file), where + ": body file '" + *file + "' not found (looked in " +
                                                path.string() + ")");
                return std::nullopt;
            }
            std::ostringstream buf;
            buf << in.rdbuf();
            return buf.str();
        }
        return std::nullopt;
    }

    Representation representation(const json& obj, std::size_t line, const std::string& where,
                                  const std::string& default_type) {
        Representation r;
        r.body = body(obj, line, where).value_or("");
        r.content_type = str(obj, "content_type", line).value_or(default_type);
        if (obj.contains("available")) {
            if (obj["available"].is_boolean()) r.available = obj["available"].get<bool>();
            else error(line, where + ": \"available\" must be a boolean");
        }
        return r;
    }

    Resource resource(const json& j) {
        Resource r;
        if (!j.is_object()) {
            error(locate("\"resources\""), "resources entries must be objects");
            return r;
        }
        r.id = j.value("id", std::string());
        std::size_t line = !r.id.empty() ? locate_value(r.id) : locate("\"uri_r\"");
        std::string where = "resource '" + (r.id.empty() ? std::string("?") : r.id) + "'";
        if (r.id.empty()) error(line, "resource needs an \"id\"");
        r.uri_r = str(j, "uri_r", line).value_or("");
        if (!protocol::OriginalUri::try_parse(r.uri_r)) error(line, where + ": uri_r '" + r.uri_r + "' is not an http(s) URI");
        r.timestamp14 = str(j, "timestamp14", line).value_or("");
        if (!parse_timestamp14(r.timestamp14)) error(line, where + ": timestamp14 '" + r.timestamp14 + "' is not YYYYMMDDhhmmss");
        auto type = str(j, "content_type", line);
        if (!type) error(line, where + " needs a \"content_type\"");
        r.base = representation(j, line, where, type.value_or(""));
        if (j.contains("raw_body") || j.contains("raw_body_file")) {
            json raw = json::object();
            if (j.contains("raw_body")) raw["body"] = j["raw_body"];
            if (j.contains("raw_body_file")) raw["body_file"] = j["raw_body_file"];
            r.raw_body = body(raw, line, where + " raw body");
        }
        r.raw_available = j.value("raw_available", true);
        r.banner_version = j.value("banner_version", 1);
        r.donotnegotiate = j.value("donotnegotiate", false);
        for (const auto& entry : array(j, "cache_script")) {
            std::string v = entry.is_string() ? entry.get<std::string>() : "";
            if (v != "HIT" && v != "MISS") error(line, where + ": cache_script entries must be \"HIT\" or \"MISS\"");
            r.cache_script.push_back(v == "HIT");
        }
        for (const auto& entry : array(j, "dynamic_cycle")) {
            if (entry.is_string()) r.dynamic_cycle.push_back(entry.get<std::string>());
            else if (entry.is_object()) r.dynamic_cycle.push_back(body(entry, line, where + " dynamic_cycle").value_or(""));
            else error(line, where + ": dynamic_cycle entries must be strings or body objects");
        }
        if (j.contains("states")) {
            if (!j["states"].is_object()) error(line, where + ": \"states\" must be an object");
            else
                for (const auto& [name, st] : j["states"].items())
                    r.states[name] = representation(st, locate("\"" + name + "\""), where + " state '" + name + "'",
                                                    r.base.content_type);
        }
        r.initial_state = j.value("initial_state", std::string("base"));
        if (r.initial_state != "base" && !r.states.count(r.initial_state))
            error(line, where + ": initial_state names unknown state '" + r.initial_state + "'");
        if (j.contains("tamper_at")) {
            const auto& t = j["tamper_at"];
            if (!t.is_object() || !t.contains("request") || !t["request"].is_number_integer() || !t.contains("state")) {
                error(line, where + ": tamper_at needs integer \"request\" and \"state\"");
            } else {
                r.tamper_at = TamperAt{t["request"].get<int>(), t["state"].get<std::string>()};
                if (r.tamper_at->request < 1) error(line, where + ": tamper_at.request counts from 1");
                if (!r.states.count(r.tamper_at->state))
                    error(line, where + ": tamper_at names unknown state '" + r.tamper_at->state + "'");
            }
        }
        for (const auto& d : array(j, "dangling_ok"))
            if (d.is_string()) r.dangling_ok.push_back(d.get<std::string>());
        return r;
    }

    StaticResource static_resource(const json& j) {
        StaticResource s;
        s.path = j.value("path", std::string());
        std::size_t line = s.path.empty() ? locate("\"static\"") : locate_value(s.path);
        if (s.path.empty() || s.path.front() != '/') error(line, "static resources need an absolute \"path\"");
        if (uri::istarts_with(s.path, "/web/") || uri::istarts_with(s.path, "/_control"))
            error(line, "static path '" + s.path + "' overlaps a reserved route");
        s.content = representation(j, line, "static '" + s.path + "'", j.value("content_type", std::string("text/plain")));
        s.donotnegotiate = j.value("donotnegotiate", false);
        return s;
    }

    TimeMapScript timemap(const json& j) {
        TimeMapScript t;
        t.uri_r = j.value("uri_r", std::string());
        std::size_t line = locate_value(t.uri_r);
        for (const auto& state : array(j, "states")) {
            std::vector<std::string> stamps;
            if (!state.is_array()) error(line, "timemap states are arrays of timestamp14 strings");
            else
                for (const auto& ts : state) {
                    auto v = ts.is_string() ? ts.get<std::string>() : "";
                    if (!parse_timestamp14(v)) error(line, "timemap for '" + t.uri_r + "': bad timestamp14 '" + v + "'");
                    stamps.push_back(v);
                }
            t.states.push_back(std::move(stamps));
        }
        if (t.states.empty()) error(line, "timemap for '" + t.uri_r + "' has no states");
        return t;
    }

    std::vector<Action> event(const std::string& name, const json& actions) {
        std::vector<Action> out;
        std::size_t line = locate("\"" + name + "\"");
        if (!actions.is_array()) {
            error(line, "event '" + name + "' must be an array of actions");
            return out;
        }
        for (const auto& a : actions) {
            Action act;
            std::string kind = a.value("action", std::string());
            if (kind == "set_state") act.kind = Action::Kind::SetState;
            else if (kind == "bump_banner") act.kind = Action::Kind::BumpBanner;
            else if (kind == "timemap_advance") act.kind = Action::Kind::TimeMapAdvance;
            else error(line, "event '" + name + "': unknown action '" + kind + "'");
            act.resource = a.value("resource", std::string());
            act.state = a.value("state", std::string());
            act.uri_r = a.value("uri_r", std::string());
            act.amount = a.value("amount", 1);
            out.push_back(act);
        }
        return out;
    }

    void check(const Scenario& s) {
        std::set<std::string> ids, routes, paths, uris;
        for (const auto& r : s.resources) {
            std::size_t line = locate_value(r.id);
            if (!r.id.empty() && !ids.insert(r.id).second) error(line, "duplicate resource id '" + r.id + "'");
            if (!routes.insert(r.uri_r + " @" + r.timestamp14).second)
                error(line, "resource '" + r.id + "' overlaps another route for " + r.uri_r + " at " + r.timestamp14);
            uris.insert(r.uri_r);
        }
        for (const auto& st : s.statics)
            if (!paths.insert(st.path).second) error(locate_value(st.path), "duplicate static path '" + st.path + "'");
        std::set<std::string> tm;
        for (const auto& t : s.timemaps)
            if (!tm.insert(t.uri_r).second) error(locate_value(t.uri_r), "two timemap scripts for '" + t.uri_r + "'");
        for (const auto& [name, actions] : s.events) {
            if (name == "reset") error(locate("\"reset\""), "event name 'reset' is reserved");
            for (const auto& a : actions) {
                std::size_t line = locate("\"" + name + "\"");
                const Resource* target = s.find(a.resource);
                if (a.kind == Action::Kind::SetState) {
                    if (!target) error(line, "event '" + name + "' names unknown resource '" + a.resource + "'");
                    else if (!target->states.count(a.state) && a.state != "base")
                        error(line, "event '" + name + "' names unknown state '" + a.state + "'");
                }
                if (a.kind == Action::Kind::BumpBanner && !a.resource.empty() && !target)
                    error(line, "event '" + name + "' names unknown resource '" + a.resource + "'");
                if (a.kind == Action::Kind::TimeMapAdvance && !tm.count(a.uri_r))
                    error(line, "event '" + name + "' advances unknown timemap '" + a.uri_r + "'");
            }
        }
        check_references(s, uris, paths);
    }

    // Every reference in replayable HTML/CSS must land on something the archive serves,
    // a declared live leak, or be explicitly flagged as dangling.
    void check_references(const Scenario& s, const std::set<std::string>& uris, const std::set<std::string>& paths) {
        std::set<std::string> leaks;
        for (const auto& l : s.live_leaks) leaks.insert(substitute_origins(l, kCheckOrigin, kCheckLiveOrigin));
        for (const auto& r : s.resources) {
            std::vector<std::pair<std::string, std::string>> bodies{{r.base.body, r.base.content_type}};
            if (r.raw_body) bodies.emplace_back(*r.raw_body, r.base.content_type);
            for (const auto& [name, st] : r.states) bodies.emplace_back(st.body, st.content_type);
            for (const auto& [body, type] : bodies) {
                std::string text = substitute_origins(body, kCheckOrigin, kCheckLiveOrigin);
                for (const auto& d : extract::discover_resources(text, type, r.uri_r).resources) {
                    const std::string& u = d.resolved_uri;
                    if (uris.count(u) || leaks.count(u)) continue;
                    if (uri::istarts_with(u, std::string(kCheckOrigin) + "/") &&
                        paths.count(uri::request_target(u)))
                        continue;
                    if (std::find(r.dangling_ok.begin(), r.dangling_ok.end(), d.raw_reference) != r.dangling_ok.end() ||
                        std::find(r.dangling_ok.begin(), r.dangling_ok.end(), u) != r.dangling_ok.end())
                        continue;
                    error(locate_value(r.id), "resource '" + r.id + "' references " + u +
                                                  ", which the scenario does not serve (flag it in dangling_ok)");
                }
            }
        }
    }

    std::string_view text_;
    std::filesystem::path base_dir_;
    std::vector<Diagnostic> diags_;
};

}  // namespace

std::string substitute_origins(std::string text, std::string_view origin, std::string_view live) {
    for (auto [token, value] : {std::pair{kOriginToken, origin}, std::pair{kLiveOriginToken, live}}) {
        for (auto pos = text.find(token); pos != std::string::npos; pos = text.find(token, pos + value.size()))
            text.replace(pos, token.size(), value);
    }
    return text;
}

const Resource* Scenario::find(std::string_view id) const {
    for (const auto& r : resources)
        if (r.id == id) return &r;
    return nullptr;
}

std::string to_string(const Diagnostic& d) {
    return d.line ? "line " + std::to_string(d.line) + ": " + d.message : d.message;
}

ScenarioError::ScenarioError(std::vector<Diagnostic> diagnostics)
    : Error([&] {
          std::string what = "invalid scenario";
          for (const auto& d : diagnostics) what += "\n  " + to_string(d);
          return what;
      }()),
      diagnostics_(std::move(diagnostics)) {}

Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir) {
    return Parser(text, base_dir).run();
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError({{0, "cannot read scenario file " + path.string()}});
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), path.parent_path());
}

std::vector<Diagnostic> validate_scenario(const std::filesystem::path& path) {
    try {
        load_scenario(path);
        return {};
    } catch (const ScenarioError& e) {
        return e.diagnostics();
    }
}

}  // namespace memfix::sim
