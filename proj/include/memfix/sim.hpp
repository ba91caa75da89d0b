#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "memfix/error.hpp"

namespace memfix::sim {

/// Substituted in bodies and leak lists when the server starts.
inline constexpr std::string_view kOriginToken = "{{origin}}";            // http://127.0.0.1:<port>
inline constexpr std::string_view kLiveOriginToken = "{{live_origin}}";  // http://localhost:<port>

/// Markers the replay transform injects; raw (id_) responses never contain them.
inline constexpr std::string_view kBannerId = "wm-ipp";
inline constexpr std::string_view kPlaybackScript = "/_sim/playback.js";

struct Representation {
    std::string body;
    std::string content_type;
    bool available = true;
};

struct TamperAt {
    int request = 0;  // the state applies from this GET of the resource onwards
    std::string state;
};

struct Resource {
    std::string id;
    std::string uri_r;
    std::string timestamp14;
    Representation base;
    std::optional<std::string> raw_body;  // id_ body when it differs from the replay source
    bool raw_available = true;
    int banner_version = 1;
    bool donotnegotiate = false;
    std::vector<bool> cache_script;          // true = HIT, cycled per GET
    std::vector<std::string> dynamic_cycle;  // bodies served round-robin per GET
    std::map<std::string, Representation> states;
    std::string initial_state = "base";  // state after load and after reset
    std::optional<TamperAt> tamper_at;
    std::vector<std::string> dangling_ok;  // references allowed to point nowhere
};

/// Served verbatim at a fixed path: archive furniture or a live-web stand-in.
struct StaticResource {
    std::string path;
    Representation content;
    bool donotnegotiate = false;
};

struct TimeMapScript {
    std::string uri_r;
    std::vector<std::vector<std::string>> states;  // timestamp14 lists
};

struct Action {
    enum class Kind { SetState, BumpBanner, TimeMapAdvance };
    Kind kind = Kind::SetState;
    std::string resource;  // SetState, and BumpBanner when limited to one resource
    std::string state;
    std::string uri_r;  // TimeMapAdvance
    int amount = 1;     // BumpBanner
};

struct Scenario {
    std::string name;
    std::string description;
    std::vector<Resource> resources;
    std::vector<StaticResource> statics;
    std::vector<std::string> live_leaks;  // absolute URLs left unrewritten in replay
    std::vector<TimeMapScript> timemaps;
    std::map<std::string, std::vector<Action>> events;
    std::filesystem::path base_dir;

    const Resource* find(std::string_view id) const;
};

/// Replaces the origin placeholders.
std::string substitute_origins(std::string text, std::string_view origin, std::string_view live_origin);

struct Diagnostic {
    std::size_t line = 0;  // 1-based; 0 when no position is known
    std::string message;
};

std::string to_string(const Diagnostic& d);

class ScenarioError : public Error {
public:
    explicit ScenarioError(std::vector<Diagnostic> diagnostics);
    const std::vector<Diagnostic>& diagnostics() const noexcept { return diagnostics_; }

private:
    std::vector<Diagnostic> diagnostics_;
};

/// Parses and cross-checks a scenario. Body files resolve against the scenario's
/// directory. Throws ScenarioError listing every problem found.
Scenario load_scenario(const std::filesystem::path& path);
Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir);
/// load_scenario without the exception: an empty list means the scenario is valid.
std::vector<Diagnostic> validate_scenario(const std::filesystem::path& path);

/// The fixture archive. Routes:
///   /web/<ts14>[mod]/<uri-r>       replay (rewritten, banner) or id_ raw content
///   /web/timemap/link/<uri-r>      current TimeMap in link-format
///   <static path>                  static resources
///   POST /_control/<event>         runs a scenario event; /_control/reset restores the start
///   GET /_sim/stats                JSON hit counts per request path
class Server {
public:
    explicit Server(Scenario scenario);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds 127.0.0.1:port (0 picks a free port), serves on a background thread and
    /// returns the bound port. Throws Error when binding fails.
    int start(int port = 0);
    void stop();
    /// Blocks until stop() is called from another thread.
    void wait();

    int port() const;
    std::string origin() const;
    std::string live_origin() const;
    /// Replay URI-M of a declared resource.
    std::string memento_uri(std::string_view resource_id) const;
    std::string timemap_uri(std::string_view uri_r) const;

    /// Same effect as POST /_control/<event>; false for an unknown event.
    bool trigger(std::string_view event);
    void reset();
    std::map<std::string, int> stats() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace memfix::sim
