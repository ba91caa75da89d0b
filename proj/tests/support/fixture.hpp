#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "memfix/fetch.hpp"
#include "memfix/sim.hpp"

namespace memfix::testing {

inline std::filesystem::path fixture_path(const std::string& name) {
    return std::filesystem::path(MEMFIX_FIXTURE_DIR) / name;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// A fixture archive on a free port for the lifetime of the object.
class FixtureServer {
public:
    explicit FixtureServer(const std::string& scenario_file)
        : server_(sim::load_scenario(fixture_path(scenario_file))) {
        server_.start(0);
    }

    sim::Server& operator*() { return server_; }
    sim::Server* operator->() { return &server_; }

    std::string url(const std::string& path) const { return server_.origin() + path; }
    std::string memento(const std::string& id) const { return server_.memento_uri(id); }

private:
    sim::Server server_;
};

// Short probe delay: fixture content does not drift with wall-clock time.
inline fetch::FetchPolicy quick_policy() {
    fetch::FetchPolicy p;
    p.stability_delay_ms = 5;
    p.request_timeout_ms = 5000;
    return p;
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("memfix-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace memfix::testing
