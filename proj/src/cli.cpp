#include "memfix/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "memfix/anchor.hpp"
#include "memfix/config.hpp"
#include "memfix/fetch.hpp"
#include "memfix/fixity.hpp"
#include "memfix/protocol.hpp"
#include "memfix/sim.hpp"

namespace memfix::cli {

namespace {

using json = nlohmann::ordered_json;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

// Raised inside command bodies to leave with a specific exit code.
struct Exit {
    int code;
    std::string message;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Exit{kUsage, "cannot read " + path};
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << text)) throw Exit{kFailure, "cannot write " + path};
}

json read_json(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw Exit{kUsage, path + " is not valid JSON: " + e.what()};
    }
}

struct HashOptions {
    std::string uri_m;
    std::string config_path, profile_path, policy_path, out_path, algorithm;
    std::vector<std::string> prefixes;
    bool html_only = false, json_out = false;
    bool no_cache_bypass = false, no_stability_probe = false;
    std::optional<int> cache_retry_limit, stability_delay_ms, max_depth, concurrency, timeout_ms;
};

ArchiveConfig load_config(const std::string& path, const std::vector<std::string>& extra_prefixes) {
    ArchiveConfig c = path.empty() ? ArchiveConfig::defaults() : ArchiveConfig::load(path);
    for (const auto& p : extra_prefixes) c.prefixes.push_back(p);
    return c;
}

protocol::MementoUri parse_root(const std::string& text, const ArchiveConfig& config) {
    if (auto m = protocol::parse_memento_uri(text, config.prefixes)) return *m;
    if (auto m = protocol::parse_memento_uri(text)) return *m;
    throw Exit{kUsage, "'" + text + "' is not a URI-M"};
}

constexpr const char* kHtmlOnlyWarning =
    "WARNING: --html-only digests the replayed HTML bytes and nothing else.\n"
    "         Embedded images, stylesheets and scripts are ignored, and archive banners\n"
    "         are hashed. Use it to demonstrate the pitfall, not as fixity evidence.\n";

int cmd_hash(const HashOptions& o, std::ostream& out, std::ostream& err) {
    ArchiveConfig config = load_config(o.config_path, o.prefixes);
    fixity::HashProfile profile =
        o.profile_path.empty() ? fixity::HashProfile{} : fixity::profile_from_json(read_json(o.profile_path));
    if (!o.algorithm.empty()) {
        auto a = parse_algorithm(o.algorithm);
        if (!a) throw Exit{kUsage, "unknown algorithm " + o.algorithm};
        profile.algorithm = *a;
    }
    fetch::FetchPolicy policy =
        o.policy_path.empty() ? fetch::FetchPolicy{} : fetch::policy_from_json(read_json(o.policy_path));
    if (o.no_cache_bypass) policy.cache_bypass = false;
    if (o.no_stability_probe) policy.stability_probe = false;
    if (o.cache_retry_limit) policy.cache_retry_limit = *o.cache_retry_limit;
    if (o.stability_delay_ms) policy.stability_delay_ms = *o.stability_delay_ms;
    if (o.max_depth) policy.max_depth = *o.max_depth;
    if (o.concurrency) policy.concurrency = *o.concurrency;
    if (o.timeout_ms) policy.request_timeout_ms = *o.timeout_ms;
    policy.validate();
    auto root = parse_root(o.uri_m, config);

    fixity::FixityManifest manifest = [&] {
        if (o.html_only || profile.html_only) {
            err << kHtmlOnlyWarning;
            return fixity::html_only_manifest(root, policy, profile);
        }
        return fixity::hash_composite_memento(root, policy, profile, config);
    }();
    json doc = fixity::manifest_to_json(manifest);
    if (!o.out_path.empty()) write_file(o.out_path, doc.dump(2) + "\n");
    if (o.json_out) {
        out << doc.dump(2) << "\n";
    } else {
        out << "records: " << manifest.records.size() << ", excluded: " << manifest.excluded.size() << "\n";
        for (const auto& e : manifest.excluded)
            out << "  excluded " << fixity::to_string(e.reason) << " " << e.uri << "\n";
        out << "aggregate: " << manifest.aggregate_hash << "\n";
    }
    return kOk;
}

int cmd_compare(const std::string& a_path, const std::string& b_path, bool json_out, std::ostream& out) {
    auto a = fixity::manifest_from_json(read_json(a_path));
    auto b = fixity::manifest_from_json(read_json(b_path));
    auto report = fixity::compare_manifests(a, b);
    if (json_out) {
        out << fixity::report_to_json(report).dump(2) << "\n";
    } else {
        out << "verdict: " << fixity::to_string(report.verdict) << "\n";
        for (const auto& c : report.changed)
            out << "  changed " << c.target << " (" << c.memento_uri << ") " << *c.before << " -> " << *c.after << "\n";
        for (const auto& c : report.added) out << "  added   " << c.target << " (" << c.memento_uri << ")\n";
        for (const auto& c : report.removed) out << "  removed " << c.target << " (" << c.memento_uri << ")\n";
        for (const auto& n : report.notes) out << "  note: " << n << "\n";
    }
    switch (report.verdict) {
        case fixity::Verdict::Match: return kOk;
        case fixity::Verdict::Tampered: return kNegative;
        case fixity::Verdict::Inconclusive: return kInconclusive;
    }
    return kInconclusive;
}

// A hex digest as given, or the aggregate of a manifest file.
std::string hash_argument(const std::string& arg) {
    if ((arg.size() == 64 || arg.size() == 32) && is_lower_hex(arg)) return arg;
    std::ifstream probe(arg);
    if (!probe) throw Exit{kUsage, "'" + arg + "' is neither a lowercase hex digest nor a readable manifest"};
    return fixity::manifest_from_json(read_json(arg)).aggregate_hash;
}

void print_receipt(const anchor::AnchorReceipt& r, std::ostream& out) {
    out << "hash: " << r.hash << "\naddress: " << r.address << "\nsequence: " << r.sequence
        << "\nrecorded_at: " << format_rfc3339(r.recorded_at) << "\n";
    if (r.batch_root) out << "batch_root: " << *r.batch_root << "\n";
}

int cmd_stamp(const std::vector<std::string>& args, const std::optional<std::string>& ledger_flag,
              const std::string& receipts_path, bool json_out, std::ostream& out) {
    std::vector<std::string> hashes;
    for (const auto& a : args) hashes.push_back(hash_argument(a));
    anchor::Ledger ledger(anchor::Ledger::resolve_path(ledger_flag));
    std::vector<anchor::AnchorReceipt> receipts;
    if (hashes.size() == 1) {
        receipts.push_back(anchor::stamp(hashes.front(), ledger));
    } else {
        auto [batch, batch_receipts] = anchor::merkle_batch(hashes, ledger);
        receipts = std::move(batch_receipts);
    }
    json doc = json::array();
    for (const auto& r : receipts) doc.push_back(anchor::receipt_to_json(r));
    if (!receipts_path.empty()) write_file(receipts_path, doc.dump(2) + "\n");
    if (json_out) {
        out << doc.dump(2) << "\n";
    } else {
        for (std::size_t i = 0; i < receipts.size(); ++i) {
            if (i) out << "\n";
            print_receipt(receipts[i], out);
        }
    }
    return kOk;
}

int cmd_verify(const std::string& arg, const std::optional<std::string>& ledger_flag,
               const std::string& receipt_path, bool json_out, std::ostream& out) {
    std::string hash = hash_argument(arg);
    anchor::Ledger ledger(anchor::Ledger::resolve_path(ledger_flag));
    if (!std::filesystem::exists(ledger.path()))
        throw anchor::AnchorError(anchor::AnchorError::Kind::LedgerUnavailable,
                                  "ledger " + ledger.path().string() + " does not exist");
    std::vector<anchor::AnchorReceipt> found;
    try {
        found = anchor::verify_timestamp(hash, ledger);
    } catch (const anchor::AnchorError& e) {
        if (e.kind() != anchor::AnchorError::Kind::NotFound) throw;
    }
    // A batch member is proven through its receipt: the proof must lead to a stamped root.
    if (found.empty() && !receipt_path.empty()) {
        json doc = read_json(receipt_path);
        std::vector<json> candidates = doc.is_array() ? doc.get<std::vector<json>>() : std::vector<json>{doc};
        for (const auto& c : candidates) {
            auto r = anchor::receipt_from_json(c);
            if (r.hash != hash || !r.merkle_proof || !r.batch_root) continue;
            if (!anchor::verify_merkle_proof(hash, *r.merkle_proof, *r.batch_root)) continue;
            try {
                auto roots = anchor::verify_timestamp(*r.batch_root, ledger);
                for (auto& root : roots) {
                    root.hash = hash;
                    root.address = anchor::derive_address(hash);
                    root.merkle_proof = r.merkle_proof;
                    found.push_back(root);
                }
            } catch (const anchor::AnchorError& e) {
                if (e.kind() != anchor::AnchorError::Kind::NotFound) throw;
            }
        }
    }
    if (json_out) {
        json doc = json::array();
        for (const auto& r : found) doc.push_back(anchor::receipt_to_json(r));
        out << doc.dump(2) << "\n";
    } else if (found.empty()) {
        out << "not found: " << hash << "\n";
    } else {
        for (std::size_t i = 0; i < found.size(); ++i) {
            if (i) out << "\n";
            print_receipt(found[i], out);
        }
    }
    return found.empty() ? kNegative : kOk;
}

int cmd_audit(const std::optional<std::string>& ledger_flag, std::ostream& out) {
    anchor::Ledger ledger(anchor::Ledger::resolve_path(ledger_flag));
    if (!std::filesystem::exists(ledger.path()))
        throw anchor::AnchorError(anchor::AnchorError::Kind::LedgerUnavailable,
                                  "ledger " + ledger.path().string() + " does not exist");
    auto report = ledger.audit();
    if (report.ok) {
        out << "ledger ok: " << report.entries << " entries\n";
        return kOk;
    }
    out << "ledger audit failed";
    if (report.bad_line) out << " at line " << *report.bad_line;
    out << ": " << report.problem << "\n";
    return kNegative;
}

int cmd_timemap(const std::string& uri_t, const std::string& out_path, const std::string& diff_path,
                const std::string& config_path, bool json_out, int timeout_ms, std::ostream& out) {
    ArchiveConfig config = load_config(config_path, {});
    fetch::FetchPolicy policy;
    policy.request_timeout_ms = timeout_ms;
    auto r = fetch::fetch_resource(uri_t, policy);
    if (r.status < 200 || r.status >= 300)
        throw fetch::FetchError(fetch::FetchError::Kind::BadStatus, uri_t,
                                "TimeMap request answered " + std::to_string(r.status));
    auto snapshot = protocol::parse_link_format(r.body, r.final_uri, config.prefixes);
    snapshot.observed_at = r.fetched_at;
    json doc = snapshot;
    if (!out_path.empty()) write_file(out_path, doc.dump(2) + "\n");
    if (diff_path.empty()) {
        if (json_out) out << doc.dump(2) << "\n";
        else out << "entries: " << snapshot.entries.size() << "\n";
        return kOk;
    }
    protocol::TimeMapSnapshot prior;
    try {
        prior = protocol::snapshot_from_json(read_json(diff_path));
    } catch (const protocol::ProtocolError& e) {
        throw Exit{kUsage, diff_path + ": " + e.what()};
    } catch (const json::exception& e) {
        throw Exit{kUsage, diff_path + ": " + e.what()};
    }
    auto delta = protocol::diff_timemaps(prior, snapshot);
    if (json_out) {
        out << json(delta).dump(2) << "\n";
    } else {
        for (const auto& e : delta.added)
            out << "added   " << serialize(e.memento) << " " << format_rfc3339(e.datetime) << "\n";
        for (const auto& e : delta.removed)
            out << "removed " << serialize(e.memento) << " " << format_rfc3339(e.datetime) << "\n";
        out << "unchanged: " << delta.unchanged_count << "\n";
    }
    return delta.empty() ? kOk : kInconclusive;
}

int cmd_serve(const std::string& scenario_path, int port, std::ostream& out) {
    sim::Server server(sim::load_scenario(scenario_path));
    int bound = server.start(port);
    out << "serving " << scenario_path << " at http://127.0.0.1:" << bound << "/\n" << std::flush;
    g_stop = false;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return kOk;
}

int cmd_validate(const std::vector<std::string>& paths, std::ostream& out) {
    int code = kOk;
    for (const auto& p : paths) {
        auto diags = sim::validate_scenario(p);
        if (diags.empty()) {
            out << "ok " << p << "\n";
            continue;
        }
        code = kUsage;
        out << "invalid " << p << "\n";
        for (const auto& d : diags) out << "  " << sim::to_string(d) << "\n";
    }
    return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"memfix: fixity for archived web pages"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    HashOptions ho;
    auto* hash = app.add_subcommand("hash", "Hash a composite memento and write its manifest");
    hash->add_option("uri-m", ho.uri_m, "Root URI-M")->required();
    hash->add_option("--config", ho.config_path, "Archive config (prefixes, deny-list, banner selectors)");
    hash->add_option("--profile", ho.profile_path, "Hash profile JSON");
    hash->add_option("--policy", ho.policy_path, "Fetch policy JSON");
    hash->add_option("--out", ho.out_path, "Write the manifest here");
    hash->add_option("--prefix", ho.prefixes, "Extra replay prefix (repeatable)");
    hash->add_option("--algorithm", ho.algorithm, "sha256 (default) or md5");
    hash->add_flag("--html-only", ho.html_only, "Naive mode: digest of the replay HTML alone");
    hash->add_flag("--json", ho.json_out, "Print the manifest instead of a summary");
    hash->add_flag("--no-cache-bypass", ho.no_cache_bypass, "Accept archive cache HITs");
    hash->add_flag("--no-stability-probe", ho.no_stability_probe, "Fetch each resource once");
    hash->add_option("--cache-retry-limit", ho.cache_retry_limit);
    hash->add_option("--stability-delay-ms", ho.stability_delay_ms);
    hash->add_option("--max-depth", ho.max_depth);
    hash->add_option("--concurrency", ho.concurrency);
    hash->add_option("--timeout-ms", ho.timeout_ms);

    std::string cmp_a, cmp_b;
    bool cmp_json = false;
    auto* compare = app.add_subcommand("compare", "Compare two manifests of the same root");
    compare->add_option("earlier", cmp_a)->required()->check(CLI::ExistingFile);
    compare->add_option("later", cmp_b)->required()->check(CLI::ExistingFile);
    compare->add_flag("--json", cmp_json);

    std::vector<std::string> stamp_args;
    std::optional<std::string> ledger_flag;
    std::string receipts_path;
    bool stamp_json = false;
    auto* stamp = app.add_subcommand("stamp", "Record hashes in the ledger (several form a Merkle batch)");
    stamp->add_option("hash-or-manifest", stamp_args)->required();
    stamp->add_option("--ledger", ledger_flag, "Ledger file (default: $LEDGER_PATH)");
    stamp->add_option("--receipts", receipts_path, "Write receipts JSON here");
    stamp->add_flag("--json", stamp_json);

    std::string verify_arg, receipt_path;
    bool verify_json = false;
    auto* verify = app.add_subcommand("verify", "Look up the stamps of a hash or manifest");
    verify->add_option("hash-or-manifest", verify_arg)->required();
    verify->add_option("--ledger", ledger_flag, "Ledger file (default: $LEDGER_PATH)");
    verify->add_option("--receipt", receipt_path, "Receipt with a Merkle proof for batch members");
    verify->add_flag("--json", verify_json);

    auto* audit = app.add_subcommand("audit", "Check the ledger's checksum chain");
    audit->add_option("--ledger", ledger_flag, "Ledger file (default: $LEDGER_PATH)");

    std::string tm_uri, tm_out, tm_diff, tm_config;
    bool tm_json = false;
    int tm_timeout = fetch::FetchPolicy{}.request_timeout_ms;
    auto* timemap = app.add_subcommand("timemap", "Snapshot a TimeMap, or diff it against a prior snapshot");
    timemap->add_option("uri-t", tm_uri)->required();
    timemap->add_option("--out", tm_out, "Write the snapshot here");
    timemap->add_option("--diff", tm_diff, "Prior snapshot to diff against")->check(CLI::ExistingFile);
    timemap->add_option("--config", tm_config);
    timemap->add_option("--timeout-ms", tm_timeout);
    timemap->add_flag("--json", tm_json);

    std::string scenario_path;
    int port = 8080;
    auto* serve = app.add_subcommand("serve-fixture", "Serve a fixture archive scenario");
    serve->add_option("--scenario", scenario_path)->required()->check(CLI::ExistingFile);
    serve->add_option("--port", port, "0 picks a free port");

    std::vector<std::string> validate_paths;
    auto* validate = app.add_subcommand("validate-scenario", "Check scenario files");
    validate->add_option("scenario", validate_paths)->required();

    std::vector<std::string> argv_store{"memfix"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n" << "run 'memfix --help' for usage\n";
        return kUsage;
    }

    try {
        if (*hash) return cmd_hash(ho, out, err);
        if (*compare) return cmd_compare(cmp_a, cmp_b, cmp_json, out);
        if (*stamp) return cmd_stamp(stamp_args, ledger_flag, receipts_path, stamp_json, out);
        if (*verify) return cmd_verify(verify_arg, ledger_flag, receipt_path, verify_json, out);
        if (*audit) return cmd_audit(ledger_flag, out);
        if (*timemap) return cmd_timemap(tm_uri, tm_out, tm_diff, tm_config, tm_json, tm_timeout, out);
        if (*serve) return cmd_serve(scenario_path, port, out);
        if (*validate) return cmd_validate(validate_paths, out);
    } catch (const Exit& e) {
        err << "memfix: " << e.message << "\n";
        return e.code;
    } catch (const fixity::FixityError& e) {
        err << "memfix: " << e.what() << "\n";
        return e.kind() == fixity::FixityError::Kind::EmptyManifest ? kFailure : kUsage;
    } catch (const fetch::FetchError& e) {
        err << "memfix: " << e.what() << "\n";
        return kFailure;
    } catch (const anchor::AnchorError& e) {
        err << "memfix: " << e.what() << "\n";
        switch (e.kind()) {
            case anchor::AnchorError::Kind::NotFound: return kNegative;
            case anchor::AnchorError::Kind::MalformedHash:
            case anchor::AnchorError::Kind::EmptyBatch: return kUsage;
            default: return kFailure;
        }
    } catch (const protocol::ProtocolError& e) {
        err << "memfix: " << e.what() << "\n";
        return kUsage;
    } catch (const sim::ScenarioError& e) {
        err << "memfix: " << e.what() << "\n";
        return kUsage;
    } catch (const Error& e) {
        err << "memfix: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}

}  // namespace memfix::cli
