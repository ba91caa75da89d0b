// Acceptance run against the fixture archive. One line per criterion; exit status is
// the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fixture.hpp"
#include "generators.hpp"
#include "memfix/anchor.hpp"
#include "memfix/cli.hpp"
#include "memfix/fixity.hpp"
#include "memfix/protocol.hpp"

using namespace memfix;
using memfix::testing::FixtureServer;
using memfix::testing::slurp;
using memfix::testing::TempDir;
using json = nlohmann::ordered_json;

namespace {

struct Failed {
    std::string why;
};

void expect(bool ok, const std::string& why) {
    if (!ok) throw Failed{why};
}

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome cli_run(std::vector<std::string> args) {
    std::ostringstream out, err;
    int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

// Fixture content does not change with wall-clock time, so a short probe delay is enough.
const std::vector<std::string> kQuick{"--stability-delay-ms", "5"};

fixity::FixityManifest cmd_hash(const std::string& uri_m, const std::filesystem::path& out,
                                std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"hash", uri_m, "--out", out.string()};
    args.insert(args.end(), kQuick.begin(), kQuick.end());
    args.insert(args.end(), extra.begin(), extra.end());
    auto r = cli_run(args);
    expect(r.code == cli::kOk, "hash exited " + std::to_string(r.code) + ": " + r.err);
    return fixity::manifest_from_json(json::parse(slurp(out)));
}

int cmd_compare(const std::filesystem::path& a, const std::filesystem::path& b) {
    return cli_run({"compare", a.string(), b.string()}).code;
}

json records_json(const fixity::FixityManifest& m) { return fixity::manifest_to_json(m)["records"]; }

std::string short_hash(const std::string& h) { return h.substr(0, 12); }

const fixity::ResourceRecord* record_for(const fixity::FixityManifest& m, std::string_view needle) {
    for (const auto& r : m.records)
        if (r.target.str().find(needle) != std::string::npos) return &r;
    return nullptr;
}

// ---------------------------------------------------------------------------------------

std::string repeatability() {
    FixtureServer s("co2.json");
    TempDir dir;
    auto start = std::chrono::steady_clock::now();
    std::set<std::string> aggregates;
    for (int i = 0; i < 5; ++i)
        aggregates.insert(cmd_hash(s.memento("page"), dir / ("run" + std::to_string(i) + ".json")).aggregate_hash);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    expect(aggregates.size() == 1, std::to_string(aggregates.size()) + " distinct aggregates over 5 runs");
    expect(secs < 10.0, "5 runs took " + std::to_string(secs) + " s");
    std::ostringstream o;
    o << "5 runs, 1 distinct aggregate " << short_hash(*aggregates.begin()) << ", " << secs << " s";
    return o.str();
}

std::string html_only_contrast() {
    FixtureServer s("image_tamper.json");
    TempDir dir;
    auto naive_before = cmd_hash(s.memento("page"), dir / "naive_a.json", {"--html-only"});
    auto full_before = cmd_hash(s.memento("page"), dir / "full_a.json");
    s->reset();
    cmd_hash(s.memento("page"), dir / "full_b.json");
    expect(s->trigger("tamper_chart"), "tamper_chart event missing");
    auto naive_after = cmd_hash(s.memento("page"), dir / "naive_c.json", {"--html-only"});
    auto full_after = cmd_hash(s.memento("page"), dir / "full_c.json");

    expect(naive_before.aggregate_hash == naive_after.aggregate_hash, "html-only digests differ");
    expect(full_before.aggregate_hash != full_after.aggregate_hash, "composite aggregates are equal");
    int same = cmd_compare(dir / "full_a.json", dir / "full_b.json");
    int tampered = cmd_compare(dir / "full_a.json", dir / "full_c.json");
    expect(same == 0, "compare of untampered pair exited " + std::to_string(same));
    expect(tampered == 1, "compare across the tamper exited " + std::to_string(tampered));
    return "html-only " + short_hash(naive_before.aggregate_hash) + " == " + short_hash(naive_after.aggregate_hash) +
           ", composite " + short_hash(full_before.aggregate_hash) + " != " + short_hash(full_after.aggregate_hash) +
           ", compare exits 0 then 1";
}

std::string banner_drift() {
    std::string detail;
    for (const char* scenario : {"banner_raw.json", "banner_replay.json"}) {
        FixtureServer s(scenario);
        TempDir dir;
        auto replay_path = s.memento("page");
        auto before_bytes = fetch::fetch_resource(replay_path, memfix::testing::quick_policy()).body;
        auto before = cmd_hash(s.memento("page"), dir / "a.json");
        expect(s->trigger("bump_banner"), "bump_banner event missing");
        auto after_bytes = fetch::fetch_resource(replay_path, memfix::testing::quick_policy()).body;
        auto after = cmd_hash(s.memento("page"), dir / "b.json");
        expect(before_bytes != after_bytes, std::string(scenario) + ": banner bump did not change replay bytes");
        expect(before.aggregate_hash == after.aggregate_hash, std::string(scenario) + ": aggregate changed");
        expect(records_json(before).dump() == records_json(after).dump(),
               std::string(scenario) + ": records are not byte-equal");
        detail += std::string(detail.empty() ? "" : ", ") + scenario + " " + short_hash(before.aggregate_hash) +
                  " stable";
    }
    return detail;
}

std::string live_leak() {
    FixtureServer s("leak.json");
    TempDir dir;
    auto m = cmd_hash(s.memento("page"), dir / "m.json");
    std::string leak = s->live_origin() + "/js/trb-1.js";
    bool excluded = false;
    for (const auto& e : m.excluded) excluded |= e.uri == leak && e.reason == fixity::ExclusionReason::LiveWeb;
    expect(excluded, leak + " not excluded as LiveWeb");
    auto stats = s->stats();
    int hits = stats.count("/js/trb-1.js") ? stats["/js/trb-1.js"] : 0;
    expect(hits == 0, "live route was requested " + std::to_string(hits) + " times");
    return leak + " excluded LiveWeb, 0 hits on /js/trb-1.js";
}

std::string cache_hit() {
    TempDir dir;
    std::vector<std::string> off_hashes;
    {
        FixtureServer s("cache.json");
        for (int run = 1; run <= 4; ++run) {
            auto m = cmd_hash(s.memento("page"), dir / ("off" + std::to_string(run) + ".json"),
                              {"--no-cache-bypass", "--no-stability-probe"});
            auto* page = record_for(m, "reservoirs");
            expect(page != nullptr, "page record missing in run " + std::to_string(run));
            off_hashes.push_back(page->content_hash);
        }
    }
    expect(off_hashes[0] == off_hashes[1] && off_hashes[1] == off_hashes[2],
           "bypass disabled: runs 1-3 differ despite the stale cache");
    expect(off_hashes[3] != off_hashes[0], "bypass disabled: run 4 (MISS after tamper) did not change");

    std::vector<std::string> on_hashes;
    {
        FixtureServer s("cache.json");
        for (int run = 1; run <= 2; ++run) {
            auto m = cmd_hash(s.memento("page"), dir / ("on" + std::to_string(run) + ".json"), {"--no-stability-probe"});
            auto* page = record_for(m, "reservoirs");
            expect(page != nullptr, "page record missing with bypass");
            on_hashes.push_back(page->content_hash);
        }
    }
    expect(on_hashes[0] != on_hashes[1], "bypass enabled: the post-tamper run did not differ");
    return "bypass off: runs 1-3 " + short_hash(off_hashes[0]) + ", run 4 " + short_hash(off_hashes[3]) +
           "; bypass on: " + short_hash(on_hashes[0]) + " -> " + short_hash(on_hashes[1]);
}

std::string timemap_flux() {
    FixtureServer s("timemap.json");
    TempDir dir;
    auto uri_t =
        s->timemap_uri("http://ichef.bbci.co.uk/wwhp/144/cpsprodpb/730D/production/_97235492_p05brd0w.jpg");
    auto first = cli_run({"timemap", uri_t, "--out", (dir / "t0.json").string()});
    expect(first.code == 0, "snapshot exited " + std::to_string(first.code));
    expect(s->trigger("capture_image"), "capture_image event missing");
    auto diff = cli_run({"timemap", uri_t, "--diff", (dir / "t0.json").string(), "--json"});
    expect(diff.code == 2, "diff exited " + std::to_string(diff.code));
    auto delta = protocol::delta_from_json(json::parse(diff.out));
    expect(delta.added.size() == 1 && delta.removed.empty(),
           std::to_string(delta.added.size()) + " added, " + std::to_string(delta.removed.size()) + " removed");
    auto when = format_rfc3339(delta.added[0].datetime);
    expect(when == "2017-08-07T23:05:27Z", "added entry dated " + when);
    return "exit 2, one added memento at " + when;
}

std::string rotating_icon() {
    FixtureServer s("dynamic.json");
    TempDir dir;
    std::set<std::string> aggregates;
    for (int i = 0; i < 5; ++i) {
        auto m = cmd_hash(s.memento("page"), dir / ("r" + std::to_string(i) + ".json"));
        bool dynamic = false;
        for (const auto& e : m.excluded)
            dynamic |= e.uri.find("current-conditions.gif") != std::string::npos &&
                       e.reason == fixity::ExclusionReason::Dynamic;
        expect(dynamic, "icon not excluded as Dynamic in run " + std::to_string(i + 1));
        expect(record_for(m, "current-conditions.gif") == nullptr, "icon was hashed");
        aggregates.insert(m.aggregate_hash);
    }
    expect(aggregates.size() == 1, std::to_string(aggregates.size()) + " distinct aggregates over 5 runs");
    return "icon excluded Dynamic in 5 runs, aggregate " + short_hash(*aggregates.begin());
}

std::string content_type_flip() {
    FixtureServer s("image_tamper.json");
    TempDir dir;
    std::ofstream(dir / "body_only.json") << R"({"included_headers": []})";
    std::vector<std::string> body_only{"--profile", (dir / "body_only.json").string()};

    auto def_a = cmd_hash(s.memento("page"), dir / "da.json");
    auto body_a = cmd_hash(s.memento("page"), dir / "ba.json", body_only);
    expect(s->trigger("retype_chart"), "retype_chart event missing");
    auto def_b = cmd_hash(s.memento("page"), dir / "db.json");
    auto body_b = cmd_hash(s.memento("page"), dir / "bb.json", body_only);

    auto chart = [](const fixity::FixityManifest& m) {
        auto* r = record_for(m, "15_co2_left_061316.gif");
        expect(r != nullptr, "chart record missing");
        return r->content_hash;
    };
    expect(chart(def_a) != chart(def_b), "default profile: chart hash unchanged by the retype");
    expect(def_a.aggregate_hash != def_b.aggregate_hash, "default profile: aggregate unchanged by the retype");
    expect(chart(body_a) == chart(body_b), "body-only profile: chart hash changed");
    expect(body_a.aggregate_hash == body_b.aggregate_hash, "body-only profile: aggregate changed");
    return "default " + short_hash(def_a.aggregate_hash) + " -> " + short_hash(def_b.aggregate_hash) +
           ", body-only " + short_hash(body_a.aggregate_hash) + " unchanged";
}

json run_oracle(const std::string& root) {
    std::string cmd = std::string(MEMFIX_PYTHON) + " " + MEMFIX_ORACLE_DIR + "/reference_pipeline.py '" + root +
                      "' --delay-ms 5";
    FILE* p = ::popen(cmd.c_str(), "r");
    expect(p != nullptr, "cannot start the reference pipeline");
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
    int status = ::pclose(p);
    expect(status == 0, "reference pipeline failed on " + root);
    return json::parse(out);
}

std::string oracle_equivalence() {
    std::vector<std::filesystem::path> scenarios;
    for (const auto& e : std::filesystem::directory_iterator(MEMFIX_FIXTURE_DIR))
        if (e.path().extension() == ".json") scenarios.push_back(e.path());
    std::sort(scenarios.begin(), scenarios.end());
    expect(!scenarios.empty(), "no committed fixtures");
    TempDir dir;
    for (const auto& f : scenarios) {
        std::string name = f.filename().string();
        FixtureServer s(name);
        auto ours = cmd_hash(s.memento("page"), dir / (name + ".manifest"));
        s->reset();
        auto theirs = run_oracle(s.memento("page"));
        expect(!theirs["aggregate"].is_null(), name + ": oracle found nothing to hash");
        expect(theirs["aggregate"].get<std::string>() == ours.aggregate_hash,
               name + ": aggregate " + ours.aggregate_hash + " vs oracle " + theirs["aggregate"].get<std::string>());
        expect(theirs["records"].size() == ours.records.size(), name + ": record count differs from oracle");
        for (std::size_t i = 0; i < ours.records.size(); ++i)
            expect(theirs["records"][i]["content_hash"] == ours.records[i].content_hash,
                   name + ": record " + ours.records[i].target.str() + " differs from oracle");
    }
    return std::to_string(scenarios.size()) + " fixtures, aggregates and every record hash equal";
}

std::string anchor_algebra() {
    auto start = std::chrono::steady_clock::now();
    TempDir dir;
    anchor::Ledger ledger(dir / "ledger.ndjson");
    std::mt19937_64 rng(20170717);
    auto random_digest = [&] {
        Bytes b(32);
        for (auto& x : b) x = static_cast<std::uint8_t>(rng());
        return to_hex(b);
    };
    std::vector<std::string> stamped;
    std::set<std::string> seen;
    for (int i = 0; i < 1000; ++i) {
        stamped.push_back(random_digest());
        seen.insert(stamped.back());
        anchor::stamp(stamped.back(), ledger);
    }
    std::size_t found = 0, not_found = 0;
    for (const auto& h : stamped) found += anchor::verify_timestamp(h, ledger).size() == 1;
    for (int i = 0; i < 1000; ++i) {
        auto h = random_digest();
        if (seen.count(h)) continue;
        try {
            anchor::verify_timestamp(h, ledger);
        } catch (const anchor::AnchorError& e) {
            not_found += e.kind() == anchor::AnchorError::Kind::NotFound;
        }
    }
    expect(found == 1000, std::to_string(found) + "/1000 stamped digests found");
    expect(not_found == 1000, std::to_string(not_found) + "/1000 unknown digests NotFound");

    std::vector<std::string> leaves(stamped.begin(), stamped.begin() + 5);
    auto batch = anchor::merkle_tree(leaves);
    std::size_t perturbations = 0;
    auto flip = [](std::string hex, std::size_t bit) {
        auto b = *from_hex(hex);
        b[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
        return to_hex(b);
    };
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        const auto& proof = batch.proofs[i];
        expect(anchor::verify_merkle_proof(leaves[i], proof, batch.root), "proof " + std::to_string(i) + " fails");
        for (std::size_t bit = 0; bit < 256; ++bit, ++perturbations)
            expect(!anchor::verify_merkle_proof(flip(leaves[i], bit), proof, batch.root), "leaf bit flip verified");
        for (std::size_t step = 0; step < proof.size(); ++step) {
            for (std::size_t bit = 0; bit < 256; ++bit, ++perturbations) {
                auto bad = proof;
                bad[step].sibling = flip(bad[step].sibling, bit);
                expect(!anchor::verify_merkle_proof(leaves[i], bad, batch.root), "sibling bit flip verified");
            }
            auto bad = proof;
            bad[step].side = bad[step].side == anchor::Side::L ? anchor::Side::R : anchor::Side::L;
            ++perturbations;
            expect(!anchor::verify_merkle_proof(leaves[i], bad, batch.root), "side flip verified");
        }
    }

    auto audit = ledger.audit();
    expect(audit.ok && audit.entries == 1000, "audit of the clean ledger failed: " + audit.problem);
    std::string text = slurp(ledger.path());
    auto pos = text.find("\"hash\":\"", text.size() / 2) + 8;
    text[pos] = text[pos] == '0' ? '1' : '0';
    std::ofstream(ledger.path(), std::ios::trunc | std::ios::binary) << text;
    auto edited = anchor::Ledger(ledger.path()).audit();
    expect(!edited.ok, "audit passed an edited ledger");

    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    expect(secs < 5.0, "took " + std::to_string(secs) + " s");
    std::ostringstream o;
    o << "1000/1000 found, 1000/1000 NotFound, " << perturbations << " Merkle perturbations rejected, "
      << "edited entry caught at line " << edited.bad_line.value_or(0) << ", " << secs << " s";
    return o.str();
}

std::string protocol_round_trip() {
    std::size_t checked = 0, failures = 0;
    auto check = [&](const std::string& u) {
        ++checked;
        auto m = protocol::parse_memento_uri(u);
        if (!m || protocol::serialize(*m) != u) ++failures;
    };
    for (const auto& u : memfix::testing::kLiteralMementos) check(u);
    memfix::testing::MementoGenerator gen(4);
    for (int i = 0; i < 10000; ++i) check(gen.next());
    expect(failures == 0, std::to_string(failures) + " round-trip failures");
    return std::to_string(checked) + " URI-Ms (" + std::to_string(memfix::testing::kLiteralMementos.size()) +
           " literal), 0 failures";
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<std::string()>>> criteria = {
        {"repeatability", repeatability},
        {"html-only vs composite", html_only_contrast},
        {"banner drift", banner_drift},
        {"live-web leak", live_leak},
        {"archive cache HIT", cache_hit},
        {"TimeMap flux", timemap_flux},
        {"rotating icon", rotating_icon},
        {"content-type flip", content_type_flip},
        {"oracle equivalence", oracle_equivalence},
        {"anchor algebra", anchor_algebra},
        {"protocol round trip", protocol_round_trip},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& [name, fn] = criteria[i];
        std::string status, detail;
        try {
            detail = fn();
            status = "PASS";
        } catch (const Failed& f) {
            status = "FAIL";
            detail = f.why;
        } catch (const std::exception& e) {
            status = "FAIL";
            detail = std::string("exception: ") + e.what();
        }
        if (status == "FAIL") ++failed;
        std::cout << "criterion " << (i + 1) << " [" << status << "] " << name << ": " << detail << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
              << " criteria passed" << std::endl;
    return failed;
}
