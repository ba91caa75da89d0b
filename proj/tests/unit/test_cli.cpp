#include <doctest.h>

#include <fstream>
#include <sstream>

#include "fixture.hpp"
#include "memfix/anchor.hpp"
#include "memfix/cli.hpp"
#include "memfix/fixity.hpp"

using namespace memfix;
using memfix::testing::fixture_path;
using memfix::testing::FixtureServer;
using memfix::testing::slurp;
using memfix::testing::TempDir;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

// hash with a short probe delay; the fixture archive does not drift with time.
Outcome hash(const std::string& uri_m, const std::filesystem::path& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"hash", uri_m, "--out", out.string(), "--stability-delay-ms", "5"};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 3, help exits 0") {
    CHECK(run({}).code == cli::kUsage);
    CHECK(run({"frobnicate"}).code == cli::kUsage);
    CHECK(run({"hash"}).code == cli::kUsage);
    CHECK(run({"hash", "http://www.cnn.com/"}).code == cli::kUsage);  // not a URI-M
    CHECK(run({"--help"}).code == cli::kOk);
    CHECK(run({"hash", "--help"}).code == cli::kOk);
}

TEST_CASE("hash writes a manifest that loads back and matches --json output") {
    FixtureServer s("co2.json");
    TempDir dir;
    auto r = hash(s.memento("page"), dir / "m.json");
    REQUIRE(r.code == cli::kOk);
    CHECK(r.out.find("records: 4, excluded: 0") != std::string::npos);
    auto m = fixity::manifest_from_json(nlohmann::ordered_json::parse(slurp(dir / "m.json")));
    CHECK(r.out.find("aggregate: " + m.aggregate_hash) != std::string::npos);

    s->reset();
    auto j = run({"hash", s.memento("page"), "--json", "--stability-delay-ms", "5"});
    REQUIRE(j.code == cli::kOk);
    auto printed = fixity::manifest_from_json(nlohmann::ordered_json::parse(j.out));
    CHECK(printed.aggregate_hash == m.aggregate_hash);
    CHECK(printed.records == m.records);
}

TEST_CASE("compare exits 0 for identical captures and 1 after tampering") {
    FixtureServer s("co2.json");
    TempDir dir;
    REQUIRE(hash(s.memento("page"), dir / "a.json").code == cli::kOk);
    s->reset();
    REQUIRE(hash(s.memento("page"), dir / "b.json").code == cli::kOk);
    CHECK(run({"compare", (dir / "a.json").string(), (dir / "b.json").string()}).code == cli::kOk);

    REQUIRE(s->trigger("tamper_text"));
    REQUIRE(hash(s.memento("page"), dir / "c.json").code == cli::kOk);
    auto r = run({"compare", (dir / "a.json").string(), (dir / "c.json").string(), "--json"});
    CHECK(r.code == cli::kNegative);
    auto report = fixity::report_from_json(nlohmann::ordered_json::parse(r.out));
    CHECK(report.verdict == fixity::Verdict::Tampered);
    REQUIRE(report.changed.size() == 1);
    CHECK(report.changed[0].target == "https://climate.nasa.gov/vital-signs/carbon-dioxide/");
}

TEST_CASE("compare exits 2 when a record turned Dynamic") {
    FixtureServer s("drift.json");
    TempDir dir;
    REQUIRE(hash(s.memento("page"), dir / "a.json").code == cli::kOk);
    REQUIRE(s->trigger("start_rotation"));
    REQUIRE(hash(s.memento("page"), dir / "b.json").code == cli::kOk);
    auto r = run({"compare", (dir / "a.json").string(), (dir / "b.json").string()});
    CHECK(r.code == cli::kInconclusive);
    CHECK(run({"compare", (dir / "a.json").string(), (dir / "nope.json").string()}).code == cli::kUsage);
}

TEST_CASE("a root that is not archived is EmptyManifest, exit 4") {
    FixtureServer s("timemap.json");
    TempDir dir;
    auto r = hash(s.memento("image"), dir / "m.json");
    CHECK(r.code == cli::kFailure);
    CHECK_FALSE(std::filesystem::exists(dir / "m.json"));
}

TEST_CASE("html-only mode warns on stderr") {
    FixtureServer s("co2.json");
    TempDir dir;
    auto r = hash(s.memento("page"), dir / "m.json", {"--html-only"});
    CHECK(r.code == cli::kOk);
    CHECK(r.err.find("WARNING") != std::string::npos);
    auto m = fixity::manifest_from_json(nlohmann::ordered_json::parse(slurp(dir / "m.json")));
    CHECK(m.profile.html_only);
    CHECK(m.records.size() == 1);
}

TEST_CASE("stamp, verify and audit") {
    TempDir dir;
    auto ledger = (dir / "ledger.ndjson").string();
    const std::string h(64, 'a');
    auto st = run({"stamp", h, "--ledger", ledger, "--json"});
    REQUIRE(st.code == cli::kOk);
    auto receipts = nlohmann::ordered_json::parse(st.out);
    REQUIRE(receipts.size() == 1);
    CHECK(anchor::receipt_from_json(receipts[0]).address == anchor::derive_address(h));

    CHECK(run({"verify", h, "--ledger", ledger}).code == cli::kOk);
    CHECK(run({"verify", std::string(64, 'b'), "--ledger", ledger}).code == cli::kNegative);
    CHECK(run({"verify", h, "--ledger", (dir / "absent.ndjson").string()}).code == cli::kFailure);
    CHECK(run({"stamp", "not-a-hash", "--ledger", ledger}).code == cli::kUsage);
    CHECK(run({"audit", "--ledger", ledger}).code == cli::kOk);
    CHECK(run({"audit", "--ledger", (dir / "absent.ndjson").string()}).code == cli::kFailure);

    std::string text = slurp(ledger);
    text[text.find("\"hash\":\"a") + 8] = 'b';
    std::ofstream(ledger, std::ios::trunc) << text;
    CHECK(run({"audit", "--ledger", ledger}).code == cli::kNegative);
}

TEST_CASE("stamp a manifest file, then verify a batch member through its receipt") {
    TempDir dir;
    auto ledger = (dir / "ledger.ndjson").string();
    auto receipts = (dir / "receipts.json").string();
    std::vector<std::string> hashes{std::string(64, '1'), std::string(64, '2'), std::string(64, '3')};
    REQUIRE(run({"stamp", hashes[0], hashes[1], hashes[2], "--ledger", ledger, "--receipts", receipts}).code ==
            cli::kOk);
    CHECK(run({"verify", hashes[1], "--ledger", ledger, "--receipt", receipts}).code == cli::kOk);
    CHECK(run({"verify", hashes[1], "--ledger", ledger}).code == cli::kNegative);
}

TEST_CASE("timemap snapshots and diffs") {
    FixtureServer s("timemap.json");
    TempDir dir;
    const std::string uri_r = "http://ichef.bbci.co.uk/wwhp/144/cpsprodpb/730D/production/_97235492_p05brd0w.jpg";
    auto uri_t = s->timemap_uri(uri_r);
    REQUIRE(run({"timemap", uri_t, "--out", (dir / "t0.json").string()}).code == cli::kOk);
    CHECK(run({"timemap", uri_t, "--diff", (dir / "t0.json").string()}).code == cli::kOk);

    REQUIRE(s->trigger("capture_image"));
    auto r = run({"timemap", uri_t, "--diff", (dir / "t0.json").string(), "--json"});
    CHECK(r.code == cli::kInconclusive);
    auto delta = protocol::delta_from_json(nlohmann::ordered_json::parse(r.out));
    REQUIRE(delta.added.size() == 1);
    CHECK(format_rfc3339(delta.added[0].datetime) == "2017-08-07T23:05:27Z");

    CHECK(run({"timemap", s.url("/web/timemap/link/http://unknown.example/")}).code == cli::kFailure);
}

TEST_CASE("validate-scenario") {
    CHECK(run({"validate-scenario", fixture_path("co2.json").string()}).code == cli::kOk);
    auto bad = run({"validate-scenario", fixture_path("invalid/conflict.json").string()});
    CHECK(bad.code == cli::kUsage);
    CHECK(bad.out.find("line 14") != std::string::npos);
}

}  // TEST_SUITE
