#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "fixture.hpp"
#include "memfix/extract.hpp"

using namespace memfix;
using namespace memfix::extract;
using memfix::testing::FixtureServer;
using memfix::testing::fixture_path;
using memfix::testing::quick_policy;
using memfix::testing::slurp;

namespace {

std::vector<std::string> uris(const Discovery& d) {
    std::vector<std::string> out;
    for (const auto& r : d.resources) out.push_back(r.resolved_uri);
    return out;
}

const ExpansionRow* row_for(const std::vector<ExpansionRow>& rows, std::string_view needle) {
    for (const auto& r : rows)
        if (r.resource.resolved_uri.find(needle) != std::string::npos) return &r;
    return nullptr;
}

ArchiveConfig config_for(FixtureServer& s) {
    auto c = ArchiveConfig::defaults();
    c.prefixes.push_back(s->origin() + "/web/");
    return c;
}

}  // namespace

TEST_SUITE("extract") {

TEST_CASE("config: the shipped default.conf is exactly the built-in defaults") {
    auto shipped = ArchiveConfig::load(std::filesystem::path(MEMFIX_CONFIG_DIR) / "default.conf");
    auto built_in = ArchiveConfig::defaults();
    CHECK(shipped.prefixes == built_in.prefixes);
    CHECK(shipped.deny == built_in.deny);
    CHECK(shipped.banner_selectors == built_in.banner_selectors);
}

TEST_CASE("config: bare prefix lists, comments and bad lines") {
    auto c = ArchiveConfig::parse("# archives\nhttp://a.example/web/  # trailing note\n\n[deny]\n*/toolbar/*\n");
    CHECK(c.prefixes == std::vector<std::string>{"http://a.example/web/"});
    CHECK(c.deny == std::vector<std::string>{"*/toolbar/*"});
    CHECK(c.is_denied("http://a.example/static/toolbar/x.js"));
    CHECK_FALSE(c.is_denied("http://a.example/web/2017/x.js"));
    CHECK(c.is_archive_host("http://a.example/anything"));
    CHECK_FALSE(c.is_archive_host("http://b.example/web/"));
    try {
        ArchiveConfig::parse("http://a.example/\n[nope]\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(ArchiveConfig::parse("ftp://a.example/\n"), ConfigError);
    CHECK_THROWS_AS(ArchiveConfig::parse("[banner-selectors]\nwm-ipp\n"), ConfigError);
    CHECK_THROWS_AS(ArchiveConfig::load("/nonexistent/memfix.conf"), ConfigError);
}

TEST_CASE("config: glob matching") {
    CHECK(glob_match("*", ""));
    CHECK(glob_match("a*c", "abbbc"));
    CHECK(glob_match("*://web.archive.org/_static/*", "https://web.archive.org/_static/js/playback.js"));
    CHECK_FALSE(glob_match("a*c", "abcd"));
    CHECK_FALSE(glob_match("abc", "ab"));
}

TEST_CASE("discover: the usual embedding elements in document order") {
    const std::string html = R"html(<html><head>
<link rel="stylesheet" href="/css/site.css">
<link rel="icon" href="favicon.ico">
<script src="https://cdn.example/lib.js"></script>
<style>.hero { background: url('img/hero.jpg'); }</style>
</head><body style="background-image: url(/img/bg.png)">
<img src="photo.jpg#zoom" alt="">
<iframe src="/frame.html"></iframe>
<object data="/movie.swf"></object>
<embed src="/clip.swf">
<a href="/not-embedded.html">link</a>
</body></html>)html";
    auto d = discover_resources(html, "text/html; charset=utf-8", "http://a.example/dir/page.html");
    auto got = uris(d);
    std::vector<std::string> want{"http://a.example/css/site.css",   "http://a.example/dir/favicon.ico",
                                  "https://cdn.example/lib.js",      "http://a.example/dir/img/hero.jpg",
                                  "http://a.example/img/bg.png",     "http://a.example/dir/photo.jpg",
                                  "http://a.example/frame.html",     "http://a.example/movie.swf",
                                  "http://a.example/clip.swf"};
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    CHECK(got == want);
    for (const auto& r : d.resources) {
        CHECK(r.depth == 1);
        CHECK(r.source_uri == "http://a.example/dir/page.html");
    }
    auto photo = std::find_if(d.resources.begin(), d.resources.end(),
                              [](const auto& r) { return r.origin == Origin::ImgSrc; });
    REQUIRE(photo != d.resources.end());
    CHECK(photo->raw_reference == "photo.jpg#zoom");
}

TEST_CASE("discover: srcset candidates and entity decoding") {
    auto d = discover_resources(R"(<img src="a.jpg?x=1&amp;y=2" srcset="b.jpg 1x, c.jpg 2x">)", "text/html",
                                "http://a.example/");
    CHECK(uris(d) == std::vector<std::string>{"http://a.example/a.jpg?x=1&y=2", "http://a.example/b.jpg",
                                              "http://a.example/c.jpg"});
    CHECK(d.resources[1].origin == Origin::ImgSrcset);
}

TEST_CASE("discover: base href changes resolution") {
    auto d = discover_resources(R"(<head><base href="http://static.example/v2/"></head><img src="i.png">)",
                                "text/html", "http://a.example/page");
    CHECK(uris(d) == std::vector<std::string>{"http://static.example/v2/i.png"});
}

TEST_CASE("discover: non-http references are dropped and counted") {
    auto d = discover_resources(R"html(<img src="data:image/png;base64,AAAA"><script src="javascript:void(0)"></script>
<img src="mailto:x@a.example"><img src="ok.png">)html",
                                "text/html", "http://a.example/");
    CHECK(uris(d) == std::vector<std::string>{"http://a.example/ok.png"});
    CHECK(d.dropped == 3);
}

TEST_CASE("discover: CSS imports and url() at the next depth") {
    auto d = discover_resources(R"css(@import "print.css"; .x { background: url("/assets/bg-earth.png") })css", "text/css",
                                "https://climate.nasa.gov/assets/vital-signs.css", 1);
    CHECK(uris(d) == std::vector<std::string>{"https://climate.nasa.gov/assets/print.css",
                                              "https://climate.nasa.gov/assets/bg-earth.png"});
    for (const auto& r : d.resources) {
        CHECK(r.depth == 2);
        CHECK(r.origin == Origin::CssUrl);
    }
}

TEST_CASE("discover: other content types yield nothing") {
    CHECK(discover_resources("<img src=x.png>", "image/png", "http://a.example/").resources.empty());
    CHECK(discover_resources("<img src=x.png>", "application/javascript", "http://a.example/").resources.empty());
}

TEST_CASE("classify: memento, deny list, donotnegotiate, live web") {
    auto c = ArchiveConfig::defaults();
    CHECK(classify_uri("https://web.archive.org/web/20170705161539im_/http://www.weeklystandard.com/logo.png",
                       nullptr, c) == Classification{ClassValue::ArchivedMemento, Evidence::UriPattern});
    CHECK(classify_uri("https://web.archive.org/_static/js/bundle-playback.js", nullptr, c) ==
          Classification{ClassValue::ArchiveSpecific, Evidence::ConfigDenyList});
    auto dnn = protocol::parse_link_header("<http://mementoweb.org/terms/donotnegotiate>; rel=\"type\"");
    CHECK(classify_uri("https://web.archive.org/wombat.js", &dnn, c) ==
          Classification{ClassValue::ArchiveSpecific, Evidence::DoNotNegotiateHeader});
    CHECK(classify_uri("http://www.chicagotribune.com/js/trb-1.js", nullptr, c) ==
          Classification{ClassValue::LiveWeb, Evidence::NoArchivePrefix});
}

TEST_CASE("strip: the archived-on comment goes, everything else stays") {
    const std::string original = "<html><body><p>x</p></body></html>\n";
    const std::string replay = original +
                               "<!--\n     FILE ARCHIVED ON 18:51:30 Jul 17, 2017 AND RETRIEVED FROM THE\n"
                               "     INTERNET ARCHIVE ON 14:02:11 Aug 3, 2017.\n-->";
    auto profile = StripProfile::from_config(ArchiveConfig::defaults());
    CHECK(strip_archive_markup(replay, profile) == original);
    const std::string other = "<html><!-- an ordinary comment --><body>y</body></html>";
    CHECK(strip_archive_markup(other, profile) == other);
}

TEST_CASE("strip: a page without archive markup is returned byte for byte") {
    auto profile = StripProfile::from_config(ArchiveConfig::defaults());
    std::string page = slurp(fixture_path("bodies/co2.html"));
    CHECK(strip_archive_markup(page, profile) == page);
    CHECK(strip_archive_markup("", profile).empty());
}

TEST_CASE("strip: Wayback banner, playback script and comment match the committed expectation") {
    auto profile = StripProfile::from_config(ArchiveConfig::defaults());
    std::string replay = slurp(fixture_path("strip/weekly.replay.html"));
    std::string expected = slurp(fixture_path("strip/weekly.expected.html"));
    REQUIRE_FALSE(replay.empty());
    CHECK(strip_archive_markup(replay, profile,
                               "https://web.archive.org/web/20170705002324/http://www.weeklystandard.com/") == expected);
}

TEST_CASE("strip is idempotent over generated pages") {
    auto profile = StripProfile::from_config(ArchiveConfig::defaults());
    const std::vector<std::string> pieces = {
        "<p>text</p>",
        "<div id=\"wm-ipp\"><div>toolbar</div></div>",
        "<div class=\"wb-autocomplete-suggestions\"></div>",
        "<script src=\"https://web.archive.org/_static/js/ait-client.js\"></script>",
        "<script src=\"/js/site.js\"></script>",
        "<!-- FILE ARCHIVED ON 01:02:03 Jan 1, 2017 -->",
        "<!-- keep -->",
        "<img src=\"a.png\">",
        "<div id=\"wm-ipp-base\">",
        "</div>",
        "<div id=\"donato\"><iframe src=\"x\"></iframe></div>",
        "\n",
        "<span class=\"x wb-autocomplete-suggestions y\">s</span>",
    };
    std::mt19937 rng(99);
    for (int i = 0; i < 3000; ++i) {
        std::string page = "<html><body>";
        int n = static_cast<int>(rng() % 12);
        for (int k = 0; k < n; ++k) page += pieces[rng() % pieces.size()];
        page += "</body></html>";
        auto once = strip_archive_markup(page, profile, "https://web.archive.org/web/20170101000000/http://a.example/");
        auto twice = strip_archive_markup(once, profile, "https://web.archive.org/web/20170101000000/http://a.example/");
        CHECK_MESSAGE(once == twice, page);
        CHECK(once.find("FILE ARCHIVED ON") == std::string::npos);
    }
}

TEST_CASE("expand: the leaking gallery gives six rows without touching the live web") {
    FixtureServer s("leak.json");
    auto rows = expand_composite(*protocol::parse_memento_uri(s.memento("page")), quick_policy(), config_for(s));
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].resource.origin == Origin::Root);
    CHECK(rows[0].stripped);

    auto count = [&](ClassValue v) {
        return std::count_if(rows.begin(), rows.end(), [&](const auto& r) { return r.classification.value == v; });
    };
    CHECK(count(ClassValue::ArchivedMemento) == 4);
    CHECK(count(ClassValue::ArchiveSpecific) == 1);
    CHECK(count(ClassValue::LiveWeb) == 1);

    const auto* leak = row_for(rows, "/js/trb-1.js");
    REQUIRE(leak);
    CHECK(leak->classification == Classification{ClassValue::LiveWeb, Evidence::NoArchivePrefix});
    const auto* playback = row_for(rows, "/_sim/playback.js");
    REQUIRE(playback);
    CHECK(playback->classification == Classification{ClassValue::ArchiveSpecific, Evidence::DoNotNegotiateHeader});
    CHECK(s->stats().count("/js/trb-1.js") == 0);
}

TEST_CASE("expand: a page with no embedded resources is a single row") {
    memfix::testing::TempDir dir;
    std::ofstream(dir / "s.json") << R"({"name": "bare", "resources": [{"id": "page", "uri_r": "http://a.example/",
        "timestamp14": "20170101000000", "content_type": "text/html", "body": "<html><body>bare</body></html>"}]})";
    sim::Server server(sim::load_scenario(dir / "s.json"));
    server.start(0);
    auto rows = expand_composite(*protocol::parse_memento_uri(server.memento_uri("page")), quick_policy(),
                                 ArchiveConfig::defaults());
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].result);
    CHECK(rows[0].result->raw_used);
    CHECK_FALSE(rows[0].stripped);
}

TEST_CASE("expand: the CO2 page reaches the chart and the CSS background") {
    FixtureServer s("co2.json");
    auto rows = expand_composite(*protocol::parse_memento_uri(s.memento("page")), quick_policy(), config_for(s));
    REQUIRE(rows.size() == 4);
    const auto* chart = row_for(rows, "15_co2_left_061316.gif");
    REQUIRE(chart);
    REQUIRE(chart->memento);
    CHECK(serialize(*chart->memento) ==
          s->origin() + "/web/20170717185130im_/https://climate.nasa.gov/system/charts/15_co2_left_061316.gif");
    const auto* bg = row_for(rows, "bg-earth.png");
    REQUIRE(bg);
    CHECK(bg->resource.depth == 2);
    CHECK(bg->result);
    CHECK(bg->result->status == 200);
}

TEST_CASE("expand: the row order does not depend on fetch scheduling") {
    FixtureServer s("leak.json");
    auto root = *protocol::parse_memento_uri(s.memento("page"));
    auto flatten = [](const std::vector<ExpansionRow>& rows) {
        std::vector<std::string> out;
        for (const auto& r : rows)
            out.push_back(r.resource.resolved_uri + " " + std::string(to_string(r.classification.value)));
        return out;
    };
    auto policy = quick_policy();
    policy.concurrency = 1;
    auto serial = flatten(expand_composite(root, policy, config_for(s)));
    for (int i = 0; i < 3; ++i) {
        s->reset();
        policy.concurrency = 8;
        CHECK(flatten(expand_composite(root, policy, config_for(s))) == serial);
    }
}

}  // TEST_SUITE
