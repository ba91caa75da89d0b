#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "memfix/config.hpp"
#include "memfix/digest.hpp"
#include "memfix/error.hpp"
#include "memfix/extract.hpp"
#include "memfix/fetch.hpp"
#include "memfix/protocol.hpp"
#include "memfix/time.hpp"

namespace memfix::fixity {

inline constexpr std::string_view kToolkitVersion = "memfix 0.1.0";

/// Pseudo header naming the response status line in a profile.
inline constexpr std::string_view kStatusField = "status";

class FixityError : public Error {
public:
    enum class Kind { EmptyManifest, InvalidProfile, RootMismatch, ProfileMismatch, MalformedManifest };

    FixityError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct HashProfile {
    HashAlgorithm algorithm = HashAlgorithm::Sha256;
    /// Lowercase names; "status" stands for the status code.
    std::vector<std::string> included_headers{"status", "content-type", "location"};
    bool include_body = true;
    bool html_only = false;

    /// Lowercases header names and rejects date-varying, hop-by-hop and cache-state
    /// headers. Throws FixityError(InvalidProfile).
    void validate();

    friend bool operator==(const HashProfile&, const HashProfile&) = default;
};

void to_json(nlohmann::ordered_json& j, const HashProfile& p);
/// Missing keys keep their defaults; the result is validated.
HashProfile profile_from_json(const nlohmann::ordered_json& j);

/// The header section of the canonical serialization (possibly empty).
std::string canonical_header_section(const fetch::FetchResult& r, const HashProfile& profile);
/// Header section, then "\n" when that section is non-empty, then the body.
std::string canonical_serialization(const fetch::FetchResult& r, const HashProfile& profile);
std::string hash_resource(const fetch::FetchResult& r, const HashProfile& profile);

struct ResourceRecord {
    protocol::OriginalUri target;
    std::string memento_uri;
    extract::Classification classification;
    std::optional<UtcTime> memento_datetime;
    std::string content_hash;
    std::string header_digest_input;
    fetch::PageCache cache_status = fetch::PageCache::Absent;
    fetch::Stability stability = fetch::Stability::Unprobed;
    bool raw_used = false;
    bool stripped = false;
    /// Memento-Datetime disagrees with the URI-M timestamp (the archive redirected).
    bool datetime_mismatch = false;

    friend bool operator==(const ResourceRecord&, const ResourceRecord&) = default;
};

enum class ExclusionReason { ArchiveSpecific, LiveWeb, Dynamic, CacheHit, FetchError };

std::string_view to_string(ExclusionReason r);
std::optional<ExclusionReason> exclusion_from_string(std::string_view s);

struct Exclusion {
    std::string uri;
    ExclusionReason reason;
    std::string detail;

    friend bool operator==(const Exclusion&, const Exclusion&) = default;
};

struct FixityManifest {
    protocol::MementoUri root;
    UtcTime observed_at{};
    HashProfile profile;
    std::vector<ResourceRecord> records;  // sorted by (target, memento_uri)
    std::vector<Exclusion> excluded;      // sorted by (uri, reason)
    std::string aggregate_hash;
    std::string toolkit_version{kToolkitVersion};
};

/// The exact bytes the aggregate digest is computed over.
std::string aggregate_input(const std::vector<ResourceRecord>& records);
/// One record: its hash. Several: digest of aggregate_input. None: EmptyManifest.
std::string aggregate(const std::vector<ResourceRecord>& records, const HashProfile& profile);

void sort_records(std::vector<ResourceRecord>& records);

/// Pure part of hash_composite_memento: turns expansion rows into a manifest.
FixityManifest build_manifest(const protocol::MementoUri& root,
                              const std::vector<extract::ExpansionRow>& rows,
                              const HashProfile& profile, UtcTime observed_at);

FixityManifest hash_composite_memento(const protocol::MementoUri& root,
                                      const fetch::FetchPolicy& policy,
                                      const HashProfile& profile, const ArchiveConfig& config);

/// Digest of the replay body exactly as served. Deliberately naive.
std::string hash_html_only(const protocol::MementoUri& root, const fetch::FetchPolicy& policy,
                           const HashProfile& profile);

/// Manifest holding a single root record whose hash is hash_html_only.
FixityManifest html_only_manifest(const protocol::MementoUri& root,
                                  const fetch::FetchPolicy& policy, HashProfile profile);

nlohmann::ordered_json manifest_to_json(const FixityManifest& m);
/// Throws FixityError(MalformedManifest), including when aggregate_hash does not
/// recompute from the records.
FixityManifest manifest_from_json(const nlohmann::ordered_json& j);

enum class Verdict { Match, Tampered, Inconclusive };
std::string_view to_string(Verdict v);

struct RecordChange {
    std::string target;
    std::string memento_uri;
    std::optional<std::string> before;  // absent for added records
    std::optional<std::string> after;   // absent for removed records
};

struct VerificationReport {
    Verdict verdict = Verdict::Match;
    std::vector<RecordChange> changed;
    std::vector<RecordChange> added;
    std::vector<RecordChange> removed;
    std::vector<std::string> notes;  // why the verdict is Inconclusive
};

nlohmann::ordered_json report_to_json(const VerificationReport& r);
VerificationReport report_from_json(const nlohmann::ordered_json& j);

/// `a` is the earlier manifest. Throws FixityError(RootMismatch | ProfileMismatch).
VerificationReport compare_manifests(const FixityManifest& a, const FixityManifest& b);

}  // namespace memfix::fixity
