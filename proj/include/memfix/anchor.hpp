#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "memfix/digest.hpp"
#include "memfix/error.hpp"
#include "memfix/time.hpp"

namespace memfix::anchor {

inline constexpr std::string_view kLedgerEnv = "LEDGER_PATH";

class AnchorError : public Error {
public:
    enum class Kind { MalformedHash, LedgerUnavailable, NotFound, EmptyBatch, CorruptLedger };

    AnchorError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

std::string base58_encode(const Bytes& data);
std::optional<Bytes> base58_decode(std::string_view text);
/// payload ‖ first four bytes of SHA-256(SHA-256(payload)), Base58 encoded.
std::string base58check_encode(const Bytes& payload);
/// nullopt when the text is not Base58 or the checksum does not match.
std::optional<Bytes> base58check_decode(std::string_view text);

/// Base58Check(0x00 ‖ RIPEMD-160(SHA-256(digest bytes))). `hash` must be lowercase hex
/// of a SHA-256 or MD5 digest. Throws AnchorError(MalformedHash).
std::string derive_address(std::string_view hash);

struct LedgerEntry {
    std::uint64_t sequence = 0;
    std::string address;
    std::string hash;
    UtcTime recorded_at{};
    std::optional<std::string> batch_root;
    std::string checksum;

    friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

/// The bytes covered by an entry's checksum: the entry without its checksum member,
/// compact JSON, fields in file order.
std::string canonical_entry_bytes(const LedgerEntry& e);
/// SHA-256(previous checksum bytes ‖ canonical entry bytes); the genesis predecessor is
/// 32 zero bytes.
std::string chain_checksum(std::string_view previous_checksum, const LedgerEntry& e);

enum class Side { L, R };

struct ProofStep {
    std::string sibling;
    Side side;  // where the sibling sits when the pair is hashed

    friend bool operator==(const ProofStep&, const ProofStep&) = default;
};

using MerkleProof = std::vector<ProofStep>;

struct AnchorReceipt {
    std::string hash;
    std::string address;
    std::uint64_t sequence = 0;
    UtcTime recorded_at{};
    std::optional<std::string> batch_root;
    std::optional<MerkleProof> merkle_proof;
};

nlohmann::ordered_json receipt_to_json(const AnchorReceipt& r);
AnchorReceipt receipt_from_json(const nlohmann::ordered_json& j);

struct AuditReport {
    bool ok = true;
    std::size_t entries = 0;
    /// First offending line (1-based) and why, when !ok.
    std::optional<std::size_t> bad_line;
    std::string problem;
};

/// Append-only NDJSON transparency log. Appends from this process are serialized by a
/// mutex, across processes by flock. Readers only consume complete lines, so they always
/// see a prefix of the log.
class Ledger {
public:
    explicit Ledger(std::filesystem::path path);

    /// `flag` when given, else $LEDGER_PATH. Throws AnchorError(LedgerUnavailable).
    static std::filesystem::path resolve_path(const std::optional<std::string>& flag);

    const std::filesystem::path& path() const noexcept { return path_; }

    LedgerEntry append(std::string_view hash, const std::optional<std::string>& batch_root = std::nullopt);
    std::vector<LedgerEntry> entries() const;
    /// Entries whose address matches, in sequence order.
    std::vector<LedgerEntry> find_address(std::string_view address) const;
    AuditReport audit() const;

private:
    void refresh() const;  // parse lines appended since the last call

    std::filesystem::path path_;
    mutable std::mutex mu_;
    mutable std::vector<LedgerEntry> cache_;
    mutable std::unordered_map<std::string, std::vector<std::size_t>> by_address_;
    mutable std::uintmax_t consumed_ = 0;
};

LedgerEntry parse_entry(std::string_view line);
std::string format_entry(const LedgerEntry& e);

AnchorReceipt stamp(std::string_view hash, Ledger& ledger);
/// Receipts for every stamp of `hash`, by sequence. Throws AnchorError(NotFound).
std::vector<AnchorReceipt> verify_timestamp(std::string_view hash, const Ledger& ledger);

struct MerkleBatch {
    std::string root;
    std::vector<MerkleProof> proofs;  // parallel to the input hashes
};

/// Pure tree construction; leaves keep the caller's order, an odd node is promoted.
MerkleBatch merkle_tree(const std::vector<std::string>& hashes);
/// merkle_tree plus one ledger entry for the root. Throws AnchorError(EmptyBatch).
std::pair<MerkleBatch, std::vector<AnchorReceipt>> merkle_batch(const std::vector<std::string>& hashes,
                                                                Ledger& ledger);
bool verify_merkle_proof(std::string_view hash, const MerkleProof& proof, std::string_view root);

}  // namespace memfix::anchor
