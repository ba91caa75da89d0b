#include "memfix/anchor.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>

namespace memfix::anchor {

namespace {

using json = nlohmann::ordered_json;

constexpr std::string_view kAlphabet = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz";

Bytes require_digest(std::string_view hash) {
    if ((hash.size() != 64 && hash.size() != 32) || !is_lower_hex(hash))
        throw AnchorError(AnchorError::Kind::MalformedHash,
                          "not a lowercase hex SHA-256 or MD5 digest: '" + std::string(hash) + "'");
    return *from_hex(hash);
}

Bytes concat(const Bytes& a, const Bytes& b) {
    Bytes out(a);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

std::string errno_text() { return std::strerror(errno); }

// Holds an flock for the lifetime of the object.
class FileLock {
public:
    explicit FileLock(int fd) : fd_(fd) {
        while (::flock(fd_, LOCK_EX) != 0)
            if (errno != EINTR)
                throw AnchorError(AnchorError::Kind::LedgerUnavailable, "cannot lock ledger: " + errno_text());
    }
    ~FileLock() { ::flock(fd_, LOCK_UN); }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_;
};

class Fd {
public:
    explicit Fd(int fd) : fd_(fd) {}
    ~Fd() {
        if (fd_ >= 0) ::close(fd_);
    }
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    int get() const { return fd_; }

private:
    int fd_;
};

// The last complete line of the file, or empty when there is none. Throws when the file
// ends mid-entry, since appending after a torn write would corrupt the chain.
std::string last_line(int fd) {
    off_t size = ::lseek(fd, 0, SEEK_END);
    if (size <= 0) return {};
    std::string tail;
    off_t pos = size;
    constexpr off_t kChunk = 4096;
    while (pos > 0) {
        off_t start = std::max<off_t>(0, pos - kChunk);
        std::string chunk(static_cast<std::size_t>(pos - start), '\0');
        if (::pread(fd, chunk.data(), chunk.size(), start) != static_cast<ssize_t>(chunk.size()))
            throw AnchorError(AnchorError::Kind::LedgerUnavailable, "cannot read ledger: " + errno_text());
        tail = chunk + tail;
        pos = start;
        if (tail.back() != '\n')
            throw AnchorError(AnchorError::Kind::CorruptLedger,
                              "ledger ends with an incomplete entry; run an audit");
        auto nl = tail.rfind('\n', tail.size() - 2);
        if (nl != std::string::npos) return tail.substr(nl + 1, tail.size() - nl - 2);
    }
    return tail.substr(0, tail.size() - 1);
}

}  // namespace

// ---- Base58 -------------------------------------------------------------------------------

std::string base58_encode(const Bytes& data) {
    std::size_t zeros = 0;
    while (zeros < data.size() && data[zeros] == 0) ++zeros;
    std::vector<unsigned char> digits;  // base 58, least significant first
    for (std::size_t i = zeros; i < data.size(); ++i) {
        int carry = data[i];
        for (auto& d : digits) {
            carry += d * 256;
            d = static_cast<unsigned char>(carry % 58);
            carry /= 58;
        }
        while (carry > 0) {
            digits.push_back(static_cast<unsigned char>(carry % 58));
            carry /= 58;
        }
    }
    std::string out(zeros, '1');
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) out.push_back(kAlphabet[*it]);
    return out;
}

std::optional<Bytes> base58_decode(std::string_view text) {
    std::size_t zeros = 0;
    while (zeros < text.size() && text[zeros] == '1') ++zeros;
    std::vector<unsigned char> bytes;  // base 256, least significant first
    for (std::size_t i = zeros; i < text.size(); ++i) {
        auto pos = kAlphabet.find(text[i]);
        if (pos == std::string_view::npos) return std::nullopt;
        int carry = static_cast<int>(pos);
        for (auto& b : bytes) {
            carry += b * 58;
            b = static_cast<unsigned char>(carry & 0xFF);
            carry >>= 8;
        }
        while (carry > 0) {
            bytes.push_back(static_cast<unsigned char>(carry & 0xFF));
            carry >>= 8;
        }
    }
    Bytes out(zeros, 0);
    out.insert(out.end(), bytes.rbegin(), bytes.rend());
    return out;
}

std::string base58check_encode(const Bytes& payload) {
    Bytes check = sha256(sha256(payload));
    Bytes full = payload;
    full.insert(full.end(), check.begin(), check.begin() + 4);
    return base58_encode(full);
}

std::optional<Bytes> base58check_decode(std::string_view text) {
    auto raw = base58_decode(text);
    if (!raw || raw->size() < 4) return std::nullopt;
    Bytes payload(raw->begin(), raw->end() - 4);
    Bytes check = sha256(sha256(payload));
    if (!std::equal(check.begin(), check.begin() + 4, raw->end() - 4)) return std::nullopt;
    return payload;
}

std::string derive_address(std::string_view hash) {
    Bytes payload{0x00};
    Bytes h160 = ripemd160(sha256(require_digest(hash)));
    payload.insert(payload.end(), h160.begin(), h160.end());
    return base58check_encode(payload);
}

// ---- entries ------------------------------------------------------------------------------

std::string canonical_entry_bytes(const LedgerEntry& e) {
    json j{{"sequence", e.sequence},
           {"address", e.address},
           {"hash", e.hash},
           {"recorded_at", format_rfc3339(e.recorded_at)}};
    if (e.batch_root) j["batch_root"] = *e.batch_root;
    return j.dump();
}

std::string chain_checksum(std::string_view previous_checksum, const LedgerEntry& e) {
    Bytes prev = previous_checksum.empty() ? Bytes(32, 0) : from_hex(previous_checksum).value_or(Bytes(32, 0));
    std::string input(prev.begin(), prev.end());
    input += canonical_entry_bytes(e);
    return to_hex(sha256(input));
}

std::string format_entry(const LedgerEntry& e) {
    json j = json::parse(canonical_entry_bytes(e));
    j["checksum"] = e.checksum;
    return j.dump();
}

LedgerEntry parse_entry(std::string_view line) {
    try {
        json j = json::parse(line);
        LedgerEntry e;
        e.sequence = j.at("sequence").get<std::uint64_t>();
        e.address = j.at("address").get<std::string>();
        e.hash = j.at("hash").get<std::string>();
        auto when = parse_rfc3339(j.at("recorded_at").get<std::string>());
        if (!when) throw AnchorError(AnchorError::Kind::CorruptLedger, "bad recorded_at");
        e.recorded_at = *when;
        if (j.contains("batch_root")) e.batch_root = j["batch_root"].get<std::string>();
        e.checksum = j.at("checksum").get<std::string>();
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw AnchorError(AnchorError::Kind::CorruptLedger, std::string("unparseable ledger entry: ") + ex.what());
    }
}

// ---- ledger -------------------------------------------------------------------------------

Ledger::Ledger(std::filesystem::path path) : path_(std::move(path)) {}

std::filesystem::path Ledger::resolve_path(const std::optional<std::string>& flag) {
    if (flag && !flag->empty()) return *flag;
    if (const char* env = std::getenv(std::string(kLedgerEnv).c_str()); env && *env) return env;
    throw AnchorError(AnchorError::Kind::LedgerUnavailable,
                      "no ledger given: pass --ledger or set " + std::string(kLedgerEnv));
}

LedgerEntry Ledger::append(std::string_view hash, const std::optional<std::string>& batch_root) {
    LedgerEntry e;
    e.address = derive_address(hash);
    e.hash = std::string(hash);
    e.batch_root = batch_root;

    std::lock_guard guard(mu_);
    Fd fd(::open(path_.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644));
    if (fd.get() < 0)
        throw AnchorError(AnchorError::Kind::LedgerUnavailable,
                          "cannot open ledger " + path_.string() + ": " + errno_text());
    FileLock lock(fd.get());
    std::string last = last_line(fd.get());
    std::string previous_checksum;
    if (!last.empty()) {
        LedgerEntry prev = parse_entry(last);
        e.sequence = prev.sequence + 1;
        previous_checksum = prev.checksum;
    } else {
        e.sequence = 1;
    }
    e.recorded_at = utc_now();
    e.checksum = chain_checksum(previous_checksum, e);
    std::string line = format_entry(e) + "\n";
    std::size_t written = 0;
    while (written < line.size()) {
        ssize_t n = ::write(fd.get(), line.data() + written, line.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw AnchorError(AnchorError::Kind::LedgerUnavailable, "cannot append to ledger: " + errno_text());
        }
        written += static_cast<std::size_t>(n);
    }
    ::fsync(fd.get());
    return e;
}

void Ledger::refresh() const {
    std::error_code ec;
    auto size = std::filesystem::file_size(path_, ec);
    if (ec) {
        if (!std::filesystem::exists(path_)) {
            cache_.clear();
            by_address_.clear();
            consumed_ = 0;
            return;
        }
        throw AnchorError(AnchorError::Kind::LedgerUnavailable, "cannot stat ledger: " + ec.message());
    }
    if (size < consumed_) {  // replaced or truncated: start over
        cache_.clear();
        by_address_.clear();
        consumed_ = 0;
    }
    if (size == consumed_) return;
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw AnchorError(AnchorError::Kind::LedgerUnavailable, "cannot read ledger " + path_.string());
    in.seekg(static_cast<std::streamoff>(consumed_));
    std::string chunk(static_cast<std::size_t>(size - consumed_), '\0');
    in.read(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    chunk.resize(static_cast<std::size_t>(in.gcount()));
    std::size_t start = 0;
    for (auto nl = chunk.find('\n'); nl != std::string::npos; nl = chunk.find('\n', start)) {
        std::string_view line(chunk.data() + start, nl - start);
        if (!line.empty()) {
            cache_.push_back(parse_entry(line));
            by_address_[cache_.back().address].push_back(cache_.size() - 1);
        }
        start = nl + 1;
    }
    consumed_ += start;  // an incomplete trailing line is left for the next refresh
}

std::vector<LedgerEntry> Ledger::entries() const {
    std::lock_guard guard(mu_);
    refresh();
    return cache_;
}

std::vector<LedgerEntry> Ledger::find_address(std::string_view address) const {
    std::lock_guard guard(mu_);
    refresh();
    std::vector<LedgerEntry> out;
    if (auto it = by_address_.find(std::string(address)); it != by_address_.end())
        for (auto idx : it->second) out.push_back(cache_[idx]);
    std::sort(out.begin(), out.end(),
              [](const LedgerEntry& a, const LedgerEntry& b) { return a.sequence < b.sequence; });
    return out;
}

AuditReport Ledger::audit() const {
    AuditReport report;
    std::ifstream in(path_, std::ios::binary);
    if (!in) {
        report.ok = false;
        report.problem = "cannot read ledger " + path_.string();
        return report;
    }
    std::string line, previous;
    std::uint64_t expected = 1;
    std::size_t line_no = 0;
    auto fail = [&](std::string why) {
        report.ok = false;
        report.bad_line = line_no;
        report.problem = std::move(why);
        return report;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (in.eof()) return fail("incomplete trailing entry");
        LedgerEntry e;
        try {
            e = parse_entry(line);
        } catch (const AnchorError& ex) {
            return fail(ex.what());
        }
        if (e.sequence != expected) return fail("sequence " + std::to_string(e.sequence) + " where " +
                                                std::to_string(expected) + " was expected");
        try {
            if (derive_address(e.hash) != e.address) return fail("address does not match hash");
        } catch (const AnchorError& ex) {
            return fail(ex.what());
        }
        if (e.batch_root && (!is_lower_hex(*e.batch_root) || e.batch_root->empty()))
            return fail("malformed batch_root");
        if (chain_checksum(previous, e) != e.checksum) return fail("checksum chain broken");
        if (format_entry(e) != line) return fail("entry is not in canonical form");
        previous = e.checksum;
        ++expected;
        ++report.entries;
    }
    return report;
}

// ---- stamping -----------------------------------------------------------------------------

namespace {

AnchorReceipt receipt_for(const LedgerEntry& e) {
    return {e.hash, e.address, e.sequence, e.recorded_at, e.batch_root, std::nullopt};
}

}  // namespace

AnchorReceipt stamp(std::string_view hash, Ledger& ledger) { return receipt_for(ledger.append(hash)); }

std::vector<AnchorReceipt> verify_timestamp(std::string_view hash, const Ledger& ledger) {
    std::string address = derive_address(hash);
    std::vector<AnchorReceipt> out;
    for (const auto& e : ledger.find_address(address))
        if (e.hash == hash) out.push_back(receipt_for(e));
    if (out.empty())
        throw AnchorError(AnchorError::Kind::NotFound, "no stamp for " + std::string(hash));
    return out;
}

// ---- Merkle batches -----------------------------------------------------------------------

MerkleBatch merkle_tree(const std::vector<std::string>& hashes) {
    if (hashes.empty()) throw AnchorError(AnchorError::Kind::EmptyBatch, "cannot batch zero hashes");
    std::vector<Bytes> level;
    for (const auto& h : hashes) level.push_back(require_digest(h));
    MerkleBatch batch{{}, std::vector<MerkleProof>(hashes.size())};
    // members[i] lists the leaves under node i of the current level.
    std::vector<std::vector<std::size_t>> members(hashes.size());
    for (std::size_t i = 0; i < hashes.size(); ++i) members[i] = {i};
    while (level.size() > 1) {
        std::vector<Bytes> next;
        std::vector<std::vector<std::size_t>> next_members;
        for (std::size_t i = 0; i + 1 < level.size(); i += 2) {
            for (auto leaf : members[i]) batch.proofs[leaf].push_back({to_hex(level[i + 1]), Side::R});
            for (auto leaf : members[i + 1]) batch.proofs[leaf].push_back({to_hex(level[i]), Side::L});
            next.push_back(sha256(concat(level[i], level[i + 1])));
            auto joined = members[i];
            joined.insert(joined.end(), members[i + 1].begin(), members[i + 1].end());
            next_members.push_back(std::move(joined));
        }
        if (level.size() % 2 == 1) {
            next.push_back(level.back());
            next_members.push_back(members.back());
        }
        level = std::move(next);
        members = std::move(next_members);
    }
    batch.root = to_hex(level.front());
    return batch;
}

std::pair<MerkleBatch, std::vector<AnchorReceipt>> merkle_batch(const std::vector<std::string>& hashes,
                                                                Ledger& ledger) {
    MerkleBatch batch = merkle_tree(hashes);
    LedgerEntry root_entry = ledger.append(batch.root, batch.root);
    std::vector<AnchorReceipt> receipts;
    for (std::size_t i = 0; i < hashes.size(); ++i) {
        AnchorReceipt r = receipt_for(root_entry);
        r.hash = hashes[i];
        r.address = derive_address(hashes[i]);
        r.merkle_proof = batch.proofs[i];
        receipts.push_back(std::move(r));
    }
    return {std::move(batch), std::move(receipts)};
}

bool verify_merkle_proof(std::string_view hash, const MerkleProof& proof, std::string_view root) {
    auto current = from_hex(hash);
    if (!current || current->empty()) return false;
    for (const auto& step : proof) {
        auto sibling = from_hex(step.sibling);
        if (!sibling || sibling->empty()) return false;
        *current = step.side == Side::R ? sha256(concat(*current, *sibling)) : sha256(concat(*sibling, *current));
    }
    return to_hex(*current) == root;
}

// ---- receipts -----------------------------------------------------------------------------

json receipt_to_json(const AnchorReceipt& r) {
    json j{{"hash", r.hash},
           {"address", r.address},
           {"sequence", r.sequence},
           {"recorded_at", format_rfc3339(r.recorded_at)}};
    j["batch_root"] = r.batch_root ? json(*r.batch_root) : json(nullptr);
    if (r.merkle_proof) {
        json proof = json::array();
        for (const auto& s : *r.merkle_proof)
            proof.push_back(json{{"sibling", s.sibling}, {"side", s.side == Side::L ? "L" : "R"}});
        j["merkle_proof"] = std::move(proof);
    } else {
        j["merkle_proof"] = nullptr;
    }
    return j;
}

AnchorReceipt receipt_from_json(const json& j) {
    try {
        AnchorReceipt r;
        r.hash = j.at("hash").get<std::string>();
        r.address = j.at("address").get<std::string>();
        r.sequence = j.at("sequence").get<std::uint64_t>();
        auto when = parse_rfc3339(j.at("recorded_at").get<std::string>());
        if (!when) throw AnchorError(AnchorError::Kind::CorruptLedger, "bad recorded_at in receipt");
        r.recorded_at = *when;
        if (j.contains("batch_root") && !j["batch_root"].is_null()) r.batch_root = j["batch_root"].get<std::string>();
        if (j.contains("merkle_proof") && !j["merkle_proof"].is_null()) {
            MerkleProof proof;
            for (const auto& s : j["merkle_proof"]) {
                auto side = s.at("side").get<std::string>();
                if (side != "L" && side != "R")
                    throw AnchorError(AnchorError::Kind::CorruptLedger, "proof side must be L or R");
                proof.push_back({s.at("sibling").get<std::string>(), side == "L" ? Side::L : Side::R});
            }
            r.merkle_proof = std::move(proof);
        }
        return r;
    } catch (const nlohmann::json::exception& ex) {
        throw AnchorError(AnchorError::Kind::CorruptLedger, std::string("malformed receipt: ") + ex.what());
    }
}

}  // namespace memfix::anchor
