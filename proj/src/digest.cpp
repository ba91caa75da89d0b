#include "memfix/digest.hpp"

#include <openssl/evp.h>
#include <openssl/ripemd.h>

#include <memory>
#include <stdexcept>

namespace memfix {

namespace {

Bytes evp_digest(const EVP_MD* md, const void* data, std::size_t size) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                                &EVP_MD_CTX_free);
    Bytes out(EVP_MAX_MD_SIZE);
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), md, nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data, size) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1)
        throw std::runtime_error("digest computation failed");
    out.resize(len);
    return out;
}

}  // namespace

std::string_view algorithm_name(HashAlgorithm a) {
    return a == HashAlgorithm::Sha256 ? "sha256" : "md5";
}

std::optional<HashAlgorithm> parse_algorithm(std::string_view name) {
    if (name == "sha256" || name == "SHA-256" || name == "sha-256") return HashAlgorithm::Sha256;
    if (name == "md5" || name == "MD5") return HashAlgorithm::Md5;
    return std::nullopt;
}

std::size_t hex_length(HashAlgorithm a) { return a == HashAlgorithm::Sha256 ? 64 : 32; }

Bytes sha256(std::string_view data) { return evp_digest(EVP_sha256(), data.data(), data.size()); }
Bytes sha256(const Bytes& data) { return evp_digest(EVP_sha256(), data.data(), data.size()); }
Bytes md5(std::string_view data) { return evp_digest(EVP_md5(), data.data(), data.size()); }

Bytes ripemd160(const Bytes& data) {
    // The 3.0 default provider has no RIPEMD-160; the low-level routine is still shipped.
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wdeprecated-declarations"
    Bytes out(RIPEMD160_DIGEST_LENGTH);
    RIPEMD160(data.data(), data.size(), out.data());
#pragma GCC diagnostic pop
    return out;
}

std::string to_hex(const Bytes& bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0x0f]);
    }
    return out;
}

std::optional<Bytes> from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) return std::nullopt;
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        int hi = nibble(hex[i]), lo = nibble(hex[i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
    }
    return out;
}

bool is_lower_hex(std::string_view s) {
    for (char c : s)
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
    return !s.empty();
}

std::string hex_digest(HashAlgorithm a, std::string_view data) {
    return to_hex(a == HashAlgorithm::Sha256 ? sha256(data) : md5(data));
}

}  // namespace memfix
