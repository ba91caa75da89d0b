#pragma once

// Error-recovering HTML tokenizer and CSS url() scanner. Not a tree builder: it yields
// tags, comments and raw-text blocks with byte offsets into the source, which is all
// resource discovery and markup stripping need.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace memfix::extract::detail {

struct Token {
    enum class Kind { StartTag, EndTag, Comment, RawText };

    Kind kind;
    std::string name;  // lowercase tag name (empty for comments and raw text)
    std::vector<std::pair<std::string, std::string>> attributes;  // lowercase names, decoded values
    std::size_t begin = 0;  // offset of '<' (or of the first raw-text byte)
    std::size_t end = 0;    // one past '>' (or past the last raw-text byte)
    bool self_closing = false;

    std::optional<std::string> attribute(std::string_view attr) const;
    std::string_view text(std::string_view source) const { return source.substr(begin, end - begin); }
};

struct TokenStream {
    std::vector<Token> tokens;
    /// Regions the tokenizer could not make sense of (unterminated tags, comments, quotes).
    std::size_t skipped = 0;
};

TokenStream tokenize_html(std::string_view html);

/// Decodes the handful of character references that appear in URL attributes.
std::string decode_entities(std::string_view s);

bool is_void_element(std::string_view name);

struct CssReference {
    std::string value;
    std::size_t offset = 0;
};

struct CssScan {
    std::vector<CssReference> references;  // url(...) and @import "..." in source order
    std::size_t skipped = 0;
};

CssScan scan_css(std::string_view css);

}  // namespace memfix::extract::detail
