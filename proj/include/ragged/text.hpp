#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ragged::text {

/// Retrieval tokenizer: lowercases, splits on anything that is not a letter
/// or digit, drops empty tokens. No stemming, no stopwords. Input is UTF-8;
/// code points above ASCII count as word characters unless they fall in a
/// punctuation or space block.
std::vector<std::string> tokenize(std::string_view input);

/// Whitespace tokenizer used for context budgets.
std::vector<std::string_view> split_whitespace(std::string_view input);
std::size_t count_whitespace_tokens(std::string_view input);

/// SQuAD-style answer normalization: lowercase, strip ASCII punctuation,
/// drop the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view input);

/// Lowercases one UTF-8 string (ASCII plus the common Latin, Greek and
/// Cyrillic blocks).
std::string to_lower_utf8(std::string_view input);

std::string trim(std::string_view input);

}  // namespace ragged::text
