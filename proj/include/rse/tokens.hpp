#pragma once

#include <functional>
#include <string_view>

namespace rse::tokens {

// Approximate tokenizer used for budgeting and for backends that do not
// report usage. Rule: every maximal run of word characters (alphanumerics
// plus any non-ASCII byte) counts as one token, and every other
// non-whitespace character counts as one token on its own. It deliberately
// over-counts relative to BPE vocabularies; budget checks stay conservative.
int count(std::string_view text);

// Longest prefix of `text` containing at most `limit` tokens under the same
// rule. Returns all of `text` when it already fits; an empty view when
// limit <= 0.
std::string_view truncate(std::string_view text, int limit);

// Pluggable counter; components take this when an exact tokenizer may be
// substituted later.
using Counter = std::function<int(std::string_view)>;

inline Counter approximate_counter() {
  return [](std::string_view s) { return count(s); };
}

}  // namespace rse::tokens
