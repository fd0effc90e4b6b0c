#include "rse/tokens.hpp"

#include <cctype>

namespace rse::tokens {

namespace {

bool is_word(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }
bool is_space(unsigned char c) { return std::isspace(c) != 0; }

// Shared scanner: returns the byte offset just past token number `limit`
// (or text.size() when fewer tokens exist) and reports the token count.
std::size_t scan(std::string_view text, int limit, int& found) {
  found = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (found == limit) return i;
    ++found;
    if (is_word(c)) {
      while (i < text.size() && is_word(static_cast<unsigned char>(text[i]))) ++i;
    } else {
      ++i;
    }
  }
  return text.size();
}

}  // namespace

int count(std::string_view text) {
  int n = 0;
  scan(text, -1, n);  // limit -1 never triggers the early stop
  return n;
}

std::string_view truncate(std::string_view text, int limit) {
  if (limit <= 0) return text.substr(0, 0);
  int n = 0;
  std::size_t end = scan(text, limit, n);
  return text.substr(0, end);
}

}  // namespace rse::tokens
