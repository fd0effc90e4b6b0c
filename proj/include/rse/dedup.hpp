#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rse/core.hpp"

namespace rse::dedup {

enum class EmbedderKind { http_service, test_hash };

// Text embedding source. http_service posts to an embeddings endpoint;
// test_hash is a fully offline stand-in: character-trigram counts projected
// by a seeded random-sign matrix, L2-normalized. Equal texts embed equally,
// unrelated texts land nearly orthogonal.
struct Embedder {
  EmbedderKind kind = EmbedderKind::test_hash;
  std::string endpoint;
  std::string model;
  int dimension = 256;
  std::uint64_t seed = 0;
};

// Unit-norm embedding of `text`. Throws DedupError on empty text, a
// non-positive dimension, or service failure.
std::vector<double> embed(const Embedder& embedder, std::string_view text);

// Cosine similarity. Throws DedupError on dimension mismatch or when either
// vector has (near-)zero norm.
double cosine_sim(std::span<const double> u, std::span<const double> v);

// Greedy admission against a bank: candidates are visited in order, and one
// is admitted iff its similarity to every bank item and every previously
// admitted candidate stays strictly below tau. The maximum over an empty
// comparison set is -infinity, so anything enters an empty bank. All items
// must carry embeddings of one dimension.
std::vector<core::ExperienceItem> admit(std::span<const core::ExperienceItem> bank,
                                        std::vector<core::ExperienceItem> candidates,
                                        double tau);

// Fills in missing embeddings in place.
void embed_missing(const Embedder& embedder, std::vector<core::ExperienceItem>& items);

}  // namespace rse::dedup
