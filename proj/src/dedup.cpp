#include "rse/dedup.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "http_util.hpp"
#include "rse/errors.hpp"
#include "rse/rng.hpp"

namespace rse::dedup {

namespace {

using nlohmann::json;

// Offline embedding: character trigram counts pushed through a random-sign
// projection keyed by (seed, trigram). Each trigram contributes +/-1 per
// output dimension, signs taken from four 64-bit words so one key expands to
// up to 256 dimensions cheaply; higher dimensions re-key per 256-bit block.
std::vector<double> hash_embed(std::string_view text, int dimension, std::uint64_t seed) {
  std::unordered_map<std::uint64_t, int> grams;
  const std::uint64_t key = rng::derive(seed, {rng::hash_label("trigram-projection")});
  if (text.size() < 3) {
    grams[rng::combine(key, rng::hash_label(text))] = 1;
  } else {
    for (std::size_t i = 0; i + 3 <= text.size(); ++i) {
      grams[rng::combine(key, rng::hash_label(text.substr(i, 3)))] += 1;
    }
  }

  std::vector<double> v(dimension, 0.0);
  for (const auto& [gram_key, count] : grams) {
    for (int block = 0; block * 256 < dimension; ++block) {
      std::uint64_t block_key = rng::combine(gram_key, static_cast<std::uint64_t>(block));
      for (int w = 0; w * 64 < dimension - block * 256 && w < 4; ++w) {
        std::uint64_t bits = rng::combine(block_key, static_cast<std::uint64_t>(w));
        int base = block * 256 + w * 64;
        int top = std::min(dimension, base + 64);
        for (int d = base; d < top; ++d) {
          v[d] += (bits >> (d - base)) & 1 ? count : -count;
        }
      }
    }
  }
  return v;
}

std::vector<double> service_embed(const Embedder& embedder, std::string_view text) {
  detail::EndpointParts parts = detail::split_endpoint(embedder.endpoint);
  json body = {{"model", embedder.model}, {"input", std::string(text)}};
  httplib::Client client(parts.base);
  client.set_connection_timeout(10, 0);
  client.set_read_timeout(120, 0);
  httplib::Result res =
      client.Post(parts.prefix + "/v1/embeddings", body.dump(), "application/json");
  if (!res) {
    throw DedupError("embedding request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    std::ostringstream msg;
    msg << "embedding request returned HTTP " << res->status << ": "
        << res->body.substr(0, 300);
    throw DedupError(msg.str());
  }
  json reply;
  try {
    reply = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw DedupError(std::string("embedding payload is not JSON: ") + e.what());
  }
  if (!reply.contains("data") || !reply["data"].is_array() || reply["data"].empty() ||
      !reply["data"][0].contains("embedding")) {
    throw DedupError("embedding payload has no data[0].embedding");
  }
  std::vector<double> v;
  for (const json& x : reply["data"][0]["embedding"]) v.push_back(x.get<double>());
  return v;
}

void normalize(std::vector<double>& v) {
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  if (norm2 < 1e-24) throw DedupError("embedding collapsed to the zero vector");
  double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
}

}  // namespace

std::vector<double> embed(const Embedder& embedder, std::string_view text) {
  if (text.empty()) throw DedupError("cannot embed empty text");
  std::vector<double> v;
  if (embedder.kind == EmbedderKind::test_hash) {
    if (embedder.dimension < 1) throw DedupError("embedding dimension must be >= 1");
    v = hash_embed(text, embedder.dimension, embedder.seed);
  } else {
    if (embedder.endpoint.empty()) throw DedupError("http embedder needs an endpoint");
    v = service_embed(embedder, text);
  }
  normalize(v);
  return v;
}

double cosine_sim(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    std::ostringstream msg;
    msg << "cosine similarity over mismatched dimensions " << u.size() << " vs "
        << v.size();
    throw DedupError(msg.str());
  }
  if (u.empty()) throw DedupError("cosine similarity of empty vectors");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu < 1e-24 || nv < 1e-24) throw DedupError("cosine similarity of a zero vector");
  return dot / std::sqrt(nu * nv);
}

std::vector<core::ExperienceItem> admit(std::span<const core::ExperienceItem> bank,
                                        std::vector<core::ExperienceItem> candidates,
                                        double tau) {
  for (const core::ExperienceItem& item : bank) {
    if (item.embedding.empty()) throw DedupError("bank item lacks an embedding");
  }
  std::vector<core::ExperienceItem> admitted;
  for (core::ExperienceItem& candidate : candidates) {
    if (candidate.embedding.empty()) throw DedupError("candidate lacks an embedding");
    double closest = -std::numeric_limits<double>::infinity();
    for (const core::ExperienceItem& item : bank) {
      closest = std::max(closest, cosine_sim(item.embedding, candidate.embedding));
    }
    for (const core::ExperienceItem& item : admitted) {
      closest = std::max(closest, cosine_sim(item.embedding, candidate.embedding));
    }
    if (closest < tau) admitted.push_back(std::move(candidate));
  }
  return admitted;
}

void embed_missing(const Embedder& embedder, std::vector<core::ExperienceItem>& items) {
  for (core::ExperienceItem& item : items) {
    if (item.embedding.empty()) item.embedding = embed(embedder, item.text);
  }
}

}  // namespace rse::dedup
