// Copyright 2026 the ragpoison authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "ragpoison/errors.hpp"
#include "ragpoison/http.hpp"
#include "ragpoison/rng.hpp"
#include "ragpoison/text.hpp"

namespace ragpoison {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
};

enum class EmbedBackend { mock_hash, http_endpoint };

/// One retriever in the evaluator set. `weight` is its share in the
/// weighted-average aggregate; weights across a set must sum to 1.
struct EmbedderSpec {
  std::string retriever_id;
  EmbedBackend backend = EmbedBackend::mock_hash;
  std::string endpoint;  // http_endpoint only
  int dim = 256;
  double weight = 1.0;
  HttpOptions http;
};

inline double dot_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw ContractError("dot_similarity: dimension mismatch (" + std::to_string(a.dim()) +
                        " vs " + std::to_string(b.dim()) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) acc += a.values[i] * b.values[i];
  return acc;
}

inline double l2_norm(const EmbeddingVector& v) {
  double acc = 0.0;
  for (double x : v.values) acc += x * x;
  return std::sqrt(acc);
}

inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw ContractError("cosine_similarity: dimension mismatch (" + std::to_string(a.dim()) +
                        " vs " + std::to_string(b.dim()) + ")");
  }
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw UndefinedMetricError("cosine_similarity undefined for a zero vector");
  }
  return dot_similarity(a, b) / (na * nb);
}

namespace detail {

// Token direction = unit-norm gaussian vector drawn from a splitmix64
// stream seeded by FNV-1a over (retriever_id, 0x1f, token). The hash is
// fixed here, never process-randomized, so fixtures reproduce across runs
// and platforms. Directions are cached process-wide.
inline std::shared_ptr<const std::vector<double>> token_direction(
    const std::string& retriever_id, const std::string& token, int dim) {
  std::uint64_t seed = fnv1a_combine(fnv1a(retriever_id), token);
  seed = fnv1a_combine(seed, std::to_string(dim));

  static std::mutex mu;
  static std::unordered_map<std::uint64_t, std::shared_ptr<const std::vector<double>>> cache;
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(seed); it != cache.end()) return it->second;
  }

  SplitMix64 stream(seed);
  auto dir = std::make_shared<std::vector<double>>(static_cast<std::size_t>(dim));
  double norm_sq = 0.0;
  for (auto& x : *dir) {
    x = stream.next_gaussian();
    norm_sq += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (auto& x : *dir) x *= inv;

  std::lock_guard lock(mu);
  return cache.emplace(seed, std::move(dir)).first->second;
}

inline EmbeddingVector mock_embed(const EmbedderSpec& spec, const std::string& text) {
  std::vector<std::string> tokens = tokenize(text);
  if (tokens.empty()) tokens.push_back("");  // keep the unit-norm guarantee

  EmbeddingVector v;
  v.values.assign(static_cast<std::size_t>(spec.dim), 0.0);
  for (const auto& tok : tokens) {
    const auto dir = token_direction(spec.retriever_id, tok, spec.dim);
    for (std::size_t i = 0; i < v.values.size(); ++i) v.values[i] += (*dir)[i];
  }
  const double norm = l2_norm(v);
  const double inv = 1.0 / norm;  // norm > 0: distinct token sums never cancel exactly
  for (auto& x : v.values) x *= inv;
  return v;
}

inline std::vector<EmbeddingVector> http_embed_batch(const EmbedderSpec& spec,
                                                     const std::vector<std::string>& texts) {
  nlohmann::json body{{"model", spec.retriever_id}, {"input", texts}};
  nlohmann::json res = post_json(spec.endpoint, body, spec.http);
  if (!res.contains("data") || !res["data"].is_array() || res["data"].size() != texts.size()) {
    throw ContractError("embeddings endpoint returned " +
                        std::to_string(res.value("data", nlohmann::json::array()).size()) +
                        " vectors for " + std::to_string(texts.size()) + " inputs");
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& item : res["data"]) {
    EmbeddingVector v;
    v.values = item.at("embedding").get<std::vector<double>>();
    if (v.dim() != static_cast<std::size_t>(spec.dim)) {
      throw ContractError("embeddings endpoint returned dim " + std::to_string(v.dim()) +
                          ", spec says " + std::to_string(spec.dim));
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace detail

/// Embeds a batch of texts, preserving input order.
inline std::vector<EmbeddingVector> embed_batch(const EmbedderSpec& spec,
                                                const std::vector<std::string>& texts) {
  for (const auto& t : texts) {
    if (t.empty()) throw ValidationError("embed: text must be non-empty");
  }
  if (spec.backend == EmbedBackend::mock_hash) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(detail::mock_embed(spec, t));
    return out;
  }
  return detail::http_embed_batch(spec, texts);
}

inline EmbeddingVector embed(const EmbedderSpec& spec, const std::string& text) {
  return embed_batch(spec, {text}).front();
}

/// Validates that evaluator weights sum to 1 within 1e-9.
inline void validate_weights(const std::vector<EmbedderSpec>& specs) {
  if (specs.empty()) throw ConfigError("embedder set must be non-empty");
  double sum = 0.0;
  for (const auto& s : specs) sum += s.weight;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("embedder weights must sum to 1, got " + std::to_string(sum));
  }
}

}  // namespace ragpoison
