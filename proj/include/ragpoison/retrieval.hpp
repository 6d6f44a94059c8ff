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

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "ragpoison/corpus.hpp"
#include "ragpoison/embedding.hpp"
#include "ragpoison/errors.hpp"
#include "ragpoison/rng.hpp"

namespace ragpoison {

struct Hit {
  std::string doc_id;
  double score = 0.0;
};

struct RetrievalResult {
  std::string query;
  int k = 0;
  std::vector<Hit> hits;  // score descending, ties by doc_id ascending
  std::string retriever_id;
};

/// Exact top-k scan: ranks every document by dot product between the query
/// and document embeddings. Deterministic; ties break by doc_id ascending.
inline RetrievalResult retrieve_topk(const CorpusSnapshot& snapshot, const std::string& query,
                                     int k, const EmbedderSpec& spec) {
  if (k < 1) throw ValidationError("retrieve_topk: k must be >= 1");
  RetrievalResult result;
  result.query = query;
  result.k = k;
  result.retriever_id = spec.retriever_id;
  if (snapshot.size() == 0) return result;

  const EmbeddingVector qv = embed(spec, query);
  std::vector<std::string> texts;
  texts.reserve(snapshot.size());
  for (const auto& d : snapshot.documents()) texts.push_back(d.text);
  const std::vector<EmbeddingVector> dvs = embed_batch(spec, texts);

  result.hits.reserve(snapshot.size());
  for (std::size_t i = 0; i < dvs.size(); ++i) {
    result.hits.push_back({snapshot.documents()[i].doc_id, dot_similarity(qv, dvs[i])});
  }
  std::sort(result.hits.begin(), result.hits.end(), [](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), result.hits.size());
  result.hits.resize(keep);
  return result;
}

/// Weighted multi-retriever cosine score for one candidate against its
/// query. The aggregate is the gate value used during optimization.
struct EvaluatorScore {
  std::string candidate_text;
  std::string query;
  std::map<std::string, double> per_retriever;
  double aggregate = 0.0;
};

inline EvaluatorScore evaluator_score(const std::string& candidate, const std::string& query,
                                      const std::vector<EmbedderSpec>& specs) {
  validate_weights(specs);
  EvaluatorScore score;
  score.candidate_text = candidate;
  score.query = query;
  for (const auto& spec : specs) {
    const double cos = cosine_similarity(embed(spec, candidate), embed(spec, query));
    score.per_retriever[spec.retriever_id] = cos;
    score.aggregate += spec.weight * cos;
  }
  return score;
}

/// Per-case acceptance threshold: similarity of one sampled candidate
/// (query ++ " " ++ candidate, question first) against the query, minus the
/// population variance of that similarity across all candidates.
struct Tau {
  std::string query;
  double value = 0.0;
  std::string sample_id;
  double variance = 0.0;
};

inline Tau compute_tau(const std::string& query, const std::vector<std::string>& candidates,
                       const std::vector<EmbedderSpec>& specs, std::uint64_t seed) {
  if (candidates.empty()) throw ValidationError("compute_tau: candidate list must be non-empty");
  validate_weights(specs);

  std::vector<double> sims;
  sims.reserve(candidates.size());
  for (const auto& c : candidates) {
    sims.push_back(evaluator_score(query + " " + c, query, specs).aggregate);
  }
  double mean = 0.0;
  for (double s : sims) mean += s;
  mean /= static_cast<double>(sims.size());
  double variance = 0.0;  // population variance: well-defined for n = 1
  for (double s : sims) variance += (s - mean) * (s - mean);
  variance /= static_cast<double>(sims.size());

  SeededRng rng(seed);
  const std::size_t pick = rng.uniform_index(candidates.size());

  Tau tau;
  tau.query = query;
  tau.sample_id = "candidate-" + std::to_string(pick);
  tau.variance = variance;
  tau.value = sims[pick] - variance;
  return tau;
}

}  // namespace ragpoison
