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

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ragpoison/corpus.hpp"
#include "ragpoison/embedding.hpp"
#include "ragpoison/errors.hpp"
#include "ragpoison/llm.hpp"
#include "ragpoison/metrics.hpp"

namespace ragpoison {

enum class DefenseId { paraphrase, perplexity_filter, duplicate_filter, knowledge_expansion };

inline std::string to_string(DefenseId id) {
  switch (id) {
    case DefenseId::paraphrase: return "paraphrase";
    case DefenseId::perplexity_filter: return "perplexity_filter";
    case DefenseId::duplicate_filter: return "duplicate_filter";
    case DefenseId::knowledge_expansion: return "knowledge_expansion";
  }
  throw ConfigError("unknown defense id");
}

inline DefenseId defense_id_from_string(std::string_view s) {
  if (s == "paraphrase") return DefenseId::paraphrase;
  if (s == "perplexity_filter") return DefenseId::perplexity_filter;
  if (s == "duplicate_filter") return DefenseId::duplicate_filter;
  if (s == "knowledge_expansion") return DefenseId::knowledge_expansion;
  throw ConfigError("unknown defense id: " + std::string(s));
}

/// One configured defense stage. Only the parameters of the chosen
/// defense_id are consulted; validate() checks the required one is set.
struct DefenseConfig {
  DefenseId defense_id = DefenseId::duplicate_filter;
  std::optional<double> ppl_threshold;             // perplexity_filter
  double dup_theta = 0.9;                          // duplicate_filter
  std::optional<int> expanded_k;                   // knowledge_expansion
  std::optional<GeneratorSpec> paraphrase_generator;  // paraphrase

  void validate() const {
    switch (defense_id) {
      case DefenseId::paraphrase:
        if (!paraphrase_generator) {
          throw ConfigError("paraphrase defense requires a paraphrase_generator");
        }
        return;
      case DefenseId::perplexity_filter:
        if (!ppl_threshold || *ppl_threshold <= 0.0) {
          throw ConfigError("perplexity_filter defense requires ppl_threshold > 0");
        }
        return;
      case DefenseId::duplicate_filter:
        if (!(dup_theta > 0.0 && dup_theta <= 1.0)) {
          throw ConfigError("duplicate_filter defense requires dup_theta in (0, 1]");
        }
        return;
      case DefenseId::knowledge_expansion:
        if (!expanded_k || *expanded_k < 1) {
          throw ConfigError("knowledge_expansion defense requires expanded_k >= 1");
        }
        return;
    }
    throw ConfigError("unknown defense id");
  }
};

/// Ids removed or flagged by a filter stage, for the answer trace.
struct FilterTrace {
  std::vector<std::string> removed_ids;
  std::vector<std::string> flagged_ids;  // scorer failed; doc kept (fail-open)
};

/// Rewrites the user question with the built-in paraphrase prompt.
inline std::string paraphrase_query(const std::string& question, const GeneratorSpec& generator) {
  if (trim(question).empty()) throw ValidationError("paraphrase_query: question must be non-empty");
  static const TemplateRegistry registry = TemplateRegistry::builtin();
  const std::string prompt =
      render_prompt(registry.get("paraphrase"), {{"question", question}});
  const std::string out = trim(chat(generator, "", prompt));
  if (out.empty()) throw DefenseError("paraphrase_query: generator returned an empty paraphrase");
  return out;
}

/// Keeps documents whose perplexity is <= threshold, order preserved.
/// A scorer failure keeps the document and flags it rather than blocking
/// the evaluation.
inline std::vector<Document> perplexity_filter(const std::vector<Document>& docs,
                                               const PerplexityScorer& scorer, double threshold,
                                               FilterTrace* trace = nullptr) {
  if (threshold <= 0.0) throw ValidationError("perplexity_filter: threshold must be > 0");
  std::vector<Document> kept;
  kept.reserve(docs.size());
  for (const auto& d : docs) {
    bool keep = true;
    try {
      keep = scorer.perplexity(d.text) <= threshold;
    } catch (const Error&) {
      keep = true;
      if (trace) trace->flagged_ids.push_back(d.doc_id);
    }
    if (keep) {
      kept.push_back(d);
    } else if (trace) {
      trace->removed_ids.push_back(d.doc_id);
    }
  }
  return kept;
}

/// Greedy scan in ranked order: a document is dropped iff its cosine to
/// any already-kept document is >= theta, so the earliest-ranked
/// representative of each near-duplicate cluster survives.
inline std::vector<Document> duplicate_filter(const std::vector<Document>& docs,
                                              const EmbedderSpec& spec, double theta,
                                              FilterTrace* trace = nullptr) {
  if (!(theta > 0.0 && theta <= 1.0)) {
    throw ValidationError("duplicate_filter: theta must be in (0, 1]");
  }
  if (docs.empty()) return {};
  std::vector<std::string> texts;
  texts.reserve(docs.size());
  for (const auto& d : docs) texts.push_back(d.text);
  const std::vector<EmbeddingVector> vectors = embed_batch(spec, texts);

  std::vector<Document> kept;
  std::vector<std::size_t> kept_idx;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    bool duplicate = false;
    for (std::size_t j : kept_idx) {
      if (cosine_similarity(vectors[i], vectors[j]) >= theta) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) {
      if (trace) trace->removed_ids.push_back(docs[i].doc_id);
    } else {
      kept.push_back(docs[i]);
      kept_idx.push_back(i);
    }
  }
  return kept;
}

/// Knowledge expansion: the defender retrieves more context to dilute any
/// single poisoned document. Returns the k to hand to retrieval.
inline int expand_k(int base_k, int expanded_k) {
  if (base_k < 1) throw ValidationError("expand_k: base_k must be >= 1");
  if (expanded_k < base_k) {
    throw ConfigError("expand_k: expanded_k (" + std::to_string(expanded_k) +
                      ") must be >= base_k (" + std::to_string(base_k) + ")");
  }
  return expanded_k;
}

}  // namespace ragpoison
