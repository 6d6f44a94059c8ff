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

#include <string>
#include <utility>
#include <vector>

#include "ragpoison/corpus.hpp"
#include "ragpoison/defenses.hpp"
#include "ragpoison/embedding.hpp"
#include "ragpoison/errors.hpp"
#include "ragpoison/llm.hpp"
#include "ragpoison/retrieval.hpp"

namespace ragpoison {

/// The simulated victim's reply for one query, with enough trace to
/// recompute metrics offline.
struct RagAnswer {
  std::string qid;
  int k = 0;           // k handed to retrieval (after any expansion)
  int requested_k = 0;  // k the caller asked for
  std::vector<std::string> retrieved_doc_ids;  // context docs, post-defense
  std::string answer;
  std::vector<std::string> defense_trace;  // applied defense ids, in order
  std::vector<Hit> prefilter_hits;         // ranked hits before filtering
  std::vector<std::string> removed_doc_ids;
  std::vector<std::string> flagged_doc_ids;
  std::string effective_question;  // post-paraphrase question
};

/// Builds the victim prompt: the fixed answering instructions as the
/// system message, and a user message holding the numbered contexts block
/// followed by the query. Document order is preserved.
inline std::pair<std::string, std::string> assemble_context(const std::vector<Document>& docs,
                                                            const std::string& question) {
  if (trim(question).empty()) {
    throw ValidationError("assemble_context: question must be non-empty");
  }
  static const TemplateRegistry registry = TemplateRegistry::builtin();
  const std::string& body = registry.get("rag-system").body;
  const auto split = body.find("\n\nContexts:");
  const std::string system = body.substr(0, split);

  std::string contexts;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (i) contexts += '\n';
    contexts += std::to_string(i + 1) + ". " + docs[i].text;
  }
  const std::string user = "Contexts: " + contexts + "\nQuery: " + question + "\nAnswer:";
  return {system, user};
}

/// Full victim pipeline: optional paraphrase, top-k retrieval (expanded k
/// when configured), optional perplexity and duplicate filters, context
/// assembly, generation. Filters only remove documents; survivors keep
/// their retrieval order. No re-retrieval happens after filtering, so the
/// context may hold fewer than k documents.
inline RagAnswer answer_query(const CorpusSnapshot& snapshot, const std::string& question, int k,
                              const EmbedderSpec& retriever, const GeneratorSpec& generator,
                              const std::vector<DefenseConfig>& defenses,
                              const PerplexityScorer* scorer = nullptr,
                              const std::string& qid = "") {
  if (k < 1) throw ValidationError("answer_query: k must be >= 1");

  const DefenseConfig* paraphrase_cfg = nullptr;
  const DefenseConfig* ppl_cfg = nullptr;
  const DefenseConfig* dup_cfg = nullptr;
  const DefenseConfig* expand_cfg = nullptr;
  for (const auto& d : defenses) {
    d.validate();
    const DefenseConfig** slot = nullptr;
    switch (d.defense_id) {
      case DefenseId::paraphrase: slot = &paraphrase_cfg; break;
      case DefenseId::perplexity_filter: slot = &ppl_cfg; break;
      case DefenseId::duplicate_filter: slot = &dup_cfg; break;
      case DefenseId::knowledge_expansion: slot = &expand_cfg; break;
    }
    if (*slot) throw ConfigError("defense configured twice: " + to_string(d.defense_id));
    *slot = &d;
  }
  if (ppl_cfg && !scorer) {
    throw ConfigError("perplexity_filter defense requires a perplexity scorer");
  }

  RagAnswer out;
  out.qid = qid;
  out.requested_k = k;

  std::string effective_question = question;
  if (paraphrase_cfg) {
    effective_question = paraphrase_query(question, *paraphrase_cfg->paraphrase_generator);
    out.defense_trace.push_back(to_string(DefenseId::paraphrase));
  }
  out.effective_question = effective_question;

  int effective_k = k;
  if (expand_cfg) {
    effective_k = expand_k(k, *expand_cfg->expanded_k);
    out.defense_trace.push_back(to_string(DefenseId::knowledge_expansion));
  }
  out.k = effective_k;

  const RetrievalResult retrieval = retrieve_topk(snapshot, effective_question, effective_k, retriever);
  out.prefilter_hits = retrieval.hits;

  std::vector<Document> context_docs;
  context_docs.reserve(retrieval.hits.size());
  for (const auto& hit : retrieval.hits) {
    for (const auto& d : snapshot.documents()) {
      if (d.doc_id == hit.doc_id) {
        context_docs.push_back(d);
        break;
      }
    }
  }

  if (ppl_cfg) {
    FilterTrace trace;
    context_docs = perplexity_filter(context_docs, *scorer, *ppl_cfg->ppl_threshold, &trace);
    out.removed_doc_ids.insert(out.removed_doc_ids.end(), trace.removed_ids.begin(),
                               trace.removed_ids.end());
    out.flagged_doc_ids.insert(out.flagged_doc_ids.end(), trace.flagged_ids.begin(),
                               trace.flagged_ids.end());
    out.defense_trace.push_back(to_string(DefenseId::perplexity_filter));
  }
  if (dup_cfg) {
    FilterTrace trace;
    context_docs = duplicate_filter(context_docs, retriever, dup_cfg->dup_theta, &trace);
    out.removed_doc_ids.insert(out.removed_doc_ids.end(), trace.removed_ids.begin(),
                               trace.removed_ids.end());
    out.defense_trace.push_back(to_string(DefenseId::duplicate_filter));
  }

  for (const auto& d : context_docs) out.retrieved_doc_ids.push_back(d.doc_id);

  const auto [system, user] = assemble_context(context_docs, effective_question);
  try {
    out.answer = chat(generator, system, user);
  } catch (const TransportError& e) {
    throw TransportError("answer_query qid=\"" + qid + "\": " + e.what());
  }
  return out;
}

}  // namespace ragpoison
