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
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "ragpoison/embedding.hpp"
#include "ragpoison/errors.hpp"
#include "ragpoison/llm.hpp"
#include "ragpoison/rag_target.hpp"
#include "ragpoison/retrieval.hpp"
#include "ragpoison/rng.hpp"
#include "ragpoison/text.hpp"

namespace ragpoison {

/// One attack target: make the victim answer R instead of O for question Q.
struct TargetCase {
  std::string qid;
  std::string question;
  std::string target_answer;   // R
  std::string correct_answer;  // O

  void validate() const {
    if (qid.empty() || trim(question).empty() || trim(target_answer).empty() ||
        trim(correct_answer).empty()) {
      throw ValidationError("target case \"" + qid + "\": all fields must be non-empty");
    }
    if (normalize_for_match(target_answer) == normalize_for_match(correct_answer)) {
      throw ValidationError("target case \"" + qid +
                            "\": target answer equals correct answer after normalization");
    }
  }
};

enum class Stage { init, rewrite };

inline std::string to_string(Stage s) { return s == Stage::init ? "init" : "rewrite"; }

struct LineageStep {
  Stage stage = Stage::init;
  std::string model_id;
  std::string template_id;
};

struct AdversarialCandidate {
  std::string text;
  std::string case_id;
  std::vector<LineageStep> lineage;
  std::optional<EvaluatorScore> evaluator;
  bool accepted = false;
};

/// One generation or rewrite attempt, persisted so gate decisions can be
/// replayed offline.
struct AttemptRecord {
  std::string qid;
  Stage stage = Stage::init;
  std::string model_id;
  std::string template_id;
  std::string input_text;   // empty for init attempts
  std::string output_text;
  std::optional<EvaluatorScore> evaluator;
  std::optional<double> tau_value;
  bool sim_ok = false;
  bool gen_ok = false;
  bool accepted = false;
  std::string error;
};

using AttackTrace = std::vector<AttemptRecord>;

/// Asks the checker to answer Q with the candidate as sole context; true
/// iff the answer contains R and not O (case-insensitive, whitespace-
/// normalized substrings).
inline bool check_generation_condition(const GeneratorSpec& checker, const TargetCase& tc,
                                       const std::string& candidate_text) {
  if (trim(candidate_text).empty()) {
    throw ValidationError("check_generation_condition: candidate text must be non-empty");
  }
  Document doc;
  doc.doc_id = "candidate";
  doc.text = candidate_text;
  const auto [system, user] = assemble_context({doc}, tc.question);
  const std::string answer = chat(checker, system, user);
  return contains_normalized(answer, tc.target_answer) &&
         !contains_normalized(answer, tc.correct_answer);
}

/// Draws (generator, template) pairs with the seeded RNG, renders the
/// corpus-writer prompt with the case and word budget, and keeps each
/// generated text iff the generation condition holds against
/// `condition_checker`. Failed attempts are dropped, not fatal; the result
/// may be empty.
inline std::vector<AdversarialCandidate> initialize_malicious(
    const TargetCase& tc, const std::vector<GeneratorSpec>& generators,
    const std::vector<PromptTemplate>& init_templates, int n, std::uint64_t seed,
    const GeneratorSpec& condition_checker, int word_budget = 30, AttackTrace* trace = nullptr) {
  tc.validate();
  if (generators.empty()) throw ValidationError("initialize_malicious: no generators");
  if (init_templates.empty()) throw ValidationError("initialize_malicious: no templates");
  if (n < 1) throw ValidationError("initialize_malicious: n must be >= 1");

  SeededRng rng(seed);
  std::vector<AdversarialCandidate> accepted;
  for (int i = 0; i < n; ++i) {
    const GeneratorSpec& generator = generators[rng.uniform_index(generators.size())];
    const PromptTemplate& tpl = init_templates[rng.uniform_index(init_templates.size())];

    AttemptRecord rec;
    rec.qid = tc.qid;
    rec.stage = Stage::init;
    rec.model_id = generator.model_id;
    rec.template_id = tpl.template_id;
    try {
      const std::string prompt = render_prompt(tpl, {{"Q", tc.question},
                                                     {"R", tc.target_answer},
                                                     {"V", std::to_string(word_budget)}});
      const std::string text = trim(chat(generator, "", prompt));
      rec.output_text = text;
      if (!text.empty()) {
        rec.gen_ok = check_generation_condition(condition_checker, tc, text);
        rec.sim_ok = true;  // no similarity gate at this stage
        rec.accepted = rec.gen_ok;
      }
      if (rec.accepted) {
        AdversarialCandidate cand;
        cand.text = text;
        cand.case_id = tc.qid;
        cand.lineage = {{Stage::init, generator.model_id, tpl.template_id}};
        cand.accepted = true;
        accepted.push_back(std::move(cand));
      }
    } catch (const TransportError& e) {
      rec.error = e.what();
    }
    if (trace) trace->push_back(std::move(rec));
  }
  return accepted;
}

/// Renders the three-block rewrite prompt for one guidance variant and
/// returns the generator's rewritten text verbatim.
inline std::string rewrite_candidate(const AdversarialCandidate& candidate, const TargetCase& tc,
                                     const GeneratorSpec& generator,
                                     const PromptTemplate& ag_template,
                                     const TemplateRegistry& registry = TemplateRegistry::builtin()) {
  if (trim(candidate.text).empty()) {
    throw ValidationError("rewrite_candidate: candidate text must be non-empty");
  }
  const std::string prompt = compose_rewrite_prompt(registry, ag_template, candidate.text,
                                                    tc.question, tc.target_answer);
  return chat(generator, "", prompt);
}

/// How accepted rewrites gate on similarity.
enum class GatePolicy {
  tau_threshold,       // aggregate > tau.value
  strict_lower_bound,  // aggregate >= sim(query ++ " " ++ input, query)
};

struct OptimizeOptions {
  bool chain = true;  // feed each accepted rewrite back as the next input
  GatePolicy policy = GatePolicy::tau_threshold;
};

/// Iterative cross-model refinement: for each initial candidate, T rounds
/// of (draw model, draw guidance template, rewrite, score, verify). A
/// rewrite enters the optimized set iff its evaluator aggregate clears the
/// similarity gate and the generation condition holds against
/// `target_llm`. Transport failures consume the round and are recorded.
/// Byte-identical outputs are deduplicated, keeping first occurrence.
inline std::vector<AdversarialCandidate> optimize_malicious(
    const std::vector<AdversarialCandidate>& p_init, const TargetCase& tc,
    const std::vector<GeneratorSpec>& generators, const std::vector<PromptTemplate>& ag_templates,
    const std::vector<EmbedderSpec>& specs, const GeneratorSpec& target_llm, int T, const Tau& tau,
    std::uint64_t seed, const OptimizeOptions& options = {}, AttackTrace* trace = nullptr,
    const TemplateRegistry& registry = TemplateRegistry::builtin()) {
  tc.validate();
  if (T < 1) throw ValidationError("optimize_malicious: T must be >= 1");
  if (generators.empty()) throw ValidationError("optimize_malicious: no generators");
  if (ag_templates.empty()) throw ValidationError("optimize_malicious: no templates");
  validate_weights(specs);

  SeededRng rng(seed);
  std::vector<AdversarialCandidate> p_opt;
  std::unordered_set<std::string> seen_texts;

  for (const auto& init_candidate : p_init) {
    AdversarialCandidate current = init_candidate;
    for (int iter = 0; iter < T; ++iter) {
      const GeneratorSpec& generator = generators[rng.uniform_index(generators.size())];
      const PromptTemplate& tpl = ag_templates[rng.uniform_index(ag_templates.size())];

      AttemptRecord rec;
      rec.qid = tc.qid;
      rec.stage = Stage::rewrite;
      rec.model_id = generator.model_id;
      rec.template_id = tpl.template_id;
      rec.input_text = current.text;
      rec.tau_value = tau.value;
      try {
        const std::string rewritten = trim(rewrite_candidate(current, tc, generator, tpl, registry));
        rec.output_text = rewritten;
        if (!rewritten.empty()) {
          const EvaluatorScore score = evaluator_score(rewritten, tc.question, specs);
          rec.evaluator = score;
          if (options.policy == GatePolicy::tau_threshold) {
            rec.sim_ok = score.aggregate > tau.value;
          } else {
            const double bound =
                evaluator_score(tc.question + " " + current.text, tc.question, specs).aggregate;
            rec.sim_ok = score.aggregate >= bound;
          }
          rec.gen_ok = check_generation_condition(target_llm, tc, rewritten);
          rec.accepted = rec.sim_ok && rec.gen_ok;
          if (rec.accepted) {
            AdversarialCandidate next;
            next.text = rewritten;
            next.case_id = tc.qid;
            next.lineage = current.lineage;
            next.lineage.push_back({Stage::rewrite, generator.model_id, tpl.template_id});
            next.evaluator = score;
            next.accepted = true;
            if (seen_texts.insert(rewritten).second) p_opt.push_back(next);
            if (options.chain) current = std::move(next);
          }
        }
      } catch (const TransportError& e) {
        rec.error = e.what();
      }
      if (trace) trace->push_back(std::move(rec));
    }
  }
  return p_opt;
}

struct InjectionSelection {
  std::vector<std::string> texts;
  bool shortfall = false;  // fewer than N candidates were available
};

/// Picks the N candidates with the highest evaluator aggregate; ties keep
/// the earlier candidate. Anything short of N is returned with the
/// shortfall flag set so the run can proceed and record the failure.
inline InjectionSelection select_injection_set(const std::vector<AdversarialCandidate>& p_opt,
                                               const TargetCase& tc,
                                               const std::vector<EmbedderSpec>& specs, int N) {
  if (N < 1) throw ValidationError("select_injection_set: N must be >= 1");
  InjectionSelection sel;
  if (p_opt.empty()) {
    sel.shortfall = true;
    return sel;
  }
  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(p_opt.size());
  for (std::size_t i = 0; i < p_opt.size(); ++i) {
    const double aggregate = p_opt[i].evaluator
                                 ? p_opt[i].evaluator->aggregate
                                 : evaluator_score(p_opt[i].text, tc.question, specs).aggregate;
    ranked.emplace_back(aggregate, i);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(N), ranked.size());
  for (std::size_t i = 0; i < take; ++i) sel.texts.push_back(p_opt[ranked[i].second].text);
  sel.shortfall = ranked.size() < static_cast<std::size_t>(N);
  return sel;
}

}  // namespace ragpoison
