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
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "ragpoison/attack.hpp"
#include "ragpoison/corpus.hpp"
#include "ragpoison/defenses.hpp"
#include "ragpoison/embedding.hpp"
#include "ragpoison/errors.hpp"
#include "ragpoison/jsonl.hpp"
#include "ragpoison/llm.hpp"
#include "ragpoison/metrics.hpp"
#include "ragpoison/rag_target.hpp"
#include "ragpoison/retrieval.hpp"

namespace ragpoison {

// ---------------------------------------------------------------------------
// Config (de)serialization
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const HttpOptions& o) {
  return {{"timeout_ms", o.timeout_ms},
          {"retries", o.retries},
          {"backoff_ms", o.backoff_ms},
          {"max_in_flight", o.max_in_flight},
          {"api_key_env", o.api_key_env}};
}

inline HttpOptions http_options_from_json(const nlohmann::json& j) {
  HttpOptions o;
  o.timeout_ms = j.value("timeout_ms", o.timeout_ms);
  o.retries = j.value("retries", o.retries);
  o.backoff_ms = j.value("backoff_ms", o.backoff_ms);
  o.max_in_flight = j.value("max_in_flight", o.max_in_flight);
  o.api_key_env = j.value("api_key_env", o.api_key_env);
  return o;
}

inline nlohmann::json to_json(const EmbedderSpec& s) {
  return {{"retriever_id", s.retriever_id},
          {"backend", s.backend == EmbedBackend::mock_hash ? "mock_hash" : "http_endpoint"},
          {"endpoint", s.endpoint},
          {"dim", s.dim},
          {"weight", s.weight},
          {"http", to_json(s.http)}};
}

inline EmbedderSpec embedder_spec_from_json(const nlohmann::json& j) {
  EmbedderSpec s;
  s.retriever_id = j.at("retriever_id").get<std::string>();
  const std::string backend = j.value("backend", "mock_hash");
  if (backend == "mock_hash") {
    s.backend = EmbedBackend::mock_hash;
  } else if (backend == "http_endpoint") {
    s.backend = EmbedBackend::http_endpoint;
  } else {
    throw ConfigError("unknown embedder backend: " + backend);
  }
  s.endpoint = j.value("endpoint", std::string{});
  s.dim = j.value("dim", 256);
  s.weight = j.value("weight", 1.0);
  if (j.contains("http")) s.http = http_options_from_json(j["http"]);
  return s;
}

inline nlohmann::json to_json(const GeneratorSpec& s) {
  nlohmann::json script = nlohmann::json::array();
  for (const auto& e : s.script) {
    script.push_back({{"pattern", e.pattern}, {"response", e.response}, {"regex", e.regex}});
  }
  nlohmann::json j{{"model_id", s.model_id},
                   {"backend", to_string(s.backend)},
                   {"endpoint", s.endpoint},
                   {"temperature", s.temperature},
                   {"script", script},
                   {"http", to_json(s.http)}};
  if (s.seed) j["seed"] = *s.seed;
  return j;
}

inline GeneratorSpec generator_spec_from_json(const nlohmann::json& j,
                                              const std::filesystem::path& base_dir = {}) {
  GeneratorSpec s;
  s.model_id = j.at("model_id").get<std::string>();
  s.backend = gen_backend_from_string(j.value("backend", "mock_compliant"));
  s.endpoint = j.value("endpoint", std::string{});
  // Unset temperature defaults to 0.7 on live endpoints, 0 on mocks.
  s.temperature = j.value("temperature",
                          s.backend == GenBackend::http_endpoint ? 0.7 : 0.0);
  if (j.contains("seed") && !j["seed"].is_null()) s.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("http")) s.http = http_options_from_json(j["http"]);
  if (j.contains("script")) {
    for (const auto& e : j["script"]) {
      s.script.push_back({e.at("pattern").get<std::string>(), e.at("response").get<std::string>(),
                          e.value("regex", false)});
    }
  }
  if (j.contains("script_path")) {
    std::filesystem::path p = j["script_path"].get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    auto loaded = load_script(p.string());
    s.script.insert(s.script.end(), loaded.begin(), loaded.end());
  }
  return s;
}

inline nlohmann::json to_json(const DefenseConfig& d) {
  nlohmann::json j{{"defense_id", to_string(d.defense_id)}};
  if (d.ppl_threshold) j["ppl_threshold"] = *d.ppl_threshold;
  j["dup_theta"] = d.dup_theta;
  if (d.expanded_k) j["expanded_k"] = *d.expanded_k;
  if (d.paraphrase_generator) j["paraphrase_generator"] = to_json(*d.paraphrase_generator);
  return j;
}

inline DefenseConfig defense_config_from_json(const nlohmann::json& j,
                                              const std::filesystem::path& base_dir = {}) {
  DefenseConfig d;
  d.defense_id = defense_id_from_string(j.at("defense_id").get<std::string>());
  if (j.contains("ppl_threshold")) d.ppl_threshold = j["ppl_threshold"].get<double>();
  d.dup_theta = j.value("dup_theta", 0.9);
  if (j.contains("expanded_k")) d.expanded_k = j["expanded_k"].get<int>();
  if (j.contains("paraphrase_generator")) {
    d.paraphrase_generator = generator_spec_from_json(j["paraphrase_generator"], base_dir);
  }
  return d;
}

/// Everything one experiment needs. The first retriever doubles as the
/// simulated victim's retriever; the whole list forms the evaluator.
struct RunConfig {
  std::string dataset = "dataset";
  std::string corpus_path;
  std::string targets_path;
  std::vector<EmbedderSpec> retrievers;
  std::vector<GeneratorSpec> attack_generators;
  GeneratorSpec target_generator;
  int n_init = 5;
  int n_inject = 5;
  int trials = 5;  // optimization rounds per initial candidate
  std::vector<int> k_values = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<DefenseConfig> defenses;
  bool combined_defense = false;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  bool chain = true;
  int word_budget = 30;
  int ngram_order = 3;
  double ngram_smoothing_k = 0.5;
  double repetition_theta = 0.9;

  void validate() const {
    if (corpus_path.empty()) throw ConfigError("corpus_path is required");
    if (targets_path.empty()) throw ConfigError("targets_path is required");
    validate_weights(retrievers);
    if (attack_generators.empty()) throw ConfigError("attack_generators must be non-empty");
    if (n_init < 1 || n_inject < 1 || trials < 1) {
      throw ConfigError("n_init, N_inject and T must all be >= 1");
    }
    if (k_values.empty()) throw ConfigError("k_values must be non-empty");
    int prev = 0;
    for (int k : k_values) {
      if (k <= prev) throw ConfigError("k_values must be strictly increasing positives");
      prev = k;
    }
    std::set<std::string> ids;
    for (const auto& d : defenses) {
      d.validate();
      if (!ids.insert(to_string(d.defense_id)).second) {
        throw ConfigError("defense listed twice: " + to_string(d.defense_id));
      }
    }
    if (ngram_order < 1 || ngram_smoothing_k <= 0.0) {
      throw ConfigError("ngram_order must be >= 1 and ngram_smoothing_k > 0");
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json defs = nlohmann::json::array();
    for (const auto& d : defenses) defs.push_back(ragpoison::to_json(d));
    nlohmann::json gens = nlohmann::json::array();
    for (const auto& g : attack_generators) gens.push_back(ragpoison::to_json(g));
    nlohmann::json rets = nlohmann::json::array();
    for (const auto& r : retrievers) rets.push_back(ragpoison::to_json(r));
    return {{"dataset", dataset},
            {"corpus_path", corpus_path},
            {"targets_path", targets_path},
            {"retrievers", rets},
            {"attack_generators", gens},
            {"target_generator", ragpoison::to_json(target_generator)},
            {"n_init", n_init},
            {"N_inject", n_inject},
            {"T", trials},
            {"k_values", k_values},
            {"defenses", defs},
            {"combined_defense", combined_defense},
            {"seed", seed},
            {"output_dir", output_dir},
            {"chain", chain},
            {"word_budget", word_budget},
            {"ngram", {{"order", ngram_order}, {"smoothing_k", ngram_smoothing_k}}},
            {"repetition_theta", repetition_theta}};
  }

  static RunConfig from_json(const nlohmann::json& j,
                             const std::filesystem::path& base_dir = {}) {
    RunConfig c;
    auto resolve = [&base_dir](std::string p) {
      std::filesystem::path fp = p;
      if (!p.empty() && fp.is_relative() && !base_dir.empty()) fp = base_dir / fp;
      return fp.string();
    };
    c.dataset = j.value("dataset", c.dataset);
    c.corpus_path = resolve(j.value("corpus_path", std::string{}));
    c.targets_path = resolve(j.value("targets_path", std::string{}));
    for (const auto& r : j.value("retrievers", nlohmann::json::array())) {
      c.retrievers.push_back(embedder_spec_from_json(r));
    }
    for (const auto& g : j.value("attack_generators", nlohmann::json::array())) {
      c.attack_generators.push_back(generator_spec_from_json(g, base_dir));
    }
    if (j.contains("target_generator")) {
      c.target_generator = generator_spec_from_json(j["target_generator"], base_dir);
    }
    c.n_init = j.value("n_init", c.n_init);
    c.n_inject = j.value("N_inject", c.n_inject);
    c.trials = j.value("T", c.trials);
    if (j.contains("k_values")) c.k_values = j["k_values"].get<std::vector<int>>();
    for (const auto& d : j.value("defenses", nlohmann::json::array())) {
      c.defenses.push_back(defense_config_from_json(d, base_dir));
    }
    c.combined_defense = j.value("combined_defense", false);
    c.seed = j.value("seed", std::uint64_t{0});
    c.output_dir = resolve(j.value("output_dir", c.output_dir));
    c.chain = j.value("chain", true);
    c.word_budget = j.value("word_budget", 30);
    if (j.contains("ngram")) {
      c.ngram_order = j["ngram"].value("order", c.ngram_order);
      c.ngram_smoothing_k = j["ngram"].value("smoothing_k", c.ngram_smoothing_k);
    }
    c.repetition_theta = j.value("repetition_theta", c.repetition_theta);
    return c;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid config JSON: ") + e.what());
    }
    return from_json(j, std::filesystem::path(path).parent_path());
  }

  /// Run identity: hash of the config (minus output_dir), so identical
  /// configs land in identically named run directories with byte-identical
  /// artifacts.
  std::string run_id() const {
    nlohmann::json j = to_json();
    j.erase("output_dir");
    return "run-" + detail::hex64(fnv1a(j.dump()));
  }

  /// Forces every backend to its offline mock so a run needs no network.
  void force_mock_backends() {
    for (auto& r : retrievers) r.backend = EmbedBackend::mock_hash;
    auto demote = [](GeneratorSpec& g) {
      if (g.backend == GenBackend::http_endpoint) g.backend = GenBackend::mock_compliant;
    };
    for (auto& g : attack_generators) demote(g);
    demote(target_generator);
    for (auto& d : defenses) {
      if (d.paraphrase_generator) demote(*d.paraphrase_generator);
    }
  }
};

// ---------------------------------------------------------------------------
// Targets
// ---------------------------------------------------------------------------

/// Loads JSONL target cases: {"qid", "question", "target_answer",
/// "correct_answer"} per line. Validation errors name the offending qid.
inline std::vector<TargetCase> load_targets(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open targets file: " + path);
  std::vector<TargetCase> cases;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("targets line " + std::to_string(line_no) + ": " + e.what());
    }
    TargetCase tc;
    tc.qid = rec.value("qid", std::string{});
    tc.question = rec.value("question", std::string{});
    tc.target_answer = rec.value("target_answer", std::string{});
    tc.correct_answer = rec.value("correct_answer", std::string{});
    tc.validate();
    if (!seen.insert(tc.qid).second) {
      throw ValidationError("duplicate qid \"" + tc.qid + "\" in targets file");
    }
    cases.push_back(std::move(tc));
  }
  return cases;
}

// ---------------------------------------------------------------------------
// Attack phase
// ---------------------------------------------------------------------------

struct CaseArtifacts {
  TargetCase target;
  std::vector<AdversarialCandidate> p_init;
  std::vector<AdversarialCandidate> p_opt;
  std::optional<Tau> tau;
  InjectionSelection selection;
  std::vector<std::string> injected_ids;
  std::string error;
};

struct AttackPhaseResult {
  CorpusSnapshot clean;
  CorpusSnapshot poisoned;
  std::vector<CaseArtifacts> cases;
  AttackTrace trace;
};

namespace detail {
inline std::uint64_t case_seed(std::uint64_t seed, const std::string& qid,
                               std::string_view stage) {
  std::uint64_t h = fnv1a("ragpoison.case");
  h ^= seed;
  h *= 1099511628211ull;
  h = fnv1a_combine(h, qid);
  h = fnv1a_combine(h, stage);
  return h;
}
}  // namespace detail

/// Stage A: per case, generate initial texts, fix the acceptance threshold,
/// optimize, select the injection set, and inject into the snapshot. Cases
/// that end with nothing to inject are recorded as shortfalls, never fatal.
inline AttackPhaseResult run_attack_phase(const RunConfig& config,
                                          const std::vector<TargetCase>& targets,
                                          const CorpusSnapshot& clean) {
  const TemplateRegistry registry = TemplateRegistry::builtin();
  const auto init_templates = registry.init_templates();
  const auto ag_templates = registry.ag_templates();

  AttackPhaseResult result;
  result.clean = clean;
  CorpusSnapshot current = clean;

  for (const auto& tc : targets) {
    CaseArtifacts art;
    art.target = tc;
    try {
      art.p_init = initialize_malicious(tc, config.attack_generators, init_templates,
                                        config.n_init,
                                        detail::case_seed(config.seed, tc.qid, "init"),
                                        config.target_generator, config.word_budget,
                                        &result.trace);
      if (!art.p_init.empty()) {
        std::vector<std::string> init_texts;
        for (const auto& c : art.p_init) init_texts.push_back(c.text);
        art.tau = compute_tau(tc.question, init_texts, config.retrievers,
                              detail::case_seed(config.seed, tc.qid, "tau"));
        OptimizeOptions options;
        options.chain = config.chain;
        art.p_opt = optimize_malicious(art.p_init, tc, config.attack_generators, ag_templates,
                                       config.retrievers, config.target_generator, config.trials,
                                       *art.tau, detail::case_seed(config.seed, tc.qid, "opt"),
                                       options, &result.trace, registry);
        art.selection = select_injection_set(art.p_opt, tc, config.retrievers, config.n_inject);
      } else {
        art.selection.shortfall = true;
      }
      if (!art.selection.texts.empty()) {
        const std::string prefix = "adv-" + tc.qid;
        current = inject(current, art.selection.texts, prefix);
        for (std::size_t i = 1; i <= art.selection.texts.size(); ++i) {
          art.injected_ids.push_back(prefix + "-" + std::to_string(i));
        }
      }
    } catch (const TransportError& e) {
      art.error = e.what();
    }
    result.cases.push_back(std::move(art));
  }
  result.poisoned = current;
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation phase and report
// ---------------------------------------------------------------------------

struct DefenseGridEntry {
  std::string label;
  std::vector<DefenseConfig> defenses;
};

/// Baseline, each configured defense alone, and optionally all combined.
inline std::vector<DefenseGridEntry> defense_grid(const RunConfig& config) {
  std::vector<DefenseGridEntry> grid;
  grid.push_back({"none", {}});
  for (const auto& d : config.defenses) grid.push_back({to_string(d.defense_id), {d}});
  if (config.combined_defense && !config.defenses.empty()) {
    grid.push_back({"combined", config.defenses});
  }
  return grid;
}

struct KMetrics {
  int k = 0;
  double asr_value = 0.0;
  PrfScores prf;
  std::optional<double> tes_value;
};

struct DefenseReport {
  std::string label;
  std::vector<KMetrics> by_k;
  std::optional<double> casr_value;
};

struct ConcealmentReport {
  int texts = 0;
  double fre_mean = 0.0;
  double fkgl_mean = 0.0;
  double gfi_mean = 0.0;
  double ari_mean = 0.0;
  double ppl_mean = 0.0;
  std::optional<double> repetition_rate_mean;  // over cases with >= 2 texts
};

struct ExperimentReport {
  std::string run_id;
  std::string dataset;
  std::vector<DefenseReport> defense_reports;
  std::optional<ConcealmentReport> concealment;
  std::vector<std::string> shortfall_qids;
  std::vector<std::string> degraded_qids;

  nlohmann::json to_json() const {
    nlohmann::json defs = nlohmann::json::array();
    for (const auto& d : defense_reports) {
      nlohmann::json by_k = nlohmann::json::array();
      for (const auto& m : d.by_k) {
        nlohmann::json row{{"k", m.k},
                           {"asr", m.asr_value},
                           {"precision", m.prf.precision},
                           {"recall", m.prf.recall},
                           {"f1", m.prf.f1}};
        row["tes"] = m.tes_value ? nlohmann::json(*m.tes_value) : nlohmann::json(nullptr);
        by_k.push_back(row);
      }
      nlohmann::json entry{{"defense", d.label}, {"by_k", by_k}};
      entry["casr"] = d.casr_value ? nlohmann::json(*d.casr_value) : nlohmann::json(nullptr);
      defs.push_back(entry);
    }
    nlohmann::json j{{"run_id", run_id},
                     {"dataset", dataset},
                     {"defenses", defs},
                     {"shortfall_qids", shortfall_qids},
                     {"degraded_qids", degraded_qids}};
    if (concealment) {
      nlohmann::json c{{"texts", concealment->texts},
                       {"fre_mean", concealment->fre_mean},
                       {"fkgl_mean", concealment->fkgl_mean},
                       {"gfi_mean", concealment->gfi_mean},
                       {"ari_mean", concealment->ari_mean},
                       {"ppl_mean", concealment->ppl_mean}};
      c["repetition_rate_mean"] = concealment->repetition_rate_mean
                                      ? nlohmann::json(*concealment->repetition_rate_mean)
                                      : nlohmann::json(nullptr);
      j["concealment"] = c;
    } else {
      j["concealment"] = nullptr;
    }
    return j;
  }

  static ExperimentReport from_json(const nlohmann::json& j) {
    ExperimentReport r;
    r.run_id = j.value("run_id", std::string{});
    r.dataset = j.value("dataset", std::string{});
    for (const auto& d : j.value("defenses", nlohmann::json::array())) {
      DefenseReport dr;
      dr.label = d.at("defense").get<std::string>();
      if (d.contains("casr") && !d["casr"].is_null()) dr.casr_value = d["casr"].get<double>();
      for (const auto& row : d.at("by_k")) {
        KMetrics m;
        m.k = row.at("k").get<int>();
        m.asr_value = row.at("asr").get<double>();
        m.prf.precision = row.at("precision").get<double>();
        m.prf.recall = row.at("recall").get<double>();
        m.prf.f1 = row.at("f1").get<double>();
        if (row.contains("tes") && !row["tes"].is_null()) m.tes_value = row["tes"].get<double>();
        dr.by_k.push_back(m);
      }
      r.defense_reports.push_back(std::move(dr));
    }
    if (j.contains("concealment") && !j["concealment"].is_null()) {
      const auto& c = j["concealment"];
      ConcealmentReport cr;
      cr.texts = c.value("texts", 0);
      cr.fre_mean = c.value("fre_mean", 0.0);
      cr.fkgl_mean = c.value("fkgl_mean", 0.0);
      cr.gfi_mean = c.value("gfi_mean", 0.0);
      cr.ari_mean = c.value("ari_mean", 0.0);
      cr.ppl_mean = c.value("ppl_mean", 0.0);
      if (c.contains("repetition_rate_mean") && !c["repetition_rate_mean"].is_null()) {
        cr.repetition_rate_mean = c["repetition_rate_mean"].get<double>();
      }
      r.concealment = cr;
    }
    r.shortfall_qids = j.value("shortfall_qids", std::vector<std::string>{});
    r.degraded_qids = j.value("degraded_qids", std::vector<std::string>{});
    return r;
  }
};

}  // namespace ragpoison
