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

#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ragpoison/harness.hpp"

namespace ragpoison {

// ---------------------------------------------------------------------------
// Trace records
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const AttemptRecord& rec) {
  nlohmann::json j{{"qid", rec.qid},
                   {"stage", to_string(rec.stage)},
                   {"model_id", rec.model_id},
                   {"template_id", rec.template_id},
                   {"input_text", rec.input_text},
                   {"output_text", rec.output_text},
                   {"sim_ok", rec.sim_ok},
                   {"gen_ok", rec.gen_ok},
                   {"accepted", rec.accepted},
                   {"error", rec.error}};
  if (rec.evaluator) {
    j["evaluator"] = {{"aggregate", rec.evaluator->aggregate},
                      {"per_retriever", rec.evaluator->per_retriever}};
  } else {
    j["evaluator"] = nullptr;
  }
  j["tau"] = rec.tau_value ? nlohmann::json(*rec.tau_value) : nlohmann::json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Evaluation phase
// ---------------------------------------------------------------------------

struct EvaluationResult {
  std::vector<DefenseReport> defense_reports;
  std::vector<nlohmann::json> answer_records;
  std::vector<nlohmann::json> retrieval_records;
};

namespace detail {

inline AttackOutcome build_outcome(const RagAnswer& ans, const TargetCase& tc,
                                   const std::vector<std::string>& injected_ids) {
  AttackOutcome o;
  o.qid = tc.qid;
  o.k = ans.requested_k;
  o.answer = ans.answer;
  o.target_answer = tc.target_answer;
  o.correct_answer = tc.correct_answer;
  o.retrieved_total = static_cast<int>(ans.retrieved_doc_ids.size());
  o.injected_n = static_cast<int>(injected_ids.size());
  const std::unordered_set<std::string> injected(injected_ids.begin(), injected_ids.end());
  for (const auto& id : ans.retrieved_doc_ids) {
    if (injected.count(id)) ++o.retrieved_poisoned;
  }
  return o;
}

inline bool contiguous_from_one(const std::vector<int>& ks) {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] != static_cast<int>(i) + 1) return false;
  }
  return !ks.empty();
}

}  // namespace detail

/// Stage B: answers every (defense config, k, case) cell over the poisoned
/// snapshot and turns the outcomes into per-defense metric tables.
inline EvaluationResult run_evaluation_phase(
    const RunConfig& config, const std::vector<TargetCase>& targets,
    const CorpusSnapshot& poisoned,
    const std::map<std::string, std::vector<std::string>>& injected_by_qid,
    const PerplexityScorer& scorer, const std::vector<DefenseGridEntry>& grid) {
  EvaluationResult result;
  static const std::vector<std::string> kEmpty;

  for (const auto& entry : grid) {
    DefenseReport dr;
    dr.label = entry.label;
    std::vector<std::pair<int, double>> asr_by_k;

    for (int k : config.k_values) {
      std::vector<AttackOutcome> outcomes;
      for (const auto& tc : targets) {
        const RagAnswer ans =
            answer_query(poisoned, tc.question, k, config.retrievers.front(),
                         config.target_generator, entry.defenses, &scorer, tc.qid);

        const auto it = injected_by_qid.find(tc.qid);
        const auto& injected = it == injected_by_qid.end() ? kEmpty : it->second;
        outcomes.push_back(detail::build_outcome(ans, tc, injected));

        nlohmann::json hits = nlohmann::json::array();
        for (const auto& h : ans.prefilter_hits) {
          hits.push_back({{"doc_id", h.doc_id}, {"score", round_sig9(h.score)}});
        }
        result.retrieval_records.push_back({{"defense", entry.label},
                                            {"qid", tc.qid},
                                            {"k", ans.k},
                                            {"retriever_id", config.retrievers.front().retriever_id},
                                            {"query", ans.effective_question},
                                            {"hits", hits}});
        result.answer_records.push_back({{"defense", entry.label},
                                         {"qid", tc.qid},
                                         {"k", ans.requested_k},
                                         {"effective_k", ans.k},
                                         {"retrieved_doc_ids", ans.retrieved_doc_ids},
                                         {"removed_doc_ids", ans.removed_doc_ids},
                                         {"flagged_doc_ids", ans.flagged_doc_ids},
                                         {"defense_trace", ans.defense_trace},
                                         {"answer", ans.answer},
                                         {"effective_question", ans.effective_question},
                                         {"target_answer", tc.target_answer},
                                         {"correct_answer", tc.correct_answer},
                                         {"retrieved_poisoned", outcomes.back().retrieved_poisoned},
                                         {"retrieved_total", outcomes.back().retrieved_total},
                                         {"injected_n", outcomes.back().injected_n}});
      }
      KMetrics m;
      m.k = k;
      m.asr_value = asr(outcomes);
      m.prf = precision_recall_f1(outcomes);
      if (m.prf.f1 > 0.0) m.tes_value = tes(m.asr_value, m.prf.f1);
      asr_by_k.emplace_back(k, m.asr_value);
      dr.by_k.push_back(m);
    }
    if (detail::contiguous_from_one(config.k_values)) dr.casr_value = casr(asr_by_k);
    result.defense_reports.push_back(std::move(dr));
  }
  return result;
}

/// Concealment statistics over all injected texts: readability and
/// perplexity means per text, repetition rate per case (needs two texts)
/// averaged across cases.
inline std::optional<ConcealmentReport> compute_concealment(
    const std::vector<CaseArtifacts>& cases, const PerplexityScorer& scorer,
    const EmbedderSpec& embedder, double theta) {
  std::vector<std::string> all_texts;
  std::vector<std::vector<std::string>> per_case;
  for (const auto& art : cases) {
    if (!art.selection.texts.empty()) {
      per_case.push_back(art.selection.texts);
      all_texts.insert(all_texts.end(), art.selection.texts.begin(), art.selection.texts.end());
    }
  }
  if (all_texts.empty()) return std::nullopt;

  ConcealmentReport c;
  c.texts = static_cast<int>(all_texts.size());
  for (const auto& t : all_texts) {
    const TextStats stats = text_stats(t);
    c.fre_mean += fre(stats);
    c.fkgl_mean += fkgl(stats);
    c.gfi_mean += gfi(stats);
    c.ari_mean += ari(stats);
    c.ppl_mean += scorer.perplexity(t);
  }
  const double n = static_cast<double>(all_texts.size());
  c.fre_mean /= n;
  c.fkgl_mean /= n;
  c.gfi_mean /= n;
  c.ari_mean /= n;
  c.ppl_mean /= n;

  double rate_sum = 0.0;
  int rated_cases = 0;
  for (const auto& texts : per_case) {
    if (texts.size() >= 2) {
      rate_sum += repetition_rate(texts, embedder, theta).rate;
      ++rated_cases;
    }
  }
  if (rated_cases > 0) c.repetition_rate_mean = rate_sum / rated_cases;
  return c;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

enum class ReportFormat { json, csv, markdown };

namespace detail {

inline std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

inline std::string report_csv(const ExperimentReport& report) {
  std::string csv = "dataset,defense,k,asr,precision,recall,f1,tes\n";
  for (const auto& d : report.defense_reports) {
    for (const auto& m : d.by_k) {
      csv += report.dataset + "," + d.label + "," + std::to_string(m.k) + "," +
             fixed4(m.asr_value) + "," + fixed4(m.prf.precision) + "," + fixed4(m.prf.recall) +
             "," + fixed4(m.prf.f1) + "," + (m.tes_value ? fixed4(*m.tes_value) : "nan") + "\n";
    }
  }
  return csv;
}

inline std::string report_markdown(const ExperimentReport& report) {
  std::string md = "# Attack evaluation report\n\n";
  md += "dataset: `" + report.dataset + "`  \nrun: `" + report.run_id + "`\n";
  for (const auto& d : report.defense_reports) {
    md += "\n## Defense: " + d.label + "\n\n";
    md += "| k | ASR | Precision | Recall | F1 | TES |\n";
    md += "|--:|----:|----------:|-------:|---:|----:|\n";
    for (const auto& m : d.by_k) {
      md += "| " + std::to_string(m.k) + " | " + fixed4(m.asr_value) + " | " +
            fixed4(m.prf.precision) + " | " + fixed4(m.prf.recall) + " | " + fixed4(m.prf.f1) +
            " | " + (m.tes_value ? fixed4(*m.tes_value) : "n/a") + " |\n";
    }
    md += "\nCASR: " + (d.casr_value ? fixed4(*d.casr_value) : "n/a") + "\n";
  }
  if (report.concealment) {
    const auto& c = *report.concealment;
    md += "\n## Concealment (over " + std::to_string(c.texts) + " injected texts)\n\n";
    md += "| FRE | FKGL | GFI | ARI | PPL | Repetition |\n";
    md += "|----:|-----:|----:|----:|----:|-----------:|\n";
    md += "| " + fixed4(c.fre_mean) + " | " + fixed4(c.fkgl_mean) + " | " + fixed4(c.gfi_mean) +
          " | " + fixed4(c.ari_mean) + " | " + fixed4(c.ppl_mean) + " | " +
          (c.repetition_rate_mean ? fixed4(*c.repetition_rate_mean) : "n/a") + " |\n";
  }
  if (!report.shortfall_qids.empty()) {
    md += "\nShortfall cases:";
    for (const auto& q : report.shortfall_qids) md += " `" + q + "`";
    md += "\n";
  }
  if (!report.degraded_qids.empty()) {
    md += "\nDegraded cases:";
    for (const auto& q : report.degraded_qids) md += " `" + q + "`";
    md += "\n";
  }
  return md;
}

}  // namespace detail

/// Writes the requested formats into `dir` (metrics.json, report.csv,
/// report.md) atomically and returns the paths written.
inline std::vector<std::string> emit_report(const ExperimentReport& report,
                                            const std::set<ReportFormat>& formats,
                                            const std::string& dir) {
  std::vector<std::string> paths;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create report directory " + dir + ": " + ec.message());
  if (formats.count(ReportFormat::json)) {
    const std::string path = (std::filesystem::path(dir) / "metrics.json").string();
    atomic_write_file(path, report.to_json().dump(2) + "\n");
    paths.push_back(path);
  }
  if (formats.count(ReportFormat::csv)) {
    const std::string path = (std::filesystem::path(dir) / "report.csv").string();
    atomic_write_file(path, detail::report_csv(report));
    paths.push_back(path);
  }
  if (formats.count(ReportFormat::markdown)) {
    const std::string path = (std::filesystem::path(dir) / "report.md").string();
    atomic_write_file(path, detail::report_markdown(report));
    paths.push_back(path);
  }
  return paths;
}

// ---------------------------------------------------------------------------
// Staged runs: the attack stage persists everything the evaluation stage
// needs, so each stage is independently runnable on prior outputs.
// ---------------------------------------------------------------------------

/// Stage A entry point: generates, optimizes and injects; persists
/// candidates.jsonl, clean/poisoned snapshots, targets.jsonl and
/// manifest.json under `<output_dir>/<run_id>/`. Returns the run directory.
inline std::string run_attack_only(const RunConfig& config) {
  config.validate();
  const std::vector<TargetCase> targets = load_targets(config.targets_path);
  if (targets.empty()) throw ValidationError("targets file has no cases");
  const CorpusSnapshot clean = ingest_corpus(config.corpus_path);

  const std::filesystem::path run_dir =
      std::filesystem::path(config.output_dir) / config.run_id();
  std::error_code ec;
  std::filesystem::remove_all(run_dir, ec);
  std::filesystem::create_directories(run_dir, ec);
  if (ec) throw IoError("cannot create run directory " + run_dir.string() + ": " + ec.message());

  AttackPhaseResult attack = run_attack_phase(config, targets, clean);
  {
    JsonlWriter writer((run_dir / "candidates.jsonl").string());
    for (const auto& rec : attack.trace) writer.write(to_json(rec));
  }
  save_snapshot(attack.clean, (run_dir / "clean.jsonl").string());
  save_snapshot(attack.poisoned, (run_dir / "poisoned.jsonl").string());
  {
    JsonlWriter writer((run_dir / "targets.jsonl").string());
    for (const auto& tc : targets) {
      writer.write({{"qid", tc.qid},
                    {"question", tc.question},
                    {"target_answer", tc.target_answer},
                    {"correct_answer", tc.correct_answer}});
    }
  }

  nlohmann::json cases_json = nlohmann::json::array();
  for (const auto& art : attack.cases) {
    nlohmann::json cj{{"qid", art.target.qid},
                      {"injected_ids", art.injected_ids},
                      {"injected_texts", art.selection.texts},
                      {"shortfall", art.selection.shortfall},
                      {"p_init_count", art.p_init.size()},
                      {"p_opt_count", art.p_opt.size()},
                      {"error", art.error}};
    if (art.tau) {
      cj["tau"] = {{"value", art.tau->value},
                   {"variance", art.tau->variance},
                   {"sample_id", art.tau->sample_id}};
    } else {
      cj["tau"] = nullptr;
    }
    cases_json.push_back(cj);
  }
  nlohmann::json manifest{{"run_id", config.run_id()},
                          {"config", config.to_json()},
                          {"cases", cases_json},
                          {"snapshots",
                           {{"clean", attack.clean.snapshot_id()},
                            {"poisoned", attack.poisoned.snapshot_id()}}}};
  atomic_write_file((run_dir / "manifest.json").string(), manifest.dump(2) + "\n");
  return run_dir.string();
}

/// A persisted attack stage, reloaded for evaluation or replay.
struct LoadedRun {
  std::filesystem::path dir;
  RunConfig config;
  std::vector<TargetCase> targets;
  CorpusSnapshot clean;
  CorpusSnapshot poisoned;
  std::map<std::string, std::vector<std::string>> injected_by_qid;
  std::vector<CaseArtifacts> case_summaries;  // selection texts + flags only
};

inline LoadedRun load_run(const std::string& run_dir) {
  LoadedRun run;
  run.dir = run_dir;
  nlohmann::json manifest = nlohmann::json::parse(read_file((run.dir / "manifest.json").string()));
  run.config = RunConfig::from_json(manifest.at("config"));
  run.targets = load_targets((run.dir / "targets.jsonl").string());
  run.clean = load_snapshot((run.dir / "clean.jsonl").string());
  run.poisoned = load_snapshot((run.dir / "poisoned.jsonl").string());
  for (const auto& cj : manifest.at("cases")) {
    CaseArtifacts art;
    art.target.qid = cj.at("qid").get<std::string>();
    art.injected_ids = cj.at("injected_ids").get<std::vector<std::string>>();
    art.selection.texts = cj.at("injected_texts").get<std::vector<std::string>>();
    art.selection.shortfall = cj.at("shortfall").get<bool>();
    art.error = cj.value("error", std::string{});
    run.injected_by_qid[art.target.qid] = art.injected_ids;
    run.case_summaries.push_back(std::move(art));
  }
  return run;
}

namespace detail {

inline ExperimentReport evaluate_loaded_run(const LoadedRun& run,
                                            const std::vector<DefenseGridEntry>& grid,
                                            const std::string& file_prefix) {
  std::vector<std::string> clean_texts;
  for (const auto& d : run.clean.documents()) clean_texts.push_back(d.text);
  const PerplexityScorer scorer =
      train_ngram(clean_texts, run.config.ngram_order, run.config.ngram_smoothing_k);

  const EvaluationResult eval = run_evaluation_phase(run.config, run.targets, run.poisoned,
                                                     run.injected_by_qid, scorer, grid);
  {
    JsonlWriter writer((run.dir / (file_prefix + "retrieval.jsonl")).string());
    for (const auto& rec : eval.retrieval_records) writer.write(rec);
  }
  {
    JsonlWriter writer((run.dir / (file_prefix + "answers.jsonl")).string());
    for (const auto& rec : eval.answer_records) writer.write(rec);
  }

  ExperimentReport report;
  report.run_id = run.config.run_id();
  report.dataset = run.config.dataset;
  report.defense_reports = eval.defense_reports;
  report.concealment = compute_concealment(run.case_summaries, scorer,
                                           run.config.retrievers.front(),
                                           run.config.repetition_theta);
  for (const auto& art : run.case_summaries) {
    if (art.selection.shortfall) report.shortfall_qids.push_back(art.target.qid);
    if (!art.error.empty()) report.degraded_qids.push_back(art.target.qid);
  }
  return report;
}

}  // namespace detail

/// Stage B entry point: evaluates the persisted attack over the configured
/// defense grid and emits metrics.json / report.csv / report.md.
inline ExperimentReport run_evaluation_only(const std::string& run_dir) {
  const LoadedRun run = load_run(run_dir);
  ExperimentReport report = detail::evaluate_loaded_run(run, defense_grid(run.config), "");
  emit_report(report, {ReportFormat::json, ReportFormat::csv, ReportFormat::markdown},
              run.dir.string());
  return report;
}

/// Re-evaluates a persisted attack under one named defense combination.
/// Artifacts are written next to the originals as `defend-<label>.*`.
inline ExperimentReport run_defense_evaluation(const std::string& run_dir,
                                               const std::vector<std::string>& defense_ids) {
  if (defense_ids.empty()) throw ConfigError("defend: no defense ids given");
  const LoadedRun run = load_run(run_dir);

  DefenseGridEntry entry;
  for (const auto& id : defense_ids) {
    const DefenseId wanted = defense_id_from_string(id);
    bool found = false;
    for (const auto& d : run.config.defenses) {
      if (d.defense_id == wanted) {
        entry.defenses.push_back(d);
        found = true;
        break;
      }
    }
    if (!found) {
      throw ConfigError("defend: defense \"" + id + "\" is not configured for this run");
    }
    entry.label += (entry.label.empty() ? "" : "+") + id;
  }

  const std::string prefix = "defend-" + entry.label + ".";
  ExperimentReport report = detail::evaluate_loaded_run(run, {entry}, prefix);
  atomic_write_file((run.dir / (prefix + "metrics.json")).string(),
                    report.to_json().dump(2) + "\n");
  return report;
}

/// Full pipeline: stage A then stage B in one call. Identical configs
/// produce byte-identical artifacts when all backends are deterministic.
inline ExperimentReport run_experiment(const RunConfig& config) {
  return run_evaluation_only(run_attack_only(config));
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

/// Rebuilds the full report purely from the persisted run directory:
/// outcomes from answers.jsonl (the ASR substring check is re-applied, not
/// trusted), concealment from the persisted snapshots and manifest. The
/// result must equal metrics.json for a healthy run.
inline ExperimentReport replay_metrics(const std::string& run_dir) {
  const std::filesystem::path dir(run_dir);
  nlohmann::json manifest = nlohmann::json::parse(read_file((dir / "manifest.json").string()));
  const RunConfig config = RunConfig::from_json(manifest.at("config"));

  // Outcomes keyed by (defense label, k), in answers.jsonl order.
  std::map<std::string, std::map<int, std::vector<AttackOutcome>>> outcomes;
  std::vector<std::string> defense_order;
  for (const auto& rec : read_jsonl((dir / "answers.jsonl").string())) {
    const std::string defense = rec.at("defense").get<std::string>();
    if (outcomes.find(defense) == outcomes.end()) defense_order.push_back(defense);
    AttackOutcome o;
    o.qid = rec.at("qid").get<std::string>();
    o.k = rec.at("k").get<int>();
    o.answer = rec.at("answer").get<std::string>();
    o.target_answer = rec.at("target_answer").get<std::string>();
    o.correct_answer = rec.at("correct_answer").get<std::string>();
    o.retrieved_poisoned = rec.at("retrieved_poisoned").get<int>();
    o.retrieved_total = rec.at("retrieved_total").get<int>();
    o.injected_n = rec.at("injected_n").get<int>();
    outcomes[defense][o.k].push_back(std::move(o));
  }

  ExperimentReport report;
  report.run_id = manifest.at("run_id").get<std::string>();
  report.dataset = config.dataset;
  for (const auto& defense : defense_order) {
    DefenseReport dr;
    dr.label = defense;
    std::vector<std::pair<int, double>> asr_by_k;
    for (const auto& [k, outs] : outcomes[defense]) {
      KMetrics m;
      m.k = k;
      m.asr_value = asr(outs);
      m.prf = precision_recall_f1(outs);
      if (m.prf.f1 > 0.0) m.tes_value = tes(m.asr_value, m.prf.f1);
      asr_by_k.emplace_back(k, m.asr_value);
      dr.by_k.push_back(m);
    }
    std::vector<int> ks;
    for (const auto& [k, _] : asr_by_k) ks.push_back(k);
    if (detail::contiguous_from_one(ks)) dr.casr_value = casr(asr_by_k);
    report.defense_reports.push_back(std::move(dr));
  }

  // Concealment from the persisted snapshots and manifest case artifacts.
  const CorpusSnapshot clean = load_snapshot((dir / "clean.jsonl").string());
  std::vector<std::string> clean_texts;
  for (const auto& d : clean.documents()) clean_texts.push_back(d.text);
  const PerplexityScorer scorer =
      train_ngram(clean_texts, config.ngram_order, config.ngram_smoothing_k);
  std::vector<CaseArtifacts> cases;
  for (const auto& cj : manifest.at("cases")) {
    CaseArtifacts art;
    art.target.qid = cj.at("qid").get<std::string>();
    art.selection.texts = cj.at("injected_texts").get<std::vector<std::string>>();
    art.selection.shortfall = cj.at("shortfall").get<bool>();
    art.error = cj.value("error", std::string{});
    cases.push_back(std::move(art));
    if (cases.back().selection.shortfall) report.shortfall_qids.push_back(cases.back().target.qid);
    if (!cases.back().error.empty()) report.degraded_qids.push_back(cases.back().target.qid);
  }
  report.concealment =
      compute_concealment(cases, scorer, config.retrievers.front(), config.repetition_theta);
  return report;
}

/// Re-checks the optimization gate from a persisted candidates.jsonl: every
/// accepted rewrite must satisfy aggregate > tau and the generation
/// condition flag. Returns false (and does not throw) on the first
/// violation.
inline bool verify_gate_soundness(const std::string& candidates_path) {
  for (const auto& rec : read_jsonl(candidates_path)) {
    if (rec.at("stage").get<std::string>() != "rewrite") continue;
    if (!rec.at("accepted").get<bool>()) continue;
    if (rec.at("evaluator").is_null() || rec.at("tau").is_null()) return false;
    const double aggregate = rec.at("evaluator").at("aggregate").get<double>();
    const double tau_value = rec.at("tau").get<double>();
    if (!(aggregate > tau_value)) return false;
    if (!rec.at("gen_ok").get<bool>()) return false;
  }
  return true;
}

/// Size of the accepted set when the persisted gate is replayed with tau
/// raised by `offset` (the generation flag is reused as recorded).
inline std::size_t replay_accepted_count(const std::string& candidates_path, double offset) {
  std::size_t count = 0;
  for (const auto& rec : read_jsonl(candidates_path)) {
    if (rec.at("stage").get<std::string>() != "rewrite") continue;
    if (rec.at("evaluator").is_null() || rec.at("tau").is_null()) continue;
    const double aggregate = rec.at("evaluator").at("aggregate").get<double>();
    const double tau_value = rec.at("tau").get<double>() + offset;
    if (aggregate > tau_value && rec.at("gen_ok").get<bool>()) ++count;
  }
  return count;
}

}  // namespace ragpoison
