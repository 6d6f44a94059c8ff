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

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <ragpoison/ragpoison.hpp>

namespace {

using namespace ragpoison;

/// Accepts "1..10" ranges or "1,5,10" lists.
std::vector<int> parse_k_values(const std::string& arg) {
  std::vector<int> ks;
  const auto range = arg.find("..");
  if (range != std::string::npos) {
    const int lo = std::stoi(arg.substr(0, range));
    const int hi = std::stoi(arg.substr(range + 2));
    for (int k = lo; k <= hi; ++k) ks.push_back(k);
    return ks;
  }
  std::size_t pos = 0;
  while (pos < arg.size()) {
    auto comma = arg.find(',', pos);
    if (comma == std::string::npos) comma = arg.size();
    ks.push_back(std::stoi(arg.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return ks;
}

std::vector<std::string> split_csv(const std::string& arg) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < arg.size()) {
    auto comma = arg.find(',', pos);
    if (comma == std::string::npos) comma = arg.size();
    out.push_back(arg.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed, bool mock,
                      const std::string& out_dir, const std::string& k_arg) {
  RunConfig config = RunConfig::load(path);
  if (seed) config.seed = *seed;
  if (!out_dir.empty()) config.output_dir = out_dir;
  if (!k_arg.empty()) config.k_values = parse_k_values(k_arg);
  if (mock) config.force_mock_backends();
  return config;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void print_defense_summary(const ExperimentReport& report) {
  for (const auto& d : report.defense_reports) {
    std::string line = "  " + d.label + ":";
    for (const auto& m : d.by_k) {
      line += " ASR@" + std::to_string(m.k) + "=" + fixed4(m.asr_value);
    }
    line += d.casr_value ? " CASR=" + fixed4(*d.casr_value) : " CASR=n/a";
    std::printf("%s\n", line.c_str());
  }
  if (!report.shortfall_qids.empty()) {
    std::string line = "  shortfall cases:";
    for (const auto& q : report.shortfall_qids) line += " " + q;
    std::printf("%s\n", line.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ragpoison: corpus-poisoning attack and defense evaluation for RAG pipelines"};
  app.require_subcommand(1);

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate and snapshot a JSONL corpus");
  std::string ingest_corpus_path;
  std::string ingest_out = "snapshot.jsonl";
  ingest_cmd->add_option("--corpus", ingest_corpus_path, "corpus JSONL path")->required();
  ingest_cmd->add_option("--out", ingest_out, "snapshot output path");

  // attack
  auto* attack_cmd = app.add_subcommand("attack", "Generate, optimize and inject poisoned texts");
  std::string config_path, out_dir, k_arg;
  std::optional<std::uint64_t> seed;
  bool mock = false;
  attack_cmd->add_option("--config", config_path, "run config JSON")->required();
  attack_cmd->add_option("--seed", seed, "override the config seed");
  attack_cmd->add_option("--k", k_arg, "k values, e.g. 1..10 or 1,5,10");
  attack_cmd->add_option("--out", out_dir, "override the output directory");
  attack_cmd->add_flag("--mock", mock, "force all backends to offline mocks");

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Answer queries and compute metrics");
  std::string run_dir;
  evaluate_cmd->add_option("--run", run_dir, "run directory from a prior attack")->required();

  // defend
  auto* defend_cmd = app.add_subcommand("defend", "Re-evaluate under a defense configuration");
  std::string defend_run, defense_arg;
  defend_cmd->add_option("--run", defend_run, "run directory from a prior attack")->required();
  defend_cmd->add_option("--defense", defense_arg, "defense ids, comma-separated")->required();

  // report
  auto* report_cmd = app.add_subcommand("report", "Re-emit report files from metrics.json");
  std::string report_run, formats_arg = "json,csv,md";
  std::string report_out;
  report_cmd->add_option("--run", report_run, "run directory")->required();
  report_cmd->add_option("--formats", formats_arg, "comma list of json,csv,md");
  report_cmd->add_option("--out", report_out, "emit into this directory instead");

  // replay
  auto* replay_cmd = app.add_subcommand("replay", "Recompute metrics from persisted traces");
  std::string replay_run;
  replay_cmd->add_option("--run", replay_run, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) {
      const CorpusSnapshot snap = ingest_corpus(ingest_corpus_path);
      save_snapshot(snap, ingest_out);
      std::printf("ingested %zu documents -> %s (snapshot %s)\n", snap.size(),
                  ingest_out.c_str(), snap.snapshot_id().c_str());
      return 0;
    }
    if (*attack_cmd) {
      const RunConfig config = load_config(config_path, seed, mock, out_dir, k_arg);
      const std::string dir = run_attack_only(config);
      const auto manifest = nlohmann::json::parse(read_file(dir + "/manifest.json"));
      std::printf("attack artifacts written to %s\n", dir.c_str());
      for (const auto& cj : manifest.at("cases")) {
        std::printf("  %s: init=%zu opt=%zu injected=%zu%s%s\n",
                    cj.at("qid").get<std::string>().c_str(),
                    cj.at("p_init_count").get<std::size_t>(),
                    cj.at("p_opt_count").get<std::size_t>(),
                    cj.at("injected_ids").size(),
                    cj.at("shortfall").get<bool>() ? " (shortfall)" : "",
                    cj.value("error", std::string{}).empty() ? "" : " (degraded)");
      }
      return 0;
    }
    if (*evaluate_cmd) {
      const ExperimentReport report = run_evaluation_only(run_dir);
      std::printf("evaluation of run %s (dataset %s)\n", report.run_id.c_str(),
                  report.dataset.c_str());
      print_defense_summary(report);
      std::printf("report files written to %s\n", run_dir.c_str());
      return 0;
    }
    if (*defend_cmd) {
      const ExperimentReport report = run_defense_evaluation(defend_run, split_csv(defense_arg));
      std::printf("defense evaluation of run %s\n", report.run_id.c_str());
      print_defense_summary(report);
      return 0;
    }
    if (*report_cmd) {
      const std::string metrics = read_file(report_run + "/metrics.json");
      const ExperimentReport report = ExperimentReport::from_json(nlohmann::json::parse(metrics));
      std::set<ReportFormat> formats;
      for (const auto& f : split_csv(formats_arg)) {
        if (f == "json") formats.insert(ReportFormat::json);
        else if (f == "csv") formats.insert(ReportFormat::csv);
        else if (f == "md" || f == "markdown") formats.insert(ReportFormat::markdown);
        else throw ConfigError("unknown report format: " + f);
      }
      const auto paths = emit_report(report, formats,
                                     report_out.empty() ? report_run : report_out);
      for (const auto& p : paths) std::printf("wrote %s\n", p.c_str());
      return 0;
    }
    if (*replay_cmd) {
      const ExperimentReport replayed = replay_metrics(replay_run);
      const auto stored = nlohmann::json::parse(read_file(replay_run + "/metrics.json"));
      if (replayed.to_json() == stored) {
        std::printf("replay OK: aggregates recomputed from traces match metrics.json\n");
        return 0;
      }
      std::printf("replay MISMATCH: recomputed aggregates differ from metrics.json\n");
      return 1;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
