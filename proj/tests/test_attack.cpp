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

#include <catch_amalgamated.hpp>

#include <set>
#include <string>
#include <vector>

#include <ragpoison/attack.hpp>

using namespace ragpoison;

namespace {

TargetCase fixture_case() {
  return {"q1", "when were the lantern chronicles written?", "1935", "1926"};
}

std::vector<EmbedderSpec> evaluator_specs() {
  std::vector<EmbedderSpec> specs;
  double weights[3] = {0.34, 0.33, 0.33};
  int i = 0;
  for (const char* id : {"contriever", "ance", "dpr"}) {
    EmbedderSpec s;
    s.retriever_id = id;
    s.backend = EmbedBackend::mock_hash;
    s.dim = 256;
    s.weight = weights[i++];
    specs.push_back(s);
  }
  return specs;
}

GeneratorSpec compliant(const std::string& id, std::uint64_t seed) {
  GeneratorSpec g;
  g.model_id = id;
  g.backend = GenBackend::mock_compliant;
  g.seed = seed;
  return g;
}

GeneratorSpec scripted(std::vector<ScriptEntry> script) {
  GeneratorSpec g;
  g.model_id = "scripted";
  g.backend = GenBackend::mock_scripted;
  g.script = std::move(script);
  return g;
}

std::vector<AdversarialCandidate> make_inits(const TargetCase& tc, int n, std::uint64_t seed) {
  const TemplateRegistry reg = TemplateRegistry::builtin();
  return initialize_malicious(tc, {compliant("qwen-mock", 1), compliant("gpt-mock", 2)},
                              reg.init_templates(), n, seed, compliant("checker", 7));
}

}  // namespace

TEST_CASE("generation condition accepts R-only answers and rejects the rest") {
  const TargetCase tc = fixture_case();
  CHECK(check_generation_condition(
      scripted({{"Query:", "The answer is 1935.", false}}), tc, "candidate text"));
  CHECK_FALSE(check_generation_condition(
      scripted({{"Query:", "It was 1935, though some say 1926.", false}}), tc, "candidate text"));
  CHECK_FALSE(check_generation_condition(
      scripted({{"Query:", "I don't know", false}}), tc, "candidate text"));
}

TEST_CASE("generation condition matching is case- and whitespace-insensitive") {
  TargetCase tc{"q2", "who composed the harbor ballad?", "Elton Fairmont", "Robert Dyson"};
  CHECK(check_generation_condition(
      scripted({{"Query:", "It was composed by  ELTON   fairmont.", false}}), tc, "text"));
  CHECK_THROWS_AS(check_generation_condition(scripted({}), tc, "   "), ValidationError);
}

TEST_CASE("initialization with a compliant generator accepts all attempts") {
  const TargetCase tc = fixture_case();
  const auto candidates = make_inits(tc, 5, 42);
  REQUIRE(candidates.size() == 5);
  for (const auto& c : candidates) {
    CHECK(contains_normalized(c.text, "1935"));
    CHECK_FALSE(contains_normalized(c.text, "1926"));
    REQUIRE(c.lineage.size() == 1);
    CHECK(c.lineage[0].stage == Stage::init);
    CHECK(c.accepted);
    CHECK(c.case_id == "q1");
  }
}

TEST_CASE("initialization rejects everything when the checker answers O") {
  const TargetCase tc = fixture_case();
  const TemplateRegistry reg = TemplateRegistry::builtin();
  // Attacker produces text, but the checker always answers the correct answer.
  const auto attacker = scripted({{"corpus", "a passage claiming 1935", false}});
  const auto checker = scripted({{"Query:", "The books were written in 1926.", false}});
  AttackTrace trace;
  const auto candidates = initialize_malicious(tc, {attacker}, reg.init_templates(), 4, 42,
                                               checker, 30, &trace);
  CHECK(candidates.empty());
  REQUIRE(trace.size() == 4);
  for (const auto& rec : trace) {
    CHECK_FALSE(rec.gen_ok);
    CHECK_FALSE(rec.accepted);
  }
}

TEST_CASE("initialization draws are reproducible for a fixed seed") {
  const TargetCase tc = fixture_case();
  const TemplateRegistry reg = TemplateRegistry::builtin();
  const std::vector<GeneratorSpec> gens{compliant("qwen-mock", 1), compliant("gpt-mock", 2),
                                        compliant("claude-mock", 3)};
  AttackTrace t1, t2;
  const auto c1 = initialize_malicious(tc, gens, reg.init_templates(), 6, 1234,
                                       compliant("checker", 7), 30, &t1);
  const auto c2 = initialize_malicious(tc, gens, reg.init_templates(), 6, 1234,
                                       compliant("checker", 7), 30, &t2);
  REQUIRE(c1.size() == c2.size());
  for (std::size_t i = 0; i < c1.size(); ++i) CHECK(c1[i].text == c2[i].text);
  REQUIRE(t1.size() == t2.size());
  bool saw_multiple_models = false;
  for (std::size_t i = 0; i < t1.size(); ++i) {
    CHECK(t1[i].model_id == t2[i].model_id);
    CHECK(t1[i].template_id == t2[i].template_id);
    if (t1[i].model_id != t1[0].model_id) saw_multiple_models = true;
  }
  CHECK(saw_multiple_models);
}

TEST_CASE("initialization validates its inputs") {
  const TargetCase tc = fixture_case();
  const TemplateRegistry reg = TemplateRegistry::builtin();
  CHECK_THROWS_AS(initialize_malicious(tc, {}, reg.init_templates(), 1, 0, compliant("c", 1)),
                  ValidationError);
  CHECK_THROWS_AS(initialize_malicious(tc, {compliant("a", 1)}, {}, 1, 0, compliant("c", 1)),
                  ValidationError);
  CHECK_THROWS_AS(initialize_malicious(tc, {compliant("a", 1)}, reg.init_templates(), 0, 0,
                                       compliant("c", 1)),
                  ValidationError);
  TargetCase bad = tc;
  bad.correct_answer = " 1935 ";
  CHECK_THROWS_AS(initialize_malicious(bad, {compliant("a", 1)}, reg.init_templates(), 1, 0,
                                       compliant("c", 1)),
                  ValidationError);
}

TEST_CASE("rewrite_candidate returns the generator output verbatim") {
  const TargetCase tc = fixture_case();
  const TemplateRegistry reg = TemplateRegistry::builtin();
  AdversarialCandidate cand;
  cand.text = "p1";
  const auto rewriter = scripted({{"The original sentence is “p1”", "p1-rewritten", false}});
  CHECK(rewrite_candidate(cand, tc, rewriter, reg.get("ag-1"), reg) == "p1-rewritten");

  cand.text = "";
  CHECK_THROWS_AS(rewrite_candidate(cand, tc, rewriter, reg.get("ag-1"), reg), ValidationError);
}

TEST_CASE("optimization accepts compliant rewrites and dedups texts") {
  const TargetCase tc = fixture_case();
  const auto specs = evaluator_specs();
  const std::vector<GeneratorSpec> gens{compliant("qwen-mock", 1), compliant("gpt-mock", 2)};
  const TemplateRegistry reg = TemplateRegistry::builtin();

  const auto p_init = make_inits(tc, 5, 42);
  REQUIRE(p_init.size() == 5);
  std::vector<std::string> init_texts;
  for (const auto& c : p_init) init_texts.push_back(c.text);
  const Tau tau = compute_tau(tc.question, init_texts, specs, 77);

  AttackTrace trace;
  const auto p_opt = optimize_malicious(p_init, tc, gens, reg.ag_templates(), specs,
                                        compliant("checker", 7), 5, tau, 99, {}, &trace, reg);

  CHECK(p_opt.size() >= p_init.size());
  CHECK(p_opt.size() <= 25);
  std::set<std::string> distinct;
  for (const auto& c : p_opt) {
    distinct.insert(c.text);
    REQUIRE(c.evaluator.has_value());
    CHECK(c.evaluator->aggregate > tau.value);
    CHECK(contains_normalized(c.text, tc.target_answer));
    CHECK(c.lineage.size() >= 2);
    CHECK(c.lineage.front().stage == Stage::init);
    CHECK(c.lineage.back().stage == Stage::rewrite);
  }
  CHECK(distinct.size() == p_opt.size());
  REQUIRE(trace.size() == 25);
}

TEST_CASE("a tau above 1 empties the optimized set") {
  const TargetCase tc = fixture_case();
  const auto specs = evaluator_specs();
  const auto p_init = make_inits(tc, 3, 42);
  Tau tau;
  tau.query = tc.question;
  tau.value = 1.5;  // no cosine aggregate can exceed this
  const auto p_opt = optimize_malicious(p_init, tc, {compliant("qwen-mock", 1)},
                                        TemplateRegistry::builtin().ag_templates(), specs,
                                        compliant("checker", 7), 5, tau, 99);
  CHECK(p_opt.empty());
}

TEST_CASE("rewrites that leak the correct answer are rejected by the generation gate") {
  const TargetCase tc = fixture_case();
  const auto specs = evaluator_specs();
  const auto p_init = make_inits(tc, 3, 42);
  std::vector<std::string> init_texts;
  for (const auto& c : p_init) init_texts.push_back(c.text);
  const Tau tau = compute_tau(tc.question, init_texts, specs, 77);

  // Every rewrite embeds both R and O; the context-following checker then
  // answers with both, so the O-exclusion clause rejects the candidate.
  const auto leaky = scripted(
      {{"The original sentence is",
        "when were the lantern chronicles written? They appeared in 1935, not 1926.", false}});
  AttackTrace trace;
  const auto p_opt = optimize_malicious(p_init, tc, {leaky},
                                        TemplateRegistry::builtin().ag_templates(), specs,
                                        compliant("checker", 7), 3, tau, 99, {}, &trace);
  CHECK(p_opt.empty());
  for (const auto& rec : trace) {
    if (rec.error.empty()) CHECK_FALSE(rec.gen_ok);
  }
}

TEST_CASE("optimization is deterministic for a fixed seed") {
  const TargetCase tc = fixture_case();
  const auto specs = evaluator_specs();
  const std::vector<GeneratorSpec> gens{compliant("qwen-mock", 1), compliant("gpt-mock", 2)};
  const auto p_init = make_inits(tc, 4, 42);
  std::vector<std::string> init_texts;
  for (const auto& c : p_init) init_texts.push_back(c.text);
  const Tau tau = compute_tau(tc.question, init_texts, specs, 77);

  const auto a = optimize_malicious(p_init, tc, gens, TemplateRegistry::builtin().ag_templates(),
                                    specs, compliant("checker", 7), 4, tau, 5);
  const auto b = optimize_malicious(p_init, tc, gens, TemplateRegistry::builtin().ag_templates(),
                                    specs, compliant("checker", 7), 4, tau, 5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].text == b[i].text);
}

TEST_CASE("raising tau never enlarges the accepted set (chain off)") {
  const TargetCase tc = fixture_case();
  const auto specs = evaluator_specs();
  const std::vector<GeneratorSpec> gens{compliant("qwen-mock", 1)};
  const auto p_init = make_inits(tc, 3, 42);
  std::vector<std::string> init_texts;
  for (const auto& c : p_init) init_texts.push_back(c.text);
  Tau tau = compute_tau(tc.question, init_texts, specs, 77);

  OptimizeOptions options;
  options.chain = false;  // keeps the rewrite stream identical across gates
  std::size_t previous = SIZE_MAX;
  for (double offset : {0.0, 0.05, 0.12}) {
    Tau raised = tau;
    raised.value = tau.value + offset;
    const auto p_opt = optimize_malicious(p_init, tc, gens,
                                          TemplateRegistry::builtin().ag_templates(), specs,
                                          compliant("checker", 7), 4, raised, 5, options);
    CHECK(p_opt.size() <= previous);
    previous = p_opt.size();
  }
}

TEST_CASE("strict lower-bound policy gates against the per-input concat similarity") {
  const TargetCase tc = fixture_case();
  const auto specs = evaluator_specs();
  const std::vector<GeneratorSpec> gens{compliant("qwen-mock", 1)};
  const auto p_init = make_inits(tc, 2, 42);

  OptimizeOptions options;
  options.chain = false;
  options.policy = GatePolicy::strict_lower_bound;
  Tau unused;
  unused.value = 2.0;  // must be ignored under the strict policy
  AttackTrace trace;
  const auto p_opt = optimize_malicious(p_init, tc, gens,
                                        TemplateRegistry::builtin().ag_templates(), specs,
                                        compliant("checker", 7), 3, unused, 5, options, &trace);
  for (const auto& rec : trace) {
    if (!rec.evaluator) continue;
    const double bound =
        evaluator_score(tc.question + " " + rec.input_text, tc.question, specs).aggregate;
    CHECK(rec.sim_ok == (rec.evaluator->aggregate >= bound));
  }
  CHECK(!p_opt.empty());  // rewrites clear the init-text bound
}

TEST_CASE("selection takes the top-N by aggregate with stable ties") {
  const TargetCase tc = fixture_case();
  auto cand = [&](const std::string& text, double aggregate) {
    AdversarialCandidate c;
    c.text = text;
    c.case_id = tc.qid;
    EvaluatorScore s;
    s.aggregate = aggregate;
    c.evaluator = s;
    return c;
  };
  const std::vector<AdversarialCandidate> pool{
      cand("a", 0.91), cand("b", 0.91), cand("c", 0.95), cand("d", 0.70), cand("e", 0.80),
      cand("f", 0.60), cand("g", 0.99), cand("h", 0.40)};
  const auto sel = select_injection_set(pool, tc, evaluator_specs(), 5);
  REQUIRE(sel.texts.size() == 5);
  CHECK_FALSE(sel.shortfall);
  CHECK(sel.texts[0] == "g");
  CHECK(sel.texts[1] == "c");
  CHECK(sel.texts[2] == "a");  // tie with "b": earlier lineage order wins
  CHECK(sel.texts[3] == "b");
  CHECK(sel.texts[4] == "e");
}

TEST_CASE("selection flags shortfalls and tolerates an empty pool") {
  const TargetCase tc = fixture_case();
  AdversarialCandidate c;
  c.text = "only";
  EvaluatorScore s;
  s.aggregate = 0.5;
  c.evaluator = s;
  const auto sel = select_injection_set({c, c, c}, tc, evaluator_specs(), 5);
  CHECK(sel.texts.size() == 3);
  CHECK(sel.shortfall);

  const auto empty = select_injection_set({}, tc, evaluator_specs(), 5);
  CHECK(empty.texts.empty());
  CHECK(empty.shortfall);
}
