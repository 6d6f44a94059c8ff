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

#include <string>
#include <vector>

#include <ragpoison/defenses.hpp>

using namespace ragpoison;

namespace {

EmbedderSpec mock_spec() {
  EmbedderSpec s;
  s.retriever_id = "defense-embedder";
  s.backend = EmbedBackend::mock_hash;
  s.dim = 256;
  return s;
}

std::vector<Document> docs_of(std::vector<std::string> texts) {
  std::vector<Document> docs;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    docs.push_back({"d" + std::to_string(i), "", std::move(texts[i]), false});
  }
  return docs;
}

std::vector<std::string> ids_of(const std::vector<Document>& docs) {
  std::vector<std::string> ids;
  for (const auto& d : docs) ids.push_back(d.doc_id);
  return ids;
}

}  // namespace

TEST_CASE("paraphrase_query returns the scripted restatement") {
  GeneratorSpec g;
  g.backend = GenBackend::mock_scripted;
  g.script = {{"Rephrase", "X is located where?", false}};
  CHECK(paraphrase_query("where is X?", g) == "X is located where?");
}

TEST_CASE("paraphrase_query with an identity generator returns the question unchanged") {
  GeneratorSpec g;
  g.backend = GenBackend::mock_compliant;
  CHECK(paraphrase_query("where is X?", g) == "where is X?");
}

TEST_CASE("paraphrase_query rejects empty outputs and empty questions") {
  GeneratorSpec g;
  g.backend = GenBackend::mock_scripted;
  g.script = {{"Rephrase", "   ", false}};
  CHECK_THROWS_AS(paraphrase_query("where is X?", g), DefenseError);
  CHECK_THROWS_AS(paraphrase_query("  ", g), ValidationError);
}

TEST_CASE("perplexity filter keeps docs at or below the threshold, in order") {
  // In-vocabulary text scores low, unseen vocabulary scores high; the
  // threshold is placed between the measured values.
  const std::vector<std::string> corpus{
      "the lantern keeper walks the harbor wall at dusk",
      "the lantern keeper walks the harbor wall at dawn",
      "the harbor wall shelters the fishing boats at night"};
  const PerplexityScorer scorer = train_ngram(corpus, 2, 0.5);

  const auto docs = docs_of({"the lantern keeper walks the harbor wall at dusk",
                             "zyx qwv jjk plo vrb nmt",
                             "the harbor wall shelters the lantern keeper"});
  const double p0 = scorer.perplexity(docs[0].text);
  const double p1 = scorer.perplexity(docs[1].text);
  const double p2 = scorer.perplexity(docs[2].text);
  REQUIRE(p0 < p2);
  REQUIRE(p2 < p1);

  const double threshold = (p2 + p1) / 2.0;  // keeps docs 0 and 2
  FilterTrace trace;
  const auto kept = perplexity_filter(docs, scorer, threshold, &trace);
  CHECK(ids_of(kept) == std::vector<std::string>{"d0", "d2"});
  CHECK(trace.removed_ids == std::vector<std::string>{"d1"});
  CHECK(trace.flagged_ids.empty());
}

TEST_CASE("perplexity filter edge thresholds") {
  const PerplexityScorer scorer = train_ngram({"alpha beta gamma"}, 1, 0.5);
  const auto docs = docs_of({"alpha beta", "gamma alpha"});
  CHECK(perplexity_filter(docs, scorer, 1e-6, nullptr).empty());
  CHECK(perplexity_filter(docs, scorer, 1e18, nullptr).size() == 2);
  CHECK_THROWS_AS(perplexity_filter(docs, scorer, 0.0, nullptr), ValidationError);
}

TEST_CASE("perplexity filter fails open when the scorer breaks") {
  HttpOptions http;
  http.retries = 0;
  http.timeout_ms = 200;
  const PerplexityScorer broken = PerplexityScorer::http("http://127.0.0.1:9/score", http);
  const auto docs = docs_of({"some text", "other text"});
  FilterTrace trace;
  const auto kept = perplexity_filter(docs, broken, 50.0, &trace);
  CHECK(kept.size() == 2);
  CHECK(trace.flagged_ids == std::vector<std::string>{"d0", "d1"});
  CHECK(trace.removed_ids.empty());
}

TEST_CASE("perplexity filter is idempotent") {
  const PerplexityScorer scorer = train_ngram({"alpha beta gamma delta"}, 1, 0.5);
  const auto docs = docs_of({"alpha beta", "zz yy xx", "gamma delta"});
  const double threshold = scorer.perplexity("zz yy xx") - 0.01;
  const auto once = perplexity_filter(docs, scorer, threshold, nullptr);
  const auto twice = perplexity_filter(once, scorer, threshold, nullptr);
  CHECK(ids_of(once) == ids_of(twice));
}

TEST_CASE("duplicate filter collapses identical texts to one survivor") {
  const auto docs = docs_of({"same text here", "same text here", "same text here",
                             "same text here", "same text here"});
  const auto kept = duplicate_filter(docs, mock_spec(), 0.9, nullptr);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].doc_id == "d0");
}

TEST_CASE("duplicate filter keeps pairwise-distant texts") {
  const auto docs = docs_of({"red green blue crimson", "quantum physics lecture notes",
                             "maple syrup pancake breakfast"});
  const auto kept = duplicate_filter(docs, mock_spec(), 0.9, nullptr);
  CHECK(kept.size() == 3);
}

TEST_CASE("duplicate filter drops exactly the near-duplicate of an earlier doc") {
  // Only (d0, d1) exceed theta; d2 is unrelated.
  const auto docs = docs_of({"the lantern chronicles were written in the harbor town archive",
                             "the lantern chronicles were written in the harbor town library",
                             "glacier mountain summit trail report"});
  const auto spec = mock_spec();
  const double c01 = cosine_similarity(embed(spec, docs[0].text), embed(spec, docs[1].text));
  const double c02 = cosine_similarity(embed(spec, docs[0].text), embed(spec, docs[2].text));
  const double c12 = cosine_similarity(embed(spec, docs[1].text), embed(spec, docs[2].text));
  REQUIRE(c01 >= 0.9);
  REQUIRE(c02 < 0.9);
  REQUIRE(c12 < 0.9);

  FilterTrace trace;
  const auto kept = duplicate_filter(docs, spec, 0.9, &trace);
  CHECK(ids_of(kept) == std::vector<std::string>{"d0", "d2"});
  CHECK(trace.removed_ids == std::vector<std::string>{"d1"});
}

TEST_CASE("duplicate filter validates theta") {
  const auto docs = docs_of({"a b"});
  CHECK_THROWS_AS(duplicate_filter(docs, mock_spec(), 0.0, nullptr), ValidationError);
  CHECK_THROWS_AS(duplicate_filter(docs, mock_spec(), 1.5, nullptr), ValidationError);
  CHECK_NOTHROW(duplicate_filter(docs, mock_spec(), 1.0, nullptr));
}

TEST_CASE("duplicate filter is idempotent and leaves no redundant pair behind") {
  const auto spec = mock_spec();
  const auto docs = docs_of({"the lantern chronicles were written in 1935 record one",
                             "the lantern chronicles were written in 1935 record two",
                             "harbor lighthouse sailing vessel notes",
                             "the lantern chronicles were written in 1935 record three",
                             "quantum physics lecture notes"});
  const double theta = 0.9;
  const auto once = duplicate_filter(docs, spec, theta, nullptr);
  const auto twice = duplicate_filter(once, spec, theta, nullptr);
  CHECK(ids_of(once) == ids_of(twice));
  for (std::size_t i = 0; i < once.size(); ++i) {
    for (std::size_t j = i + 1; j < once.size(); ++j) {
      CHECK(cosine_similarity(embed(spec, once[i].text), embed(spec, once[j].text)) < theta);
    }
  }
}

TEST_CASE("lowering theta never increases the survivor count") {
  const auto spec = mock_spec();
  const auto docs = docs_of({"the lantern chronicles were written in 1935 record one",
                             "the lantern chronicles were written in 1935 record two",
                             "the lantern chronicles appeared in print in 1935 once more",
                             "harbor lighthouse sailing vessel notes",
                             "quantum physics lecture notes",
                             "maple syrup pancake breakfast"});
  std::size_t previous = docs.size() + 1;
  for (double theta : {0.95, 0.8, 0.5, 0.2}) {
    const auto kept = duplicate_filter(docs, spec, theta, nullptr);
    CHECK(kept.size() <= previous);
    previous = kept.size();
  }
}

TEST_CASE("expand_k returns the expanded value and validates bounds") {
  CHECK(expand_k(5, 10) == 10);
  CHECK(expand_k(5, 5) == 5);
  CHECK_THROWS_AS(expand_k(10, 5), ConfigError);
  CHECK_THROWS_AS(expand_k(0, 5), ValidationError);
}

TEST_CASE("defense configs validate their required parameters") {
  DefenseConfig d;
  d.defense_id = DefenseId::perplexity_filter;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d.ppl_threshold = 50.0;
  CHECK_NOTHROW(d.validate());

  DefenseConfig p;
  p.defense_id = DefenseId::paraphrase;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.paraphrase_generator = GeneratorSpec{};
  CHECK_NOTHROW(p.validate());

  DefenseConfig e;
  e.defense_id = DefenseId::knowledge_expansion;
  CHECK_THROWS_AS(e.validate(), ConfigError);
  e.expanded_k = 10;
  CHECK_NOTHROW(e.validate());

  DefenseConfig dup;
  dup.defense_id = DefenseId::duplicate_filter;
  dup.dup_theta = 0.0;
  CHECK_THROWS_AS(dup.validate(), ConfigError);
}
