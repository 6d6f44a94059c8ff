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

#include <cmath>

#include <ragpoison/embedding.hpp>
#include <ragpoison/rng.hpp>

using namespace ragpoison;

namespace {

EmbedderSpec mock_spec(const std::string& id = "retriever-a", int dim = 256) {
  EmbedderSpec spec;
  spec.retriever_id = id;
  spec.backend = EmbedBackend::mock_hash;
  spec.dim = dim;
  return spec;
}

EmbeddingVector vec(std::vector<double> v) { return EmbeddingVector{std::move(v)}; }

}  // namespace

TEST_CASE("cosine similarity on hand-built vectors") {
  CHECK(cosine_similarity(vec({1, 0}), vec({1, 0})) == Catch::Approx(1.0).margin(1e-12));
  CHECK(cosine_similarity(vec({1, 0}), vec({0, 1})) == Catch::Approx(0.0).margin(1e-12));
  CHECK(cosine_similarity(vec({1, 1}), vec({1, 0})) ==
        Catch::Approx(0.7071067811865475).margin(1e-9));
}

TEST_CASE("cosine similarity is symmetric and 1 on itself") {
  const auto a = vec({0.3, -1.2, 4.0});
  const auto b = vec({2.0, 0.5, -0.25});
  CHECK(cosine_similarity(a, b) == Catch::Approx(cosine_similarity(b, a)).margin(1e-15));
  CHECK(cosine_similarity(a, a) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("cosine similarity rejects zero vectors and dim mismatches") {
  CHECK_THROWS_AS(cosine_similarity(vec({0, 0}), vec({1, 0})), UndefinedMetricError);
  CHECK_THROWS_AS(cosine_similarity(vec({1, 0, 0}), vec({1, 0})), ContractError);
}

TEST_CASE("dot similarity on hand-built vectors") {
  CHECK(dot_similarity(vec({2, 0}), vec({3, 0})) == Catch::Approx(6.0).margin(1e-12));
  CHECK(dot_similarity(vec({1, 0}), vec({0, 1})) == Catch::Approx(0.0).margin(1e-12));
  CHECK_THROWS_AS(dot_similarity(vec({1}), vec({1, 2})), ContractError);
}

TEST_CASE("dot equals cosine for unit vectors") {
  const double inv = 1.0 / std::sqrt(2.0);
  const auto u = vec({inv, inv});
  const auto v = vec({1.0, 0.0});
  CHECK(dot_similarity(u, v) == Catch::Approx(cosine_similarity(u, v)).margin(1e-12));
}

TEST_CASE("property: cosine(a,b) == dot(a,b)/(|a||b|) on random vectors") {
  SplitMix64 stream(99);
  for (int round = 0; round < 50; ++round) {
    std::vector<double> a(8), b(8);
    for (auto& x : a) x = stream.next_gaussian();
    for (auto& x : b) x = stream.next_gaussian();
    const auto va = vec(a);
    const auto vb = vec(b);
    const double expected = dot_similarity(va, vb) / (l2_norm(va) * l2_norm(vb));
    CHECK(cosine_similarity(va, vb) == Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("mock embedder is deterministic") {
  const auto spec = mock_spec();
  const auto v1 = embed(spec, "alpha beta");
  const auto v2 = embed(spec, "alpha beta");
  REQUIRE(v1.dim() == 256);
  CHECK(v1.values == v2.values);
}

TEST_CASE("mock embedder emits unit-norm vectors") {
  const auto spec = mock_spec();
  for (const char* text : {"one token", "a longer text with several words", "x", "!!!"}) {
    CHECK(l2_norm(embed(spec, text)) == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("token multiplicity does not change direction") {
  const auto spec = mock_spec();
  const auto once = embed(spec, "alpha");
  const auto twice = embed(spec, "alpha alpha");
  CHECK(cosine_similarity(once, twice) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("tokenization is case-insensitive and splits punctuation runs") {
  const auto spec = mock_spec();
  const auto a = embed(spec, "Alpha, BETA!");
  const auto b = embed(spec, "alpha beta");
  CHECK(cosine_similarity(a, b) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("disjoint token sets are near-orthogonal on the fixture vocabulary") {
  const auto spec = mock_spec();
  const std::vector<std::string> texts{
      "red green blue crimson",         "quantum physics lecture notes",
      "maple syrup pancake breakfast",  "violin sonata orchestra concert",
      "glacier mountain summit trail",  "harbor lighthouse sailing vessel",
  };
  // brute force over all pairs: disjoint vocabularies must stay below 0.2
  for (std::size_t i = 0; i < texts.size(); ++i) {
    for (std::size_t j = i + 1; j < texts.size(); ++j) {
      const double cos = cosine_similarity(embed(spec, texts[i]), embed(spec, texts[j]));
      INFO(texts[i] << " vs " << texts[j]);
      CHECK(std::abs(cos) < 0.2);
    }
  }
}

TEST_CASE("different retriever ids give different token directions") {
  const auto a = embed(mock_spec("retriever-a"), "shared vocabulary text");
  const auto b = embed(mock_spec("retriever-b"), "shared vocabulary text");
  CHECK(std::abs(cosine_similarity(a, b)) < 0.5);
}

TEST_CASE("embed rejects empty text") {
  CHECK_THROWS_AS(embed(mock_spec(), ""), ValidationError);
}

TEST_CASE("embed_batch preserves order") {
  const auto spec = mock_spec();
  const auto batch = embed_batch(spec, {"first text", "second text"});
  REQUIRE(batch.size() == 2);
  CHECK(batch[0].values == embed(spec, "first text").values);
  CHECK(batch[1].values == embed(spec, "second text").values);
}

TEST_CASE("weights must sum to one") {
  std::vector<EmbedderSpec> specs{mock_spec("a"), mock_spec("b")};
  specs[0].weight = 0.6;
  specs[1].weight = 0.6;
  CHECK_THROWS_AS(validate_weights(specs), ConfigError);
  specs[1].weight = 0.4;
  CHECK_NOTHROW(validate_weights(specs));
  CHECK_THROWS_AS(validate_weights({}), ConfigError);
}
