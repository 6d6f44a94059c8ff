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

#include <fstream>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ragpoison/errors.hpp"
#include "ragpoison/rng.hpp"
#include "ragpoison/text.hpp"

namespace ragpoison {

/// One knowledge-base entry. `poisoned` is ground truth for metrics only;
/// retrieval and generation never see it.
struct Document {
  std::string doc_id;
  std::string title;
  std::string text;
  bool poisoned = false;
};

enum class CorpusFormat { beir_jsonl };

/// Immutable, ordered collection of documents. Injection produces a child
/// snapshot; the parent is never touched, so snapshots are safe to share
/// across threads.
class CorpusSnapshot {
 public:
  CorpusSnapshot() = default;
  CorpusSnapshot(std::string snapshot_id, std::vector<Document> documents,
                 std::optional<std::string> parent_id = std::nullopt)
      : snapshot_id_(std::move(snapshot_id)),
        documents_(std::move(documents)),
        parent_id_(std::move(parent_id)) {}

  const std::string& snapshot_id() const { return snapshot_id_; }
  const std::optional<std::string>& parent_id() const { return parent_id_; }
  const std::vector<Document>& documents() const { return documents_; }
  std::size_t size() const { return documents_.size(); }

 private:
  std::string snapshot_id_;
  std::vector<Document> documents_;
  std::optional<std::string> parent_id_;
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

inline std::string snapshot_id_for(const std::vector<Document>& docs,
                                   const std::optional<std::string>& parent) {
  std::uint64_t h = fnv1a("ragpoison.snapshot");
  if (parent) h = fnv1a_combine(h, *parent);
  for (const auto& d : docs) {
    h = fnv1a_combine(h, d.doc_id);
    h = fnv1a_combine(h, d.text);
    h = fnv1a_combine(h, d.poisoned ? "1" : "0");
  }
  return "snap-" + hex64(h);
}

}  // namespace detail

/// Loads a BEIR-style JSONL corpus: one object per line with string `_id`,
/// optional `title`, and non-empty `text`. Order is preserved; blank lines
/// are skipped.
inline CorpusSnapshot ingest_corpus(const std::string& path,
                                    CorpusFormat format = CorpusFormat::beir_jsonl) {
  if (format != CorpusFormat::beir_jsonl) {
    throw ConfigError("unsupported corpus format");
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);

  std::vector<Document> docs;
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
      throw ParseError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("_id") || !rec["_id"].is_string() ||
        !rec.contains("text") || !rec["text"].is_string()) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": record must have string `_id` and `text`");
    }
    Document d;
    d.doc_id = rec["_id"].get<std::string>();
    d.title = rec.value("title", std::string{});
    d.text = rec["text"].get<std::string>();
    d.poisoned = rec.value("poisoned", false);
    if (trim(d.text).empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty `text` for id \"" +
                       d.doc_id + "\"");
    }
    if (!seen.insert(d.doc_id).second) {
      throw DuplicateIdError("duplicate `_id` \"" + d.doc_id + "\" at line " +
                             std::to_string(line_no));
    }
    docs.push_back(std::move(d));
  }
  std::string id = detail::snapshot_id_for(docs, std::nullopt);
  return CorpusSnapshot(std::move(id), std::move(docs));
}

/// Appends `texts` as poisoned documents with ids `<id_prefix>-<ordinal>`
/// (1-based) and returns the child snapshot. The parent is unchanged.
inline CorpusSnapshot inject(const CorpusSnapshot& snapshot,
                             const std::vector<std::string>& texts,
                             const std::string& id_prefix) {
  std::unordered_set<std::string> seen;
  for (const auto& d : snapshot.documents()) seen.insert(d.doc_id);

  std::vector<Document> docs = snapshot.documents();
  docs.reserve(docs.size() + texts.size());
  std::size_t ordinal = 0;
  for (const auto& t : texts) {
    ++ordinal;
    if (trim(t).empty()) {
      throw ValidationError("injected text #" + std::to_string(ordinal) + " is empty");
    }
    Document d;
    d.doc_id = id_prefix + "-" + std::to_string(ordinal);
    d.text = t;
    d.poisoned = true;
    if (!seen.insert(d.doc_id).second) {
      throw DuplicateIdError("injected id \"" + d.doc_id + "\" collides with an existing document");
    }
    docs.push_back(std::move(d));
  }
  std::string id = detail::snapshot_id_for(docs, snapshot.snapshot_id());
  return CorpusSnapshot(std::move(id), std::move(docs), snapshot.snapshot_id());
}

/// Persists a snapshot as JSONL (with `poisoned` flags) plus a sidecar
/// `<path>.manifest.json` holding the snapshot id and lineage.
inline void save_snapshot(const CorpusSnapshot& snapshot, const std::string& data_path) {
  std::ofstream out(data_path);
  if (!out) throw IoError("cannot write snapshot file: " + data_path);
  for (const auto& d : snapshot.documents()) {
    nlohmann::json rec{{"_id", d.doc_id}, {"title", d.title}, {"text", d.text},
                       {"poisoned", d.poisoned}};
    out << rec.dump() << '\n';
  }
  nlohmann::json manifest{{"snapshot_id", snapshot.snapshot_id()},
                          {"count", snapshot.size()}};
  if (snapshot.parent_id()) manifest["parent_id"] = *snapshot.parent_id();
  std::ofstream mout(data_path + ".manifest.json");
  if (!mout) throw IoError("cannot write snapshot manifest for: " + data_path);
  mout << manifest.dump(2) << '\n';
}

/// Loads a snapshot persisted by save_snapshot. Falls back to a content
/// hash id when the sidecar manifest is missing.
inline CorpusSnapshot load_snapshot(const std::string& data_path) {
  CorpusSnapshot base = ingest_corpus(data_path);
  std::ifstream min(data_path + ".manifest.json");
  if (!min) return base;
  nlohmann::json manifest;
  try {
    min >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid snapshot manifest: ") + e.what());
  }
  std::optional<std::string> parent;
  if (manifest.contains("parent_id")) parent = manifest["parent_id"].get<std::string>();
  return CorpusSnapshot(manifest.value("snapshot_id", base.snapshot_id()),
                        base.documents(), parent);
}

}  // namespace ragpoison
