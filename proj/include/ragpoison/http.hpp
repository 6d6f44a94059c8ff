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

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ragpoison/errors.hpp"

namespace ragpoison {

/// Transport settings shared by the embeddings, chat and scorer endpoints.
/// Credentials come from the environment variable named in `api_key_env`;
/// the value itself is never logged or persisted.
struct HttpOptions {
  int timeout_ms = 30000;
  int retries = 2;        // additional attempts after the first
  int backoff_ms = 200;   // doubled after each failed attempt
  int max_in_flight = 4;  // concurrent requests per endpoint
  std::string api_key_env;

  friend bool operator==(const HttpOptions&, const HttpOptions&) = default;
};

namespace detail {

class Semaphore {
 public:
  explicit Semaphore(int count) : count_(count) {}
  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return count_ > 0; });
    --count_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      ++count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int count_;
};

/// One semaphore per endpoint base URL; the limit is fixed by the first
/// caller for that endpoint.
inline std::shared_ptr<Semaphore> endpoint_semaphore(const std::string& base, int limit) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<Semaphore>> registry;
  std::lock_guard lock(mu);
  auto it = registry.find(base);
  if (it == registry.end()) {
    it = registry.emplace(base, std::make_shared<Semaphore>(limit)).first;
  }
  return it->second;
}

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // leading '/'
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint URL must include a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

/// POSTs a JSON body and returns the parsed JSON response. Retries
/// connection failures and 5xx responses with exponential backoff; any
/// other non-200 status is an immediate transport error.
inline nlohmann::json post_json(const std::string& url, const nlohmann::json& body,
                                const HttpOptions& options = {}) {
  const auto split = detail::split_url(url);
  auto sem = detail::endpoint_semaphore(split.base, options.max_in_flight);
  sem->acquire();
  struct Release {
    detail::Semaphore* s;
    ~Release() { s->release(); }
  } release{sem.get()};

  httplib::Client client(split.base);
  client.set_connection_timeout(std::chrono::milliseconds(options.timeout_ms));
  client.set_read_timeout(std::chrono::milliseconds(options.timeout_ms));
  client.set_write_timeout(std::chrono::milliseconds(options.timeout_ms));

  httplib::Headers headers;
  if (!options.api_key_env.empty()) {
    if (const char* key = std::getenv(options.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  const std::string payload = body.dump();
  std::string last_failure;
  int backoff = options.backoff_ms;
  for (int attempt = 0; attempt <= options.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
    auto res = client.Post(split.path, headers, payload, "application/json");
    if (!res) {
      last_failure = "connection failure (" + httplib::to_string(res.error()) + ")";
      continue;
    }
    if (res->status >= 500) {
      last_failure = "server status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw TransportError("POST " + url + " returned status " + std::to_string(res->status));
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw TransportError("POST " + url + " returned unparseable JSON: " + e.what());
    }
  }
  throw TransportError("POST " + url + " failed after " + std::to_string(options.retries + 1) +
                       " attempts: " + last_failure);
}

}  // namespace ragpoison
