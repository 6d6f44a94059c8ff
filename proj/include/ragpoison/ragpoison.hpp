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

#include "ragpoison/attack.hpp"
#include "ragpoison/corpus.hpp"
#include "ragpoison/defenses.hpp"
#include "ragpoison/embedding.hpp"
#include "ragpoison/errors.hpp"
#include "ragpoison/experiment.hpp"
#include "ragpoison/harness.hpp"
#include "ragpoison/http.hpp"
#include "ragpoison/jsonl.hpp"
#include "ragpoison/llm.hpp"
#include "ragpoison/metrics.hpp"
#include "ragpoison/rag_target.hpp"
#include "ragpoison/retrieval.hpp"
#include "ragpoison/rng.hpp"
#include "ragpoison/text.hpp"
