/*
 * Copyright 2026 The cbdebug Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cctype>
#include <cstdlib>
#include <string>

#include "cbdebug/error.h"
#include "cbdebug/feedback.h"
#include "cbdebug/io.h"
#include "httplib.h"
#include "json.hpp"

namespace cbdebug {
namespace {

using nlohmann::json;

constexpr char kPlaceholder[] = "{classification_task_description}";

std::string Upper(std::string s) {
  for (char& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return s;
}

std::string TrimRight(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.pop_back();
  }
  return s;
}

// Consumes `word` at `pos` if it is a whole word.
bool TakeWord(const std::string& s, size_t& pos, const std::string& word) {
  if (s.compare(pos, word.size(), word) != 0) return false;
  const size_t end = pos + word.size();
  if (end < s.size() && (std::isalnum(static_cast<unsigned char>(s[end])) ||
                         s[end] == '_')) {
    return false;
  }
  pos = end;
  return true;
}

struct Url {
  std::string scheme_host_port;
  std::string path_prefix;
};

Url SplitUrl(const std::string& base) {
  const size_t scheme = base.find("://");
  if (scheme == std::string::npos) {
    throw ConfigError("llm_url", "expected scheme://host[:port][/path], got '" +
                                     base + "'");
  }
  const size_t slash = base.find('/', scheme + 3);
  Url u;
  u.scheme_host_port = base.substr(0, slash);
  u.path_prefix = slash == std::string::npos ? "" : base.substr(slash);
  while (!u.path_prefix.empty() && u.path_prefix.back() == '/') {
    u.path_prefix.pop_back();
  }
  return u;
}

}  // namespace

LlmEndpointConfig LlmEndpointConfig::FromEnv() {
  LlmEndpointConfig c;
  if (const char* url = std::getenv("CBDEBUG_LLM_URL")) c.base_url = url;
  if (const char* key = std::getenv("CBDEBUG_LLM_KEY")) c.api_key = key;
  return c;
}

const std::string& SystemPromptTemplate() {
  static const std::string* kTemplate = new std::string(
      "You are a helpful assistant that classifies visual concepts as either "
      "SPURIOUS or NOT SPURIOUS.\n"
      "\n"
      "The classification task is: {classification_task_description}\n"
      "\n"
      "A concept is considered SPURIOUS if:\n"
      "1. It is NOT a physical or anatomical attribute of the object itself.\n"
      "2. It may correlate with the label due to dataset bias (e.g., "
      "background scenery or co-occurring objects), but is not causally "
      "related to the object's identity.\n"
      "\n"
      "Respond only with SPURIOUS or NOT SPURIOUS and a brief justification.");
  return *kTemplate;
}

std::string SystemPrompt(const std::string& task_description) {
  std::string out = SystemPromptTemplate();
  const size_t at = out.find(kPlaceholder);
  out.replace(at, sizeof(kPlaceholder) - 1, task_description);
  return out;
}

std::string TaskDescription(const std::string& dataset) {
  if (dataset == "waterbirds") {
    return "distinguish between WATERBIRDS and LANDBIRDS.";
  }
  if (dataset == "metashift") {
    return "distinguish between common animal categories such as CATS and "
           "DOGS.";
  }
  if (dataset == "celeba") {
    return "distinguish between people with BLONDE HAIR and DARK HAIR.";
  }
  throw ValidationError("no task description for dataset '" + dataset + "'");
}

std::string LoadPromptFile(const std::string& path) {
  return TrimRight(ReadFile(path));
}

Verdict ParseVerdict(const std::string& reply) {
  const std::string s = Upper(reply);
  size_t pos = 0;
  while (pos < s.size() && (std::isspace(static_cast<unsigned char>(s[pos])) ||
                            s[pos] == '*' || s[pos] == '"' || s[pos] == '\'' ||
                            s[pos] == '`')) {
    ++pos;
  }
  size_t p = pos;
  if (s.compare(p, 3, "NOT") == 0 && p + 3 < s.size() &&
      (s[p + 3] == ' ' || s[p + 3] == '_' || s[p + 3] == '-')) {
    p += 3;
    while (p < s.size() && (s[p] == ' ' || s[p] == '_' || s[p] == '-')) ++p;
    return TakeWord(s, p, "SPURIOUS") ? Verdict::kNotSpurious
                                      : Verdict::kAbstain;
  }
  p = pos;
  return TakeWord(s, p, "SPURIOUS") ? Verdict::kSpurious : Verdict::kAbstain;
}

FeedbackSet LlmOracle(const std::vector<NamedConcept>& concepts,
                      const std::string& task_description,
                      const LlmEndpointConfig& endpoint,
                      std::vector<std::string>* warnings) {
  if (endpoint.base_url.empty()) {
    throw ConfigError("llm_url", "no endpoint configured (CBDEBUG_LLM_URL)");
  }
  std::vector<NamedConcept> ordered = concepts;
  std::sort(ordered.begin(), ordered.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (const auto& c : ordered) {
    if (c.name.empty()) {
      throw ValidationError("concept " + std::to_string(c.id) +
                            " has no display name");
    }
  }
  const Url url = SplitUrl(endpoint.base_url);
  httplib::Client client(url.scheme_host_port);
  client.set_connection_timeout(endpoint.timeout_seconds, 0);
  client.set_read_timeout(endpoint.timeout_seconds, 0);
  httplib::Headers headers;
  if (!endpoint.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + endpoint.api_key);
  }
  const std::string system = SystemPrompt(task_description);

  FeedbackSet fb;
  fb.source = FeedbackSource::kLlmOracle;
  fb.created_at = NowIso8601();
  for (const auto& c : ordered) {
    const json body = {
        {"model", endpoint.model},
        {"temperature", 0},
        {"messages",
         json::array({{{"role", "system"}, {"content", system}},
                      {{"role", "user"}, {"content", c.name}}})}};
    auto res = client.Post(url.path_prefix + "/chat/completions", headers,
                           body.dump(), "application/json");
    if (!res) {
      throw RetriableError(c.id, "request failed: " +
                                     httplib::to_string(res.error()));
    }
    if (res->status == 429 || res->status >= 500) {
      throw RetriableError(c.id, "endpoint returned HTTP " +
                                     std::to_string(res->status));
    }
    if (res->status != 200) {
      throw Error("concept " + std::to_string(c.id) +
                  ": endpoint returned HTTP " + std::to_string(res->status));
    }
    std::string content;
    bool parsed = false;
    try {
      const json reply = json::parse(res->body);
      content = reply.at("choices").at(0).at("message").at("content");
      parsed = true;
    } catch (const json::exception&) {
    }
    ConceptVerdict v;
    v.justification = content;
    v.verdict = parsed ? ParseVerdict(content) : Verdict::kAbstain;
    if (v.verdict == Verdict::kAbstain && warnings != nullptr) {
      warnings->push_back("concept " + std::to_string(c.id) + " (" + c.name +
                          "): unparseable reply, treated as not spurious");
    }
    if (v.verdict == Verdict::kSpurious) fb.c_spur.insert(c.id);
    fb.verdicts[c.id] = std::move(v);
  }
  return fb;
}

}  // namespace cbdebug
