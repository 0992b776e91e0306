#pragma once

// Completion backends: an OpenAI-compatible chat-completions client and a
// fixture-driven replay backend sharing one interface.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <thread>
#include <tuple>

#include "attribeval/error.hpp"
#include "attribeval/http.hpp"
#include "attribeval/io.hpp"
#include "attribeval/text.hpp"

namespace attribeval {

struct ModelConfig {
  std::string model_name;
  std::string endpoint_url;  // base URL; "/chat/completions" is appended
  std::string api_key_env;   // name of the env var holding the bearer token
  int max_tokens = 1200;
  double temperature = 0.0;
  double request_timeout = 120.0;  // seconds
  int max_retries = 2;
  int max_parallel_requests = 4;
  double retry_backoff = 1.0;  // seconds before the first retry, doubled each time
  // "http" or "replay".
  std::string backend = "http";
  // Replay: fixture to read. Http: if set, every response is captured here.
  std::string fixture;

  bool operator==(const ModelConfig&) const = default;
};

inline void validate(const ModelConfig& c) {
  if (c.model_name.empty()) throw UsageError("model_name is empty");
  if (c.max_tokens < 1) throw UsageError(c.model_name + ": max_tokens must be >= 1");
  if (!(c.temperature >= 0.0)) throw UsageError(c.model_name + ": temperature must be >= 0");
  if (c.max_parallel_requests < 1) throw UsageError(c.model_name + ": max_parallel_requests must be >= 1");
  if (c.max_retries < 0) throw UsageError(c.model_name + ": max_retries must be >= 0");
  if (!(c.request_timeout > 0.0)) throw UsageError(c.model_name + ": request_timeout must be > 0");
  if (c.backend != "http" && c.backend != "replay") {
    throw UsageError(c.model_name + ": backend must be \"http\" or \"replay\"");
  }
  if (c.backend == "http" && c.endpoint_url.empty()) throw UsageError(c.model_name + ": endpoint_url is empty");
  if (c.backend == "replay" && c.fixture.empty()) throw UsageError(c.model_name + ": replay backend needs a fixture");
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"model_name", c.model_name},
                     {"endpoint_url", c.endpoint_url},
                     {"api_key_env", c.api_key_env},
                     {"max_tokens", c.max_tokens},
                     {"temperature", c.temperature},
                     {"request_timeout", c.request_timeout},
                     {"max_retries", c.max_retries},
                     {"max_parallel_requests", c.max_parallel_requests},
                     {"retry_backoff", c.retry_backoff},
                     {"backend", c.backend},
                     {"fixture", c.fixture}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.model_name = j.at("model_name").get<std::string>();
  c.endpoint_url = j.value("endpoint_url", d.endpoint_url);
  c.api_key_env = j.value("api_key_env", d.api_key_env);
  c.max_tokens = j.value("max_tokens", d.max_tokens);
  c.temperature = j.value("temperature", d.temperature);
  c.request_timeout = j.value("request_timeout", d.request_timeout);
  c.max_retries = j.value("max_retries", d.max_retries);
  c.max_parallel_requests = j.value("max_parallel_requests", d.max_parallel_requests);
  c.retry_backoff = j.value("retry_backoff", d.retry_backoff);
  c.backend = j.value("backend", d.backend);
  c.fixture = j.value("fixture", d.fixture);
}

struct TransportMeta {
  int status = 0;    // HTTP status of the final attempt; 0 for replay
  int attempts = 1;  // HTTP attempts consumed
};

struct CompletionResponse {
  std::string text;
  double latency = 0.0;  // seconds
  TransportMeta transport_meta;
};

// Identifies one prompt issued for one chunk; replay fixtures are keyed on it.
struct RequestKey {
  std::string model_name;
  std::string book_id;
  std::size_t chunk_index = 0;
  int prompt_index = 1;

  auto tie() const { return std::tie(model_name, book_id, chunk_index, prompt_index); }
  bool operator<(const RequestKey& o) const { return tie() < o.tie(); }
  bool operator==(const RequestKey& o) const { return tie() == o.tie(); }

  std::string describe() const {
    return "(" + model_name + ", " + book_id + ", " + std::to_string(chunk_index) + ", " +
           std::to_string(prompt_index) + ")";
  }
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual CompletionResponse complete(const std::string& prompt, const RequestKey& key) = 0;
  // Upper bound on simultaneous complete() calls this backend accepts.
  virtual int max_parallel() const { return 1; }
};

// Recorded responses keyed by (model_name, book_id, chunk_index, prompt_index).
class ReplayFixture {
 public:
  static ReplayFixture load(const std::filesystem::path& path) {
    ReplayFixture f;
    for (const auto& row : io::read_jsonl(path)) {
      RequestKey key{row.at("model_name").get<std::string>(), row.at("book_id").get<std::string>(),
                     row.at("chunk_index").get<std::size_t>(), row.at("prompt_index").get<int>()};
      f.put(key, row.at("text").get<std::string>());
    }
    return f;
  }

  void put(const RequestKey& key, std::string text) {
    std::lock_guard lock(mu_);
    entries_[key] = std::move(text);
  }

  std::optional<std::string> find(const RequestKey& key) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

  // Sorted by key so captures are byte-stable regardless of completion order.
  std::string to_jsonl() const {
    std::lock_guard lock(mu_);
    std::string out;
    for (const auto& [k, text] : entries_) {
      nlohmann::json row{{"model_name", k.model_name},
                         {"book_id", k.book_id},
                         {"chunk_index", k.chunk_index},
                         {"prompt_index", k.prompt_index},
                         {"text", text}};
      out += row.dump();
      out += '\n';
    }
    return out;
  }

  void save(const std::filesystem::path& path) const { io::write_file(path, to_jsonl()); }

  ReplayFixture() = default;
  ReplayFixture(const ReplayFixture& o) : entries_(o.snapshot()) {}
  ReplayFixture& operator=(const ReplayFixture& o) {
    if (this != &o) {
      auto copy = o.snapshot();
      std::lock_guard lock(mu_);
      entries_ = std::move(copy);
    }
    return *this;
  }

 private:
  std::map<RequestKey, std::string> snapshot() const {
    std::lock_guard lock(mu_);
    return entries_;
  }

  mutable std::mutex mu_;
  std::map<RequestKey, std::string> entries_;
};

class ReplayBackend : public Backend {
 public:
  explicit ReplayBackend(ReplayFixture fixture, int parallel = 1)
      : fixture_(std::move(fixture)), parallel_(parallel) {}

  CompletionResponse complete(const std::string& /*prompt*/, const RequestKey& key) override {
    auto text = fixture_.find(key);
    if (!text) throw ReplayError("no recorded response for key " + key.describe());
    CompletionResponse r;
    r.text = *text;
    r.transport_meta = {0, 0};
    return r;
  }

  int max_parallel() const override { return parallel_; }

 private:
  ReplayFixture fixture_;
  int parallel_;
};

// OpenAI-compatible chat completions over HTTP(S).
class HttpBackend : public Backend {
 public:
  using Sleeper = std::function<void(std::chrono::duration<double>)>;

  explicit HttpBackend(ModelConfig config, Sleeper sleeper = {})
      : config_(validated(std::move(config))),
        slots_(config_.max_parallel_requests),
        sleep_(sleeper ? std::move(sleeper)
                       : Sleeper([](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); })) {
    url_ = http::split_url(config_.endpoint_url);
    if (url_.path.ends_with('/')) url_.path.pop_back();
    url_.path += "/chat/completions";
    if (!config_.api_key_env.empty()) {
      if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
    }
  }

  const std::string& request_path() const { return url_.path; }

  nlohmann::json request_body(const std::string& prompt) const {
    return {{"model", config_.model_name},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
            {"max_tokens", config_.max_tokens},
            {"temperature", config_.temperature}};
  }

  CompletionResponse complete(const std::string& prompt, const RequestKey& /*key*/) override {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};

    const std::string body = request_body(prompt).dump();
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    const int max_attempts = 1 + config_.max_retries;
    std::string last_cause;
    int last_status = 0;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
      if (attempt > 1) sleep_(std::chrono::duration<double>(config_.retry_backoff * std::pow(2.0, attempt - 2)));
      auto client = http::make_client(url_, config_.request_timeout);
      auto started = std::chrono::steady_clock::now();
      auto res = client->Post(url_.path, headers, body, "application/json");
      std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;

      if (!res) {
        last_status = 0;
        last_cause = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      last_status = res->status;
      if (res->status >= 200 && res->status < 300) {
        CompletionResponse out;
        out.text = parse_content(res->body, attempt);
        out.latency = elapsed.count();
        out.transport_meta = {res->status, attempt};
        return out;
      }
      last_cause = "HTTP " + std::to_string(res->status) + ": " + server_message(res->body);
      if (!retryable(res->status)) {
        throw BackendError(config_.model_name + ": " + last_cause, res->status, attempt);
      }
    }
    throw BackendError(config_.model_name + ": giving up after " + std::to_string(max_attempts) +
                           " attempts; last error: " + last_cause,
                       last_status, max_attempts);
  }

  int max_parallel() const override { return config_.max_parallel_requests; }

  static ModelConfig validated(ModelConfig c) {
    validate(c);
    return c;
  }

  static bool retryable(int status) { return status == 408 || status == 429 || status >= 500; }

  static std::string server_message(const std::string& body) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (!j.is_discarded() && j.is_object() && j.contains("error")) {
      const auto& e = j["error"];
      if (e.is_object() && e.contains("message") && e["message"].is_string()) return e["message"].get<std::string>();
      if (e.is_string()) return e.get<std::string>();
    }
    return body;
  }

  // choices[0].message.content, concatenating text parts when the server
  // returns structured content; null content is an empty completion.
  static std::string parse_content(const std::string& body, int attempt) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw BackendError("completion response is not JSON", 200, attempt);
    const auto& choices = j.value("choices", nlohmann::json::array());
    if (!choices.is_array() || choices.empty()) throw BackendError("completion response has no choices", 200, attempt);
    const auto& message = choices[0].value("message", nlohmann::json::object());
    const auto content = message.value("content", nlohmann::json());
    std::string text;
    if (content.is_string()) {
      text = content.get<std::string>();
    } else if (content.is_array()) {
      for (const auto& part : content) {
        if (part.is_object() && part.value("type", "") == "text") text += part.value("text", "");
      }
    } else if (!content.is_null()) {
      throw BackendError("completion content has unexpected type", 200, attempt);
    }
    return std::string(text::trim(text));
  }

 private:
  ModelConfig config_;
  http::Url url_;
  std::string api_key_;
  std::counting_semaphore<> slots_;
  Sleeper sleep_;
};

// Forwards to another backend and captures every response into a fixture.
class RecordingBackend : public Backend {
 public:
  RecordingBackend(Backend& inner, ReplayFixture& sink) : inner_(inner), sink_(sink) {}

  CompletionResponse complete(const std::string& prompt, const RequestKey& key) override {
    auto r = inner_.complete(prompt, key);
    sink_.put(key, r.text);
    return r;
  }

  int max_parallel() const override { return inner_.max_parallel(); }

 private:
  Backend& inner_;
  ReplayFixture& sink_;
};

}  // namespace attribeval
