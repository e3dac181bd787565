#pragma once

// Chat-completion access for target, converter and judge models: backend
// routing by model id, bounded in-flight calls per backend, retry with
// exponential backoff, and a content-addressed disk cache.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "fmtbias/error.hpp"
#include "fmtbias/hashing.hpp"

namespace fmtbias {

using json = nlohmann::json;

enum class Role { System, User };

inline std::string_view to_string(Role r) noexcept { return r == Role::System ? "system" : "user"; }

struct Message {
  Role role = Role::User;
  std::string content;
};

// Evaluation and Filter traffic must run at temperature 0.
enum class Purpose { Evaluation, Filter, Conversion, Judge };

inline constexpr bool requires_zero_temperature(Purpose p) noexcept {
  return p == Purpose::Evaluation || p == Purpose::Filter;
}

struct CompletionRequest {
  std::string model_id;
  std::vector<Message> messages;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::string request_tag;
  std::string cache_salt;  // distinguishes repeated identical prompts (judge passes, trials)
  Purpose purpose = Purpose::Evaluation;

  void check() const {
    if (requires_zero_temperature(purpose) && temperature != 0.0) {
      throw Error(Errc::InvalidArgument, "evaluation request '" + request_tag + "' must use temperature 0");
    }
    if (max_tokens <= 0) throw Error(Errc::InvalidArgument, "max_tokens must be positive");
    if (model_id.empty()) throw Error(Errc::InvalidArgument, "request has no model id");
  }
};

// Single user message, which is how every prompt in the harness is sent.
inline CompletionRequest make_request(std::string model_id, std::string prompt, std::string tag,
                                      Purpose purpose = Purpose::Evaluation, double temperature = 0.0,
                                      std::string salt = {}) {
  CompletionRequest req;
  req.model_id = std::move(model_id);
  req.messages.push_back({Role::User, std::move(prompt)});
  req.request_tag = std::move(tag);
  req.purpose = purpose;
  req.temperature = temperature;
  req.cache_salt = std::move(salt);
  req.check();
  return req;
}

struct Completion {
  std::string text;
  std::string backend;
  long long latency_ms = 0;
  int attempt = 1;
  bool cached = false;
  bool truncated = false;  // finish_reason == "length"
};

// One raw exchange with a backend. status 0 means transport failure/timeout.
struct BackendReply {
  int status = 0;
  std::string text;
  std::string error;
  std::string finish_reason;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual BackendReply send(const CompletionRequest& req) = 0;
  virtual bool is_network() const { return false; }
};

struct BackendConfig {
  std::string name = "default";
  std::string base_url;
  std::string api_key_env;
  int max_in_flight = 4;
  int retry_max = 3;
  int backoff_base_ms = 500;
  int timeout_ms = 120000;
  std::vector<std::string> models = {"*"};

  void check() const {
    if (max_in_flight < 1 || max_in_flight > 1024) {
      throw Error(Errc::Config, "backend '" + name + "': max_in_flight must be in [1, 1024]");
    }
    if (retry_max < 0 || backoff_base_ms < 0) {
      throw Error(Errc::Config, "backend '" + name + "': retry_max and backoff_base_ms must be >= 0");
    }
  }

  bool serves(const std::string& model) const {
    return std::any_of(models.begin(), models.end(),
                       [&](const std::string& m) { return m == "*" || m == model; });
  }
};

inline BackendConfig backend_config_from_json(const json& j) {
  BackendConfig c;
  c.name = j.value("name", c.name);
  c.base_url = j.value("base_url", c.base_url);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  c.retry_max = j.value("retry_max", c.retry_max);
  c.backoff_base_ms = j.value("backoff_base_ms", c.backoff_base_ms);
  c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
  if (j.contains("models")) c.models = j.at("models").get<std::vector<std::string>>();
  c.check();
  return c;
}

inline json to_json(const BackendConfig& c) {
  return {{"name", c.name},           {"base_url", c.base_url},
          {"api_key_env", c.api_key_env}, {"max_in_flight", c.max_in_flight},
          {"retry_max", c.retry_max}, {"backoff_base_ms", c.backoff_base_ms},
          {"timeout_ms", c.timeout_ms}, {"models", c.models}};
}

inline json messages_json(const std::vector<Message>& msgs) {
  json arr = json::array();
  for (const auto& m : msgs) arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return arr;
}

// OpenAI-compatible POST {base_url}/chat/completions.
class HttpChatBackend : public ChatBackend {
 public:
  HttpChatBackend(std::string base_url, std::string api_key, int timeout_ms)
      : api_key_(std::move(api_key)), timeout_ms_(timeout_ms) {
    // split "https://host:port/v1" into origin and path prefix
    const auto scheme_end = base_url.find("://");
    const auto path_start = base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    origin_ = base_url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  bool is_network() const override { return true; }

  BackendReply send(const CompletionRequest& req) override {
    httplib::Client cli(origin_);
    const auto secs = timeout_ms_ / 1000;
    const auto usecs = (timeout_ms_ % 1000) * 1000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    json body = {{"model", req.model_id},
                 {"messages", messages_json(req.messages)},
                 {"temperature", req.temperature},
                 {"max_tokens", req.max_tokens}};
    auto res = cli.Post(prefix_ + "/chat/completions", headers, body.dump(), "application/json");
    BackendReply reply;
    if (!res) {
      reply.error = httplib::to_string(res.error());
      return reply;
    }
    reply.status = res->status;
    if (res->status != 200) {
      reply.error = res->body.substr(0, 500);
      return reply;
    }
    try {
      const json j = json::parse(res->body);
      const auto& choice = j.at("choices").at(0);
      const auto& content = choice.at("message").at("content");
      reply.text = content.is_null() ? "" : content.get<std::string>();
      if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
        reply.finish_reason = choice["finish_reason"].get<std::string>();
      }
    } catch (const std::exception& e) {
      reply.status = 502;  // treat malformed bodies as transient
      reply.error = std::string("malformed completion body: ") + e.what();
    }
    return reply;
  }

 private:
  std::string origin_;
  std::string prefix_;
  std::string api_key_;
  int timeout_ms_;
};

// Scriptable in-process backend. Tracks call counts and peak concurrency.
class MockChatBackend : public ChatBackend {
 public:
  using Responder = std::function<BackendReply(const CompletionRequest&)>;

  explicit MockChatBackend(Responder responder, int delay_ms = 0)
      : responder_(std::move(responder)), delay_ms_(delay_ms) {}

  BackendReply send(const CompletionRequest& req) override {
    const int now = ++in_flight_;
    int peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    ++calls_;
    if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
    BackendReply reply;
    try {
      reply = responder_(req);
    } catch (...) {
      --in_flight_;
      throw;
    }
    --in_flight_;
    return reply;
  }

  int calls() const noexcept { return calls_.load(); }
  int peak_concurrency() const noexcept { return peak_.load(); }

 private:
  Responder responder_;
  int delay_ms_;
  std::atomic<int> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
};

inline BackendReply ok_reply(std::string text) {
  BackendReply r;
  r.status = 200;
  r.text = std::move(text);
  r.finish_reason = "stop";
  return r;
}

// Responses keyed by SHA-256 over (model, temperature, max_tokens, salt, messages).
class DiskCache {
 public:
  explicit DiskCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  static std::string key(const CompletionRequest& req) {
    json k = {{"model", req.model_id},
              {"temperature", req.temperature},
              {"max_tokens", req.max_tokens},
              {"salt", req.cache_salt},
              {"messages", messages_json(req.messages)}};
    return sha256_hex(k.dump());
  }

  std::optional<Completion> get(const CompletionRequest& req) const {
    const auto path = path_for(key(req));
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    try {
      const json j = json::parse(in);
      Completion c;
      c.text = j.at("text").get<std::string>();
      c.backend = j.value("backend", "");
      c.truncated = j.value("truncated", false);
      c.cached = true;
      return c;
    } catch (const std::exception&) {
      return std::nullopt;  // a torn or foreign file is just a miss
    }
  }

  void put(const CompletionRequest& req, const Completion& c) const {
    const std::string k = key(req);
    const auto path = path_for(k);
    std::filesystem::create_directories(path.parent_path());
    json j = {{"model", req.model_id},
              {"request_tag", req.request_tag},
              {"messages", messages_json(req.messages)},
              {"salt", req.cache_salt},
              {"text", c.text},
              {"backend", c.backend},
              {"truncated", c.truncated}};
    const auto tmp = path.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << j.dump();
    }
    std::filesystem::rename(tmp, path);
  }

 private:
  std::filesystem::path path_for(const std::string& k) const { return dir_ / k.substr(0, 2) / (k + ".json"); }

  std::filesystem::path dir_;
};

struct GatewayStats {
  long long requests = 0;
  long long backend_calls = 0;  // individual attempts sent to a backend
  long long network_calls = 0;  // subset of backend_calls that went over HTTP
  long long cache_hits = 0;
  long long truncated = 0;
  long long failures = 0;
};

struct BatchResult {
  std::optional<Completion> completion;
  Errc error_code = Errc::TerminalBackend;
  std::string error;
  bool ok() const noexcept { return completion.has_value(); }
};

class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  Gateway() = default;
  explicit Gateway(std::optional<std::filesystem::path> cache_dir) {
    if (cache_dir) cache_.emplace(*cache_dir);
  }
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  void add_backend(BackendConfig cfg, std::shared_ptr<ChatBackend> impl) {
    cfg.check();
    auto slot = std::make_unique<Slot>();
    slot->sem = std::make_unique<std::counting_semaphore<1024>>(cfg.max_in_flight);
    slot->cfg = std::move(cfg);
    slot->impl = std::move(impl);
    slots_.push_back(std::move(slot));
  }

  // HTTP backend; the API key is read from cfg.api_key_env at this point.
  void add_http_backend(const BackendConfig& cfg) {
    std::string key;
    if (!cfg.api_key_env.empty()) {
      if (const char* v = std::getenv(cfg.api_key_env.c_str())) key = v;
    }
    if (cfg.base_url.empty()) throw Error(Errc::Config, "backend '" + cfg.name + "' has no base_url");
    add_backend(cfg, std::make_shared<HttpChatBackend>(cfg.base_url, key, cfg.timeout_ms));
  }

  void set_sleeper(Sleeper s) { sleeper_ = std::move(s); }
  void set_cache_enabled(bool on) noexcept { cache_enabled_ = on; }

  bool has_backend_for(const std::string& model) const {
    return std::any_of(slots_.begin(), slots_.end(), [&](const auto& s) { return s->cfg.serves(model); });
  }

  // Overrides max_tokens on every request (run-level setting).
  void set_max_tokens(int n) {
    if (n <= 0) throw Error(Errc::Config, "max_tokens must be positive");
    max_tokens_ = n;
  }

  Completion complete(const CompletionRequest& original) {
    CompletionRequest req = original;
    if (max_tokens_) req.max_tokens = *max_tokens_;
    req.check();
    ++requests_;
    if (cache_ && cache_enabled_) {
      if (auto hit = cache_->get(req)) {
        ++cache_hits_;
        return *hit;
      }
    }
    Slot& slot = route(req.model_id);
    const int attempts = slot.cfg.retry_max + 1;
    std::string last_error;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      const auto t0 = std::chrono::steady_clock::now();
      BackendReply reply;
      {
        slot.sem->acquire();
        ++backend_calls_;
        if (slot.impl->is_network()) ++network_calls_;
        try {
          reply = slot.impl->send(req);
        } catch (const std::exception& e) {
          reply = BackendReply{};
          reply.error = e.what();
        }
        slot.sem->release();
      }
      const auto elapsed =
          std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
      if (reply.status == 200) {
        Completion c;
        c.text = std::move(reply.text);
        c.backend = slot.cfg.name;
        c.latency_ms = elapsed;
        c.attempt = attempt;
        c.truncated = reply.finish_reason == "length";
        if (c.truncated) ++truncated_;
        if (cache_ && cache_enabled_) cache_->put(req, c);
        return c;
      }
      last_error = "HTTP " + std::to_string(reply.status) + (reply.error.empty() ? "" : ": " + reply.error);
      if (reply.status == 401 || reply.status == 403) {
        ++failures_;
        throw Error(Errc::Auth, "backend '" + slot.cfg.name + "' rejected credentials (" + last_error + ")");
      }
      const bool transient = reply.status == 0 || reply.status == 408 || reply.status == 429 || reply.status >= 500;
      if (!transient) break;
      if (attempt < attempts) {
        const auto delay = std::chrono::milliseconds(static_cast<long long>(slot.cfg.backoff_base_ms) << (attempt - 1));
        spdlog::debug("retrying {} after {} ({} ms)", req.request_tag, last_error, delay.count());
        sleeper_(delay);
      }
    }
    ++failures_;
    throw Error(Errc::TerminalBackend, "request '" + req.request_tag + "' failed: " + last_error);
  }

  // Results are positionally aligned with `reqs`; failures stay per-entry.
  std::vector<BatchResult> complete_batch(const std::vector<CompletionRequest>& reqs, std::size_t workers = 0) {
    std::vector<BatchResult> out(reqs.size());
    if (reqs.empty()) return out;
    if (workers == 0) workers = default_workers();
    workers = std::min(workers, reqs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i = next++; i < reqs.size(); i = next++) {
        try {
          out[i].completion = complete(reqs[i]);
        } catch (const Error& e) {
          out[i].error_code = e.code();
          out[i].error = e.what();
        } catch (const std::exception& e) {
          out[i].error = e.what();
        }
      }
    };
    if (workers <= 1) {
      work();
      return out;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    return out;
  }

  GatewayStats stats() const {
    return {requests_.load(), backend_calls_.load(), network_calls_.load(),
            cache_hits_.load(), truncated_.load(), failures_.load()};
  }

  void reset_stats() {
    requests_ = backend_calls_ = network_calls_ = cache_hits_ = truncated_ = failures_ = 0;
  }

  std::size_t default_workers() const {
    std::size_t n = 0;
    for (const auto& s : slots_) n += static_cast<std::size_t>(s->cfg.max_in_flight);
    return std::max<std::size_t>(n, 1);
  }

 private:
  struct Slot {
    BackendConfig cfg;
    std::shared_ptr<ChatBackend> impl;
    std::unique_ptr<std::counting_semaphore<1024>> sem;
  };

  Slot& route(const std::string& model) {
    for (auto& s : slots_) {
      if (s->cfg.serves(model)) return *s;
    }
    throw Error(Errc::Config, "no backend configured for model '" + model + "'");
  }

  std::vector<std::unique_ptr<Slot>> slots_;
  std::optional<DiskCache> cache_;
  bool cache_enabled_ = true;
  std::optional<int> max_tokens_;
  Sleeper sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  std::atomic<long long> requests_{0}, backend_calls_{0}, network_calls_{0}, cache_hits_{0}, truncated_{0},
      failures_{0};
};

}  // namespace fmtbias
