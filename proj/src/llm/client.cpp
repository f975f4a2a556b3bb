#include <cmath>
#include <thread>

#include "httplib.h"
#include "parlframe/hash.hpp"
#include "parlframe/io.hpp"
#include "parlframe/llm.hpp"

namespace parlframe {

// --- config -------------------------------------------------------------------

void BackendConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("backend." + field + ": " + why);
  };
  if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0)
    bad("base_url", "must start with http:// or https://");
  if (model_name.empty()) bad("model_name", "must not be empty");
  if (!(temperature >= 0)) bad("temperature", "must be >= 0");
  if (!(top_p > 0 && top_p <= 1)) bad("top_p", "must be in (0, 1]");
  if (max_tokens < 1) bad("max_tokens", "must be >= 1");
  if (!(request_timeout_s > 0)) bad("request_timeout_s", "must be > 0");
  if (max_retries < 0) bad("max_retries", "must be >= 0");
  if (concurrency_limit < 1 || concurrency_limit > 1024) bad("concurrency_limit", "must be in [1, 1024]");
  if (!(requests_per_minute >= 0)) bad("requests_per_minute", "must be >= 0");
  if (!(backoff_initial_s >= 0) || !(backoff_max_s >= backoff_initial_s))
    bad("backoff_initial_s", "need 0 <= backoff_initial_s <= backoff_max_s");
}

void to_json(nlohmann::json& j, const BackendConfig& c) {
  j = {{"base_url", c.base_url},
       {"model_name", c.model_name},
       {"temperature", c.temperature},
       {"top_p", c.top_p},
       {"max_tokens", c.max_tokens},
       {"request_timeout_s", c.request_timeout_s},
       {"max_retries", c.max_retries},
       {"concurrency_limit", c.concurrency_limit},
       {"requests_per_minute", c.requests_per_minute},
       {"backoff_initial_s", c.backoff_initial_s},
       {"backoff_max_s", c.backoff_max_s},
       {"system_prompt", c.system_prompt},
       {"serving", c.serving}};
}

void from_json(const nlohmann::json& j, BackendConfig& c) {
  BackendConfig d;
  c.base_url = j.value("base_url", d.base_url);
  c.model_name = j.value("model_name", d.model_name);
  c.temperature = j.value("temperature", d.temperature);
  c.top_p = j.value("top_p", d.top_p);
  c.max_tokens = j.value("max_tokens", d.max_tokens);
  c.request_timeout_s = j.value("request_timeout_s", d.request_timeout_s);
  c.max_retries = j.value("max_retries", d.max_retries);
  c.concurrency_limit = j.value("concurrency_limit", d.concurrency_limit);
  c.requests_per_minute = j.value("requests_per_minute", d.requests_per_minute);
  c.backoff_initial_s = j.value("backoff_initial_s", d.backoff_initial_s);
  c.backoff_max_s = j.value("backoff_max_s", d.backoff_max_s);
  c.system_prompt = j.value("system_prompt", d.system_prompt);
  c.serving = j.value("serving", d.serving);
}

std::string_view to_string(BackendError::Kind k) {
  switch (k) {
    case BackendError::Kind::Unavailable: return "backend_unavailable";
    case BackendError::Kind::RateLimited: return "rate_limited";
    case BackendError::Kind::AuthFailure: return "auth_failure";
  }
  return "?";
}

// --- cache --------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) {
  std::filesystem::create_directories(dir);
  file_ = dir / "responses.jsonl";
  if (std::filesystem::exists(file_)) {
    const std::string content = io::read_file(file_);
    std::size_t start = 0, good_end = 0;
    while (start < content.size()) {
      const std::size_t nl = content.find('\n', start);
      if (nl == std::string::npos) break;  // torn tail
      const auto j = nlohmann::json::parse(content.begin() + start, content.begin() + nl, nullptr, false);
      if (!j.is_object() || !j.contains("key") || !j.contains("text")) break;
      entries_[j["key"].get<std::string>()] = j["text"].get<std::string>();
      good_end = nl + 1;
      start = nl + 1;
    }
    if (good_end < content.size()) std::filesystem::resize_file(file_, good_end);
  }
  out_.open(file_, std::ios::binary | std::ios::app);
  if (!out_) throw io::DataError("cannot open cache file " + file_.string());
}

std::string ResponseCache::key(const BackendConfig& cfg, std::string_view prompt, int attempt) {
  const nlohmann::json k = {{"model", cfg.model_name},        {"system", cfg.system_prompt},
                            {"prompt_sha256", sha256_hex(prompt)}, {"temperature", cfg.temperature},
                            {"top_p", cfg.top_p},             {"max_tokens", cfg.max_tokens},
                            {"attempt", attempt}};
  return sha256_hex(k.dump());
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::put(const std::string& key, const std::string& text) {
  std::unique_lock lock(mu_);
  if (!entries_.emplace(key, text).second) return;
  if (out_.is_open()) {
    out_ << io::dump_line({{"key", key}, {"text", text}}) << '\n';
    out_.flush();
  }
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

// --- rate limiter -------------------------------------------------------------

RateLimiter::RateLimiter(double rpm) {
  if (rpm > 0)
    interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(60.0 / rpm));
}

void RateLimiter::acquire() {
  if (interval_.count() == 0) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

// --- client -------------------------------------------------------------------

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // request path for chat completions
};

Endpoint split_url(const std::string& base) {
  const auto scheme_end = base.find("://");
  const auto path_start = base.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = base.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  e.path = prefix + "/chat/completions";
  return e;
}

struct Slot {
  std::counting_semaphore<1024>& s;
  explicit Slot(std::counting_semaphore<1024>& sem) : s(sem) { s.acquire(); }
  ~Slot() { s.release(); }
};

}  // namespace

namespace {
BackendConfig validated(BackendConfig cfg) {
  cfg.validate();
  return cfg;
}
}  // namespace

ChatClient::ChatClient(BackendConfig cfg, std::shared_ptr<ResponseCache> cache)
    : cfg_(validated(std::move(cfg))),
      cache_(cache ? std::move(cache) : std::make_shared<ResponseCache>()),
      limiter_(cfg_.requests_per_minute),
      slots_(cfg_.concurrency_limit) {}

Completion ChatClient::complete(const std::string& prompt, int reask) {
  const std::string key = ResponseCache::key(cfg_, prompt, reask);
  if (auto hit = cache_->get(key)) {
    ++hits_;
    return {*hit, 0, true};
  }

  const Endpoint ep = split_url(cfg_.base_url);
  const nlohmann::json body = {{"model", cfg_.model_name},
                               {"messages",
                                {{{"role", "system"}, {"content", cfg_.system_prompt}},
                                 {{"role", "user"}, {"content", prompt}}}},
                               {"temperature", cfg_.temperature},
                               {"top_p", cfg_.top_p},
                               {"max_tokens", cfg_.max_tokens}};
  const std::string payload = io::dump_line(body);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  const auto secs = static_cast<time_t>(cfg_.request_timeout_s);
  const auto usecs = static_cast<time_t>((cfg_.request_timeout_s - double(secs)) * 1e6);

  std::string last_error;
  bool last_was_429 = false;
  const int total = cfg_.max_retries + 1;
  for (int attempt = 1; attempt <= total; ++attempt) {
    double wait_s = 0;
    {
      limiter_.acquire();
      Slot slot(slots_);
      ++requests_;
      httplib::Client cli(ep.origin);
      cli.set_connection_timeout(secs, usecs);
      cli.set_read_timeout(secs, usecs);
      cli.set_write_timeout(secs, usecs);
      auto res = cli.Post(ep.path, headers, payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        last_was_429 = false;
      } else if (res->status == 401 || res->status == 403) {
        throw BackendError(BackendError::Kind::AuthFailure,
                           "authentication rejected (HTTP " + std::to_string(res->status) + ")", attempt);
      } else if (res->status == 429 || res->status >= 500) {
        last_was_429 = res->status == 429;
        last_error = "HTTP " + std::to_string(res->status);
        if (res->has_header("Retry-After")) {
          try {
            wait_s = std::stod(res->get_header_value("Retry-After"));
          } catch (const std::exception&) {
          }
        }
      } else if (res->status != 200) {
        throw BackendError(BackendError::Kind::Unavailable,
                           "request rejected (HTTP " + std::to_string(res->status) + "): " + res->body.substr(0, 200),
                           attempt);
      } else {
        const auto j = nlohmann::json::parse(res->body, nullptr, false);
        const nlohmann::json* content = nullptr;
        if (j.is_object() && j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
          const auto& c = j["choices"][0];
          if (c.contains("message") && c["message"].contains("content") && c["message"]["content"].is_string())
            content = &c["message"]["content"];
        }
        if (content) {
          std::string text = content->get<std::string>();
          cache_->put(key, text);
          return {std::move(text), attempt, false};
        }
        last_error = "malformed response body";
        last_was_429 = false;
      }
    }
    if (attempt == total) break;
    const double backoff = std::min(cfg_.backoff_max_s, cfg_.backoff_initial_s * std::pow(2.0, attempt - 1));
    std::this_thread::sleep_for(std::chrono::duration<double>(std::min(cfg_.backoff_max_s, std::max(backoff, wait_s))));
  }
  if (last_was_429)
    throw BackendError(BackendError::Kind::RateLimited, "rate limited after " + std::to_string(total) + " attempts",
                       total);
  throw BackendError(BackendError::Kind::Unavailable,
                     "backend unavailable after " + std::to_string(total) + " attempts: " + last_error, total);
}

}  // namespace parlframe
