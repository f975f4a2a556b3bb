#pragma once

// Chat-completions client and batch annotation runner.
//
// Reproducibility comes from the response cache rather than seeding: every
// (model, system prompt, prompt, sampling parameters, re-ask attempt) tuple is
// stored once and replayed byte-for-byte afterwards.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "parlframe/extraction.hpp"
#include "parlframe/prompt.hpp"
#include "parlframe/taxonomy.hpp"

namespace parlframe {

inline constexpr std::string_view kDefaultSystemPrompt =
    "You are a careful annotator of political speech. Follow the instructions exactly.";

struct BackendConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model_name = "gpt-4";
  std::string api_key;  // never serialized
  double temperature = 0.6;
  double top_p = 0.9;
  int max_tokens = 1024;
  double request_timeout_s = 120.0;
  int max_retries = 4;
  int concurrency_limit = 4;
  double requests_per_minute = 0.0;  // 0 disables the limiter
  double backoff_initial_s = 1.0;
  double backoff_max_s = 60.0;
  std::string system_prompt = std::string(kDefaultSystemPrompt);
  std::string serving;  // free-text description of the serving stack, e.g. quantization

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

void to_json(nlohmann::json& j, const BackendConfig& c);    // omits api_key
void from_json(const nlohmann::json& j, BackendConfig& c);  // keeps api_key empty

class BackendError : public std::runtime_error {
 public:
  enum class Kind { Unavailable, RateLimited, AuthFailure };
  BackendError(Kind kind, const std::string& what, int attempts)
      : std::runtime_error(what), kind_(kind), attempts_(attempts) {}
  Kind kind() const noexcept { return kind_; }
  int attempts() const noexcept { return attempts_; }

 private:
  Kind kind_;
  int attempts_;
};

std::string_view to_string(BackendError::Kind k);

/// Content-addressed response store. With a directory it persists to
/// `<dir>/responses.jsonl`, appending one line per new entry; a torn final line
/// from an interrupted run is ignored on load.
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path dir);

  static std::string key(const BackendConfig& cfg, std::string_view prompt, int attempt);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& text);
  std::size_t size() const;

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
  std::filesystem::path file_;
  std::ofstream out_;
};

/// Spaces request starts at least 60/rpm seconds apart.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_minute);
  void acquire();

 private:
  std::mutex mu_;
  std::chrono::steady_clock::duration interval_{};
  std::chrono::steady_clock::time_point next_{};
};

struct Completion {
  std::string text;
  int attempts = 0;  // HTTP requests made; 0 for a cache hit
  bool cached = false;
};

class ChatClient {
 public:
  ChatClient(BackendConfig cfg, std::shared_ptr<ResponseCache> cache = nullptr);

  /// `reask` distinguishes a repeated question from the original in the cache.
  /// Throws BackendError.
  Completion complete(const std::string& prompt, int reask = 0);

  const BackendConfig& config() const { return cfg_; }
  long network_requests() const { return requests_.load(); }
  long cache_hits() const { return hits_.load(); }

 private:
  BackendConfig cfg_;
  std::shared_ptr<ResponseCache> cache_;
  RateLimiter limiter_;
  std::counting_semaphore<1024> slots_;
  std::atomic<long> requests_{0};
  std::atomic<long> hits_{0};
};

/// The canonical label (as in step_labels) named by a step answer, or nullopt
/// when the answer is unparseable. The last "LABEL:" line wins; without a
/// usable one, the last alias occurrence in the text is taken.
std::optional<std::string> parse_step_output(std::string_view raw, PromptStep step);

enum class PredictionStatus { Ok, Unparseable, BackendError };
std::string_view to_string(PredictionStatus s);
std::optional<PredictionStatus> parse_prediction_status(std::string_view s);

struct RawOutput {
  PromptStep step = PromptStep::HighLevel;
  int attempt = 0;
  std::string prompt_hash;
  std::string text;
};

struct Prediction {
  std::string instance_id;
  std::string run_id;
  std::optional<HighLevel> high;
  std::optional<FineLabel> fine;
  PredictionStatus status = PredictionStatus::Ok;
  std::string raw_high;  // last output of the high-level (or one-step) step
  std::string raw_fine;  // last output of the subtype step
  std::vector<RawOutput> raw_outputs;
  std::string error;
  std::chrono::milliseconds elapsed{0};  // not serialized
};

void to_json(nlohmann::json& j, const Prediction& p);
void from_json(const nlohmann::json& j, Prediction& p);

/// ok ⇒ fine_to_high(fine) == high, and fine carries a subtype iff high is a stance.
bool satisfies_projection_law(const Prediction& p);

struct AnnotationSpec {
  std::string run_id = "run";
  PromptFormat format = PromptFormat::TwoStep;
  PromptMode mode = PromptMode::Zero;
  const TemplateSet* templates = nullptr;
};

/// Steps reachable under `format`; used to validate templates before a run.
std::vector<PromptStep> reachable_steps(PromptFormat format);

/// Checks templates and, in few-shot mode, exemplars for every reachable step.
/// Throws PromptError.
void validate_spec(const AnnotationSpec& spec);

/// Runs the step plan for one instance. Backend failures become
/// status=backend_error; an unparseable step is asked once more before giving up.
Prediction annotate_instance(const Instance& inst, const AnnotationSpec& spec, ChatClient& client);

struct BatchResult {
  std::vector<Prediction> predictions;  // sorted by instance_id
  std::map<PredictionStatus, long> counts;
  long annotated = 0;  // instances sent to the backend in this call
  long reused = 0;     // kept from an earlier run
};

/// Bounded-parallel annotation. `previous` holds predictions from an earlier
/// run; those with the same run_id and a final status are kept as-is.
BatchResult run_batch(const std::vector<Instance>& instances, const AnnotationSpec& spec, ChatClient& client,
                      const std::vector<Prediction>& previous = {});

/// Manifest for a batch: configuration, template hashes and status counts.
nlohmann::json batch_manifest(const BatchResult& result, const AnnotationSpec& spec, const BackendConfig& cfg,
                              long instance_count);

struct PromptRecord {
  std::string instance_id;
  PromptStep step = PromptStep::HighLevel;
  std::string prompt_hash;
  std::string prompt;
};

void to_json(nlohmann::json& j, const PromptRecord& r);

/// Every prompt a run could send, without contacting a backend. In two-step
/// format both subtype prompts are rendered.
std::vector<PromptRecord> render_all_prompts(const std::vector<Instance>& instances, const AnnotationSpec& spec);

}  // namespace parlframe
