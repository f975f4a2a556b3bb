#pragma once

// Human gold-set service: an append-only journaled store of annotations and
// adjudications, and the HTTP API the annotation UI talks to.

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "parlframe/evaluation.hpp"
#include "parlframe/extraction.hpp"
#include "parlframe/llm.hpp"
#include "parlframe/taxonomy.hpp"

namespace httplib {
class Server;
}

namespace parlframe {

class ServiceError : public std::runtime_error {
 public:
  enum class Kind { InvalidRequest, UnknownInstance, Duplicate, CorruptJournal, Io };
  ServiceError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }
  int http_status() const;

 private:
  Kind kind_;
};

enum class AdjudicationTrigger { VoteTie, ModelDisagreement, AnnotatorDisagreement };
std::string_view to_string(AdjudicationTrigger t);
std::optional<AdjudicationTrigger> parse_trigger(std::string_view s);

struct StoredAnnotation {
  long revision = 0;
  std::string instance_id;
  std::string annotator_id;
  FineLabel fine = FineLabel::None;
  bool supersede = false;
};

struct Adjudication {
  long revision = 0;
  std::string instance_id;
  AdjudicationTrigger trigger = AdjudicationTrigger::VoteTie;
  std::optional<FineLabel> resolution;
  std::string resolver;
  std::string note;
};

enum class ConsensusSource { Majority, Adjudication };
std::string_view to_string(ConsensusSource s);

struct Consensus {
  FineLabel fine = FineLabel::None;
  ConsensusSource source = ConsensusSource::Majority;
};

/// Journal plus snapshot in one directory:
///   journal.log    one entry per line, "<sha256 prefix> <json>", fsynced per append
///   snapshot.json  full state at some revision, replaced atomically
/// Opening loads the snapshot, replays later journal entries and drops a torn
/// final line. A damaged line followed by valid ones is CorruptJournal.
class GoldStore {
 public:
  explicit GoldStore(std::filesystem::path dir, long snapshot_every = 200);
  ~GoldStore();
  GoldStore(const GoldStore&) = delete;
  GoldStore& operator=(const GoldStore&) = delete;

  /// Throws Duplicate when (instance, annotator) exists and !supersede.
  StoredAnnotation add_annotation(const std::string& instance_id, const std::string& annotator_id, FineLabel fine,
                                  bool supersede);
  Adjudication add_adjudication(const std::string& instance_id, AdjudicationTrigger trigger,
                                std::optional<FineLabel> resolution, const std::string& resolver,
                                const std::string& note);

  long revision() const;
  /// Current label per (instance, annotator); superseded ones are gone.
  std::map<std::string, std::map<std::string, FineLabel>> labels() const;
  std::vector<AnnotationRecord> records() const;  // sorted by instance, annotator
  std::vector<Adjudication> adjudications() const;  // journal order
  std::optional<Consensus> consensus(const std::string& instance_id) const;
  /// Every instance with a consensus, read under one lock.
  std::map<std::string, Consensus> consensus_all() const;
  /// Instances whose current votes have no strict majority and no resolution.
  std::vector<std::string> unresolved_ties() const;
  /// {"revision", "annotations", "adjudications"}: the state a snapshot holds.
  nlohmann::json state() const;

  void write_snapshot();
  const std::filesystem::path& dir() const { return dir_; }
  long torn_bytes_dropped() const { return torn_bytes_; }

 private:
  void apply(const nlohmann::json& entry);
  void append(const nlohmann::json& entry);
  std::optional<Consensus> consensus_locked(const std::string& instance_id) const;
  nlohmann::json state_locked() const;

  std::filesystem::path dir_;
  long snapshot_every_;
  mutable std::shared_mutex mu_;
  int fd_ = -1;
  long revision_ = 0;
  long since_snapshot_ = 0;
  long torn_bytes_ = 0;
  std::vector<StoredAnnotation> annotations_;  // full history
  std::map<std::string, std::map<std::string, FineLabel>> current_;
  std::vector<Adjudication> adjudications_;
  std::map<std::string, FineLabel> resolved_;  // latest resolution per instance
};

/// Parses {high, subtype?}; subtype is required exactly for the two stances.
/// Throws InvalidRequest.
FineLabel label_from_request(const nlohmann::json& body);

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path ui_dir;  // static bundle; empty disables
  std::string token;             // shared bearer token; empty disables
  int threads = 8;
};

/// HTTP front end over a GoldStore. Handlers run concurrently; every write goes
/// through the store's single writer and is durable before the response.
class AnnotationService {
 public:
  AnnotationService(GoldStore& store, std::vector<Instance> instances, std::vector<Prediction> predictions,
                    ServiceOptions options = {});
  ~AnnotationService();

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Binds and serves on the calling thread until stop().
  void run(const std::function<void(int port)>& on_bound = {});
  void stop();

  // The handlers' logic, callable without HTTP.
  nlohmann::json list_instances(const std::map<std::string, std::string>& filters) const;
  nlohmann::json instance_detail(const std::string& id) const;
  std::optional<nlohmann::json> next_task(const std::string& annotator) const;
  nlohmann::json post_annotation(const nlohmann::json& body, bool supersede_query);
  nlohmann::json agreement(Level level) const;
  nlohmann::json disagreements(const std::string& run, std::optional<int> decade) const;
  nlohmann::json adjudication_queue() const;
  nlohmann::json post_adjudication(const nlohmann::json& body);
  std::string export_gold() const;

 private:
  void install_routes();
  const Instance& instance(const std::string& id) const;

  GoldStore& store_;
  std::vector<Instance> instances_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::map<std::string, Prediction>> runs_;  // run id -> instance id -> prediction
  ServiceOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::atomic<int> port_{0};
};

/// Gold export lines, sorted by instance id: {instance_id, annotator_id:
/// "consensus", fine_label, high_label, source}. Unresolved ties are omitted.
std::string export_gold_jsonl(const GoldStore& store);

}  // namespace parlframe
