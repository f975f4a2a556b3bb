#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>

#include "parlframe/hash.hpp"
#include "parlframe/io.hpp"
#include "parlframe/service.hpp"

namespace parlframe {

int ServiceError::http_status() const {
  switch (kind_) {
    case Kind::InvalidRequest: return 400;
    case Kind::UnknownInstance: return 404;
    case Kind::Duplicate: return 409;
    case Kind::CorruptJournal:
    case Kind::Io: return 500;
  }
  return 500;
}

std::string_view to_string(AdjudicationTrigger t) {
  switch (t) {
    case AdjudicationTrigger::VoteTie: return "vote_tie";
    case AdjudicationTrigger::ModelDisagreement: return "model_disagreement";
    case AdjudicationTrigger::AnnotatorDisagreement: return "annotator_disagreement";
  }
  return "vote_tie";
}

std::optional<AdjudicationTrigger> parse_trigger(std::string_view s) {
  for (auto t : {AdjudicationTrigger::VoteTie, AdjudicationTrigger::ModelDisagreement,
                 AdjudicationTrigger::AnnotatorDisagreement})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

std::string_view to_string(ConsensusSource s) { return s == ConsensusSource::Majority ? "majority" : "adjudication"; }

namespace {

constexpr std::size_t kSumLen = 8;

std::string journal_line(const nlohmann::json& entry) {
  const std::string body = io::dump_line(entry);
  return sha256_hex(body).substr(0, kSumLen) + " " + body + "\n";
}

// nullopt when the line is damaged.
std::optional<nlohmann::json> parse_line(std::string_view line) {
  if (line.size() < kSumLen + 2 || line[kSumLen] != ' ') return std::nullopt;
  const std::string_view body = line.substr(kSumLen + 1);
  if (sha256_hex(body).substr(0, kSumLen) != line.substr(0, kSumLen)) return std::nullopt;
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

void fsync_dir(const std::filesystem::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

nlohmann::json annotation_entry(const StoredAnnotation& a) {
  return {{"rev", a.revision},
          {"type", "annotation"},
          {"instance_id", a.instance_id},
          {"annotator_id", a.annotator_id},
          {"fine_label", to_string(a.fine)},
          {"supersede", a.supersede}};
}

nlohmann::json adjudication_entry(const Adjudication& a) {
  return {{"rev", a.revision},
          {"type", "adjudication"},
          {"instance_id", a.instance_id},
          {"trigger", to_string(a.trigger)},
          {"resolution", a.resolution ? nlohmann::json(to_string(*a.resolution)) : nlohmann::json(nullptr)},
          {"resolver", a.resolver},
          {"note", a.note}};
}

}  // namespace

GoldStore::GoldStore(std::filesystem::path dir, long snapshot_every)
    : dir_(std::move(dir)), snapshot_every_(snapshot_every) {
  std::filesystem::create_directories(dir_);
  const auto snap = dir_ / "snapshot.json";
  if (std::filesystem::exists(snap)) {
    const auto state = nlohmann::json::parse(io::read_file(snap));
    std::vector<nlohmann::json> entries;
    for (const auto& e : state.at("annotations")) entries.push_back(e);
    for (const auto& e : state.at("adjudications")) entries.push_back(e);
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.at("rev").template get<long>() < b.at("rev").template get<long>(); });
    for (const auto& e : entries) apply(e);
    revision_ = state.at("revision").get<long>();
  }

  const auto journal = dir_ / "journal.log";
  std::string content;
  if (std::filesystem::exists(journal)) content = io::read_file(journal);
  std::size_t pos = 0, keep = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    const bool complete = nl != std::string::npos;
    const std::string_view line(content.data() + pos, (complete ? nl : content.size()) - pos);
    auto entry = complete ? parse_line(line) : std::nullopt;
    if (!entry) {
      // Damage is only tolerable at the tail, where an interrupted append leaves it.
      const auto rest = complete ? content.find_first_not_of('\n', nl + 1) : std::string::npos;
      if (rest != std::string::npos)
        throw ServiceError(ServiceError::Kind::CorruptJournal,
                           "journal damaged at byte " + std::to_string(pos) + " with valid data after it");
      break;
    }
    const long rev = entry->at("rev").get<long>();
    if (rev > revision_) {
      if (rev != revision_ + 1)
        throw ServiceError(ServiceError::Kind::CorruptJournal,
                           "journal skips from revision " + std::to_string(revision_) + " to " + std::to_string(rev));
      apply(*entry);
      ++since_snapshot_;
    }
    pos = nl + 1;
    keep = pos;
  }
  torn_bytes_ = static_cast<long>(content.size() - keep);

  fd_ = ::open(journal.c_str(), O_WRONLY | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw ServiceError(ServiceError::Kind::Io, "cannot open " + journal.string() + ": " + std::strerror(errno));
  if (torn_bytes_ > 0) {
    if (::ftruncate(fd_, static_cast<off_t>(keep)) != 0 || ::fsync(fd_) != 0)
      throw ServiceError(ServiceError::Kind::Io, "cannot truncate torn journal tail");
  }
  ::lseek(fd_, static_cast<off_t>(keep), SEEK_SET);
}

GoldStore::~GoldStore() {
  try {
    if (since_snapshot_ > 0) write_snapshot();
  } catch (...) {
  }
  if (fd_ >= 0) ::close(fd_);
}

void GoldStore::apply(const nlohmann::json& e) {
  const auto type = e.at("type").get<std::string>();
  const long rev = e.at("rev").get<long>();
  if (type == "annotation") {
    StoredAnnotation a{rev, e.at("instance_id").get<std::string>(), e.at("annotator_id").get<std::string>(),
                       parse_fine(e.at("fine_label").get<std::string>()), e.value("supersede", false)};
    current_[a.instance_id][a.annotator_id] = a.fine;
    annotations_.push_back(std::move(a));
  } else if (type == "adjudication") {
    Adjudication a;
    a.revision = rev;
    a.instance_id = e.at("instance_id").get<std::string>();
    a.trigger = parse_trigger(e.at("trigger").get<std::string>()).value_or(AdjudicationTrigger::VoteTie);
    if (!e.at("resolution").is_null()) a.resolution = parse_fine(e.at("resolution").get<std::string>());
    a.resolver = e.value("resolver", std::string());
    a.note = e.value("note", std::string());
    if (a.resolution) resolved_[a.instance_id] = *a.resolution;
    adjudications_.push_back(std::move(a));
  } else {
    throw ServiceError(ServiceError::Kind::CorruptJournal, "unknown journal entry type " + type);
  }
  revision_ = std::max(revision_, rev);
}

void GoldStore::append(const nlohmann::json& entry) {
  const std::string line = journal_line(entry);
  const off_t start = ::lseek(fd_, 0, SEEK_CUR);
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string err = std::strerror(errno);
      // Leave no partial line behind for the next append to follow.
      if (::ftruncate(fd_, start) == 0) ::lseek(fd_, start, SEEK_SET);
      throw ServiceError(ServiceError::Kind::Io, "journal write failed: " + err);
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fdatasync(fd_) != 0) throw ServiceError(ServiceError::Kind::Io, "journal fsync failed");
  apply(entry);
  if (++since_snapshot_ >= snapshot_every_) {
    io::write_file_atomic(dir_ / "snapshot.json", state_locked().dump(1) + "\n");
    fsync_dir(dir_);
    since_snapshot_ = 0;
  }
}

StoredAnnotation GoldStore::add_annotation(const std::string& instance_id, const std::string& annotator_id,
                                           FineLabel fine, bool supersede) {
  if (instance_id.empty() || annotator_id.empty())
    throw ServiceError(ServiceError::Kind::InvalidRequest, "instance_id and annotator_id are required");
  std::unique_lock lock(mu_);
  if (!supersede)
    if (auto it = current_.find(instance_id); it != current_.end() && it->second.count(annotator_id))
      throw ServiceError(ServiceError::Kind::Duplicate,
                         annotator_id + " already labelled " + instance_id + "; resend with supersede=true");
  StoredAnnotation a{revision_ + 1, instance_id, annotator_id, fine, supersede};
  append(annotation_entry(a));
  return a;
}

Adjudication GoldStore::add_adjudication(const std::string& instance_id, AdjudicationTrigger trigger,
                                         std::optional<FineLabel> resolution, const std::string& resolver,
                                         const std::string& note) {
  std::unique_lock lock(mu_);
  Adjudication a{revision_ + 1, instance_id, trigger, resolution, resolver, note};
  append(adjudication_entry(a));
  return a;
}

long GoldStore::revision() const {
  std::shared_lock lock(mu_);
  return revision_;
}

std::map<std::string, std::map<std::string, FineLabel>> GoldStore::labels() const {
  std::shared_lock lock(mu_);
  return current_;
}

std::vector<AnnotationRecord> GoldStore::records() const {
  std::shared_lock lock(mu_);
  std::vector<AnnotationRecord> out;
  for (const auto& [inst, by] : current_)
    for (const auto& [ann, fine] : by) out.push_back({inst, ann, fine});
  return out;
}

std::vector<Adjudication> GoldStore::adjudications() const {
  std::shared_lock lock(mu_);
  return adjudications_;
}

std::optional<Consensus> GoldStore::consensus_locked(const std::string& id) const {
  if (auto r = resolved_.find(id); r != resolved_.end()) return Consensus{r->second, ConsensusSource::Adjudication};
  auto it = current_.find(id);
  if (it == current_.end()) return std::nullopt;
  std::vector<FineLabel> votes;
  for (const auto& [ann, fine] : it->second) votes.push_back(fine);
  if (auto m = majority_vote(votes)) return Consensus{*m, ConsensusSource::Majority};
  return std::nullopt;
}

std::optional<Consensus> GoldStore::consensus(const std::string& id) const {
  std::shared_lock lock(mu_);
  return consensus_locked(id);
}

std::map<std::string, Consensus> GoldStore::consensus_all() const {
  std::shared_lock lock(mu_);
  std::map<std::string, Consensus> out;
  for (const auto& [id, by] : current_)
    if (auto c = consensus_locked(id)) out.emplace(id, *c);
  for (const auto& [id, fine] : resolved_) out[id] = {fine, ConsensusSource::Adjudication};
  return out;
}

std::vector<std::string> GoldStore::unresolved_ties() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, by] : current_)
    if (!by.empty() && !consensus_locked(id)) out.push_back(id);
  return out;
}

nlohmann::json GoldStore::state_locked() const {
  nlohmann::json ann = nlohmann::json::array(), adj = nlohmann::json::array();
  for (const auto& a : annotations_) ann.push_back(annotation_entry(a));
  for (const auto& a : adjudications_) adj.push_back(adjudication_entry(a));
  return {{"revision", revision_}, {"annotations", ann}, {"adjudications", adj}};
}

nlohmann::json GoldStore::state() const {
  std::shared_lock lock(mu_);
  return state_locked();
}

void GoldStore::write_snapshot() {
  std::unique_lock lock(mu_);
  io::write_file_atomic(dir_ / "snapshot.json", state_locked().dump(1) + "\n");
  fsync_dir(dir_);
  since_snapshot_ = 0;
}

std::string export_gold_jsonl(const GoldStore& store) {
  std::string out;
  for (const auto& [id, c] : store.consensus_all()) {
    out += io::dump_line({{"instance_id", id},
                          {"annotator_id", kConsensusAnnotator},
                          {"fine_label", to_string(c.fine)},
                          {"high_label", to_string(fine_to_high(c.fine))},
                          {"source", to_string(c.source)}});
    out += '\n';
  }
  return out;
}

}  // namespace parlframe
