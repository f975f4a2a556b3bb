#include <charconv>
#include <future>
#include <mutex>
#include <set>

#include "httplib.h"
#include "parlframe/io.hpp"
#include "parlframe/service.hpp"

namespace parlframe {
namespace {

using nlohmann::json;

ServiceError bad_request(const std::string& msg) { return ServiceError(ServiceError::Kind::InvalidRequest, msg); }

std::string required_string(const json& body, const char* key) {
  if (!body.contains(key) || !body[key].is_string() || body[key].get<std::string>().empty())
    throw bad_request(std::string("field \"") + key + "\" must be a non-empty string");
  return body[key].get<std::string>();
}

json blinded(const Instance& i) {
  // The labelling view never carries speaker or party.
  return {{"id", i.id},
          {"target", to_string(i.target)},
          {"keyword", i.keyword},
          {"keywords", i.keywords},
          {"text", i.text},
          {"context_left", i.context_left},
          {"context_right", i.context_right},
          {"date", i.date.iso()},
          {"decade", i.decade}};
}

json label_map(const std::map<std::string, FineLabel>& by) {
  json out = json::object();
  for (const auto& [ann, fine] : by) out[ann] = to_string(fine);
  return out;
}

json consensus_json(const std::optional<Consensus>& c) {
  if (!c) return nullptr;
  return {{"fine_label", to_string(c->fine)},
          {"high_label", to_string(fine_to_high(c->fine))},
          {"source", to_string(c->source)}};
}

std::string status_of(std::size_t annotations, const std::optional<Consensus>& c) {
  if (annotations == 0 && !c) return "open";
  if (!c) return "tie";
  return c->source == ConsensusSource::Adjudication ? "adjudicated" : "labeled";
}

bool disagree(const std::map<std::string, FineLabel>& by) {
  std::set<FineLabel> distinct;
  for (const auto& [ann, fine] : by) distinct.insert(fine);
  return distinct.size() > 1;
}

int parse_int(const std::string& s, const char* what) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw bad_request(std::string("invalid ") + what + " \"" + s + "\"");
  return v;
}

}  // namespace

FineLabel label_from_request(const json& body) {
  if (!body.contains("high") || !body["high"].is_string()) throw bad_request("field \"high\" is required");
  const auto high = try_parse_high(body["high"].get<std::string>());
  if (!high) throw bad_request("unknown high-level label \"" + body["high"].get<std::string>() + "\"");
  std::optional<Subtype> subtype;
  if (body.contains("subtype") && !body["subtype"].is_null()) {
    if (!body["subtype"].is_string()) throw bad_request("field \"subtype\" must be a string");
    const auto text = body["subtype"].get<std::string>();
    if (!text.empty()) {
      subtype = try_parse_subtype(text);
      if (!subtype) throw bad_request("unknown subtype \"" + text + "\"");
    }
  }
  const auto fine = combine(*high, subtype);
  if (!fine) {
    if (is_stance(*high)) throw bad_request(std::string(to_string(*high)) + " requires a subtype");
    throw bad_request(std::string(to_string(*high)) + " takes no subtype");
  }
  return *fine;
}

AnnotationService::AnnotationService(GoldStore& store, std::vector<Instance> instances,
                                     std::vector<Prediction> predictions, ServiceOptions options)
    : store_(store), instances_(std::move(instances)), options_(std::move(options)) {
  std::sort(instances_.begin(), instances_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < instances_.size(); ++i) index_.emplace(instances_[i].id, i);
  for (auto& p : predictions) runs_[p.run_id][p.instance_id] = std::move(p);
}

AnnotationService::~AnnotationService() { stop(); }

const Instance& AnnotationService::instance(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ServiceError(ServiceError::Kind::UnknownInstance, "unknown instance " + id);
  return instances_[it->second];
}

json AnnotationService::list_instances(const std::map<std::string, std::string>& filters) const {
  auto filter = [&](const char* key) -> const std::string* {
    auto it = filters.find(key);
    return it == filters.end() || it->second.empty() ? nullptr : &it->second;
  };
  std::optional<TargetGroup> group;
  if (auto g = filter("group")) {
    group = try_parse_target(*g);
    if (!group) throw bad_request("unknown group \"" + *g + "\"");
  }
  std::optional<int> decade;
  if (auto d = filter("decade")) decade = parse_int(*d, "decade");
  const std::string* status = filter("status");
  const std::string* keyword = filter("keyword");

  const auto labels = store_.labels();
  const auto consensus = store_.consensus_all();
  json items = json::array();
  for (const auto& i : instances_) {
    if (group && i.target != *group) continue;
    if (decade && i.decade != *decade) continue;
    if (keyword && std::find(i.keywords.begin(), i.keywords.end(), *keyword) == i.keywords.end() &&
        i.keyword != *keyword)
      continue;
    const auto l = labels.find(i.id);
    const std::size_t n = l == labels.end() ? 0 : l->second.size();
    const auto c = consensus.find(i.id);
    const auto st = status_of(n, c == consensus.end() ? std::nullopt : std::optional<Consensus>(c->second));
    if (status && st != *status) continue;
    items.push_back({{"id", i.id},
                     {"target", to_string(i.target)},
                     {"keyword", i.keyword},
                     {"date", i.date.iso()},
                     {"decade", i.decade},
                     {"status", st},
                     {"annotation_count", n}});
  }
  return {{"count", items.size()}, {"instances", items}};
}

json AnnotationService::instance_detail(const std::string& id) const {
  const auto& i = instance(id);
  json out = blinded(i);
  out["speaker"] = i.speaker;
  out["party"] = to_string(i.party);
  out["protocol_id"] = i.protocol_id;
  const auto labels = store_.labels();
  const auto l = labels.find(id);
  out["annotations"] = l == labels.end() ? json::object() : label_map(l->second);
  const auto c = store_.consensus(id);
  out["consensus"] = consensus_json(c);
  out["status"] = status_of(l == labels.end() ? 0 : l->second.size(), c);
  json preds = json::object();
  for (const auto& [run, by] : runs_)
    if (auto p = by.find(id); p != by.end()) preds[run] = p->second;
  out["predictions"] = preds;
  json adj = json::array();
  for (const auto& a : store_.adjudications())
    if (a.instance_id == id)
      adj.push_back({{"revision", a.revision},
                     {"trigger", to_string(a.trigger)},
                     {"resolution", a.resolution ? json(to_string(*a.resolution)) : json(nullptr)},
                     {"resolver", a.resolver},
                     {"note", a.note}});
  out["adjudications"] = adj;
  return out;
}

std::optional<json> AnnotationService::next_task(const std::string& annotator) const {
  if (annotator.empty()) throw bad_request("query parameter \"annotator\" is required");
  const auto labels = store_.labels();
  const Instance* best = nullptr;
  std::size_t best_n = 0;
  // instances_ is sorted by id, so the first minimum wins the tie-break.
  for (const auto& i : instances_) {
    const auto l = labels.find(i.id);
    const std::size_t n = l == labels.end() ? 0 : l->second.size();
    if (l != labels.end() && l->second.count(annotator)) continue;
    if (!best || n < best_n) {
      best = &i;
      best_n = n;
    }
  }
  if (!best) return std::nullopt;
  json out = blinded(*best);
  out["annotation_count"] = best_n;
  return out;
}

json AnnotationService::post_annotation(const json& body, bool supersede_query) {
  if (!body.is_object()) throw bad_request("body must be a JSON object");
  const auto id = required_string(body, "instance_id");
  const auto annotator = required_string(body, "annotator_id");
  const FineLabel fine = label_from_request(body);
  instance(id);
  const bool supersede = supersede_query || (body.contains("supersede") && body["supersede"].is_boolean() &&
                                             body["supersede"].get<bool>());
  const auto rec = store_.add_annotation(id, annotator, fine, supersede);
  const auto c = store_.consensus(id);
  return {{"revision", rec.revision},
          {"instance_id", id},
          {"annotator_id", annotator},
          {"fine_label", to_string(fine)},
          {"high_label", to_string(fine_to_high(fine))},
          {"consensus", consensus_json(c)},
          {"tie", !c.has_value()}};
}

json AnnotationService::agreement(Level level) const {
  const auto labels = annotator_labels(store_.records(), level);
  json out = {{"level", to_string(level)}, {"annotators", labels.size()}, {"revision", store_.revision()}};
  try {
    const auto pk = pairwise_kappa(labels);
    json pairs = json::array();
    for (const auto& p : pk.pairs) pairs.push_back({{"a", p.a}, {"b", p.b}, {"shared", p.shared}, {"kappa", p.kappa}});
    out["average"] = pk.mean;
    out["pairs"] = pairs;
  } catch (const EvalError& e) {
    out["average"] = nullptr;
    out["pairs"] = json::array();
    out["reason"] = e.what();
  }
  return out;
}

json AnnotationService::disagreements(const std::string& run, std::optional<int> decade) const {
  const std::map<std::string, Prediction>* preds = nullptr;
  if (!run.empty()) {
    auto it = runs_.find(run);
    if (it == runs_.end()) throw ServiceError(ServiceError::Kind::UnknownInstance, "unknown run " + run);
    preds = &it->second;
  }
  const auto labels = store_.labels();
  const auto consensus = store_.consensus_all();
  json items = json::array();
  for (const auto& i : instances_) {
    if (decade && i.decade != *decade) continue;
    const auto l = labels.find(i.id);
    const auto c = consensus.find(i.id);
    const std::optional<Consensus> cons = c == consensus.end() ? std::nullopt : std::optional<Consensus>(c->second);
    if (l != labels.end() && disagree(l->second))
      items.push_back({{"instance_id", i.id},
                       {"kind", "annotator"},
                       {"decade", i.decade},
                       {"labels", label_map(l->second)},
                       {"consensus", consensus_json(cons)},
                       {"tie", !cons.has_value()}});
    if (preds && cons)
      if (auto p = preds->find(i.id); p != preds->end() && p->second.status == PredictionStatus::Ok &&
                                      p->second.fine && *p->second.fine != cons->fine)
        items.push_back({{"instance_id", i.id},
                         {"kind", "model"},
                         {"decade", i.decade},
                         {"run", run},
                         {"prediction", to_string(*p->second.fine)},
                         {"raw_output", p->second.raw_fine.empty() ? p->second.raw_high : p->second.raw_fine},
                         {"consensus", consensus_json(cons)}});
  }
  return {{"count", items.size()}, {"items", items}};
}

json AnnotationService::adjudication_queue() const {
  const auto labels = store_.labels();
  json pending = json::array();
  for (const auto& id : store_.unresolved_ties())
    pending.push_back({{"instance_id", id}, {"trigger", "vote_tie"}, {"labels", label_map(labels.at(id))}});
  json resolved = json::array();
  for (const auto& a : store_.adjudications())
    if (a.resolution)
      resolved.push_back({{"instance_id", a.instance_id},
                          {"revision", a.revision},
                          {"trigger", to_string(a.trigger)},
                          {"resolution", to_string(*a.resolution)},
                          {"resolver", a.resolver},
                          {"note", a.note}});
  return {{"pending", pending}, {"resolved", resolved}};
}

json AnnotationService::post_adjudication(const json& body) {
  if (!body.is_object()) throw bad_request("body must be a JSON object");
  const auto id = required_string(body, "instance_id");
  FineLabel resolution;
  if (body.contains("resolution") && body["resolution"].is_string()) {
    const auto r = try_parse_fine(body["resolution"].get<std::string>());
    if (!r) throw bad_request("unknown resolution label \"" + body["resolution"].get<std::string>() + "\"");
    resolution = *r;
  } else if (body.contains("resolution") && body["resolution"].is_object()) {
    resolution = label_from_request(body["resolution"]);
  } else {
    throw bad_request("field \"resolution\" is required");
  }
  instance(id);

  std::optional<AdjudicationTrigger> trigger;
  if (body.contains("trigger")) {
    if (!body["trigger"].is_string() || !(trigger = parse_trigger(body["trigger"].get<std::string>())))
      throw bad_request("unknown trigger");
  } else {
    const auto labels = store_.labels();
    const auto l = labels.find(id);
    if (l != labels.end() && !store_.consensus(id))
      trigger = AdjudicationTrigger::VoteTie;
    else if (l != labels.end() && disagree(l->second))
      trigger = AdjudicationTrigger::AnnotatorDisagreement;
    else
      trigger = AdjudicationTrigger::ModelDisagreement;
  }
  const auto adj = store_.add_adjudication(id, *trigger, resolution, body.value("resolver", std::string("adjudicator")),
                                           body.value("note", std::string()));
  return {{"revision", adj.revision},
          {"instance_id", id},
          {"trigger", to_string(adj.trigger)},
          {"resolution", to_string(resolution)},
          {"consensus", consensus_json(store_.consensus(id))}};
}

std::string AnnotationService::export_gold() const { return export_gold_jsonl(store_); }

// --- HTTP ---------------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const ServiceError& e) {
      send_json(res, {{"error", e.http_status() == 409 ? "duplicate" : "error"}, {"message", e.what()}},
                e.http_status());
    } catch (const json::exception& e) {
      send_json(res, {{"error", "invalid_json"}, {"message", e.what()}}, 400);
    } catch (const std::exception& e) {
      send_json(res, {{"error", "internal"}, {"message", e.what()}}, 500);
    }
  };
}

std::map<std::string, std::string> query(const httplib::Request& req) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : req.params) out[k] = v;
  return out;
}

}  // namespace

void AnnotationService::install_routes() {
  auto& s = *server_;
  if (!options_.token.empty()) {
    const std::string expected = "Bearer " + options_.token;
    s.set_pre_routing_handler([expected](const httplib::Request& req, httplib::Response& res) {
      if (req.path.rfind("/api/", 0) == 0 && req.get_header_value("Authorization") != expected) {
        send_json(res, {{"error", "unauthorized"}, {"message", "missing or wrong bearer token"}}, 401);
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });
  }

  s.Get("/api/health", guarded([this](const auto&, auto& res) {
          send_json(res, {{"status", "ok"}, {"revision", store_.revision()}});
        }));
  s.Get("/api/instances", guarded([this](const auto& req, auto& res) { send_json(res, list_instances(query(req))); }));
  s.Get(R"(/api/instances/([^/]+))", guarded([this](const auto& req, auto& res) {
          send_json(res, instance_detail(req.matches[1]));
        }));
  s.Get("/api/queue/next", guarded([this](const auto& req, auto& res) {
          auto task = next_task(req.get_param_value("annotator"));
          if (task)
            send_json(res, *task);
          else
            res.status = 204;
        }));
  s.Post("/api/annotations", guarded([this](const auto& req, auto& res) {
           send_json(res, post_annotation(json::parse(req.body), req.get_param_value("supersede") == "true"), 201);
         }));
  s.Get("/api/agreement", guarded([this](const auto& req, auto& res) {
          const auto level = req.has_param("level") ? parse_level(req.get_param_value("level")) : Level::Fine;
          if (!level) throw bad_request("level must be high or fine");
          send_json(res, agreement(*level));
        }));
  s.Get("/api/disagreements", guarded([this](const auto& req, auto& res) {
          std::optional<int> decade;
          if (req.has_param("decade") && !req.get_param_value("decade").empty())
            decade = parse_int(req.get_param_value("decade"), "decade");
          send_json(res, disagreements(req.get_param_value("run"), decade));
        }));
  s.Get("/api/adjudications", guarded([this](const auto&, auto& res) { send_json(res, adjudication_queue()); }));
  s.Post("/api/adjudications", guarded([this](const auto& req, auto& res) {
           send_json(res, post_adjudication(json::parse(req.body)), 201);
         }));
  s.Get("/api/export/gold", guarded([this](const auto&, auto& res) {
          res.set_content(export_gold(), "application/x-ndjson");
        }));
  if (!options_.ui_dir.empty()) s.set_mount_point("/", options_.ui_dir.string());
}

int AnnotationService::start() {
  // Shared with the server thread, which outlives this frame.
  auto bound = std::make_shared<std::promise<int>>();
  thread_ = std::thread([this, bound] {
    bool sent = false;
    run([&](int p) {
      bound->set_value(p);
      sent = true;
    });
    if (!sent) bound->set_value(-1);
  });
  const int port = bound->get_future().get();
  if (port <= 0) {
    stop();
    throw ServiceError(ServiceError::Kind::Io, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
  }
  return port;
}

void AnnotationService::run(const std::function<void(int port)>& on_bound) {
  server_ = std::make_unique<httplib::Server>();
  const int threads = options_.threads;
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  install_routes();
  int port = options_.port;
  if (port == 0)
    port = server_->bind_to_any_port(options_.host);
  else if (!server_->bind_to_port(options_.host, port))
    port = -1;
  if (port <= 0) {
    if (on_bound) on_bound(-1);
    return;
  }
  port_ = port;
  if (on_bound) on_bound(port);
  server_->listen_after_bind();
}

void AnnotationService::stop() {
  if (server_ && thread_.joinable() && port_ > 0) server_->wait_until_ready();
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace parlframe
