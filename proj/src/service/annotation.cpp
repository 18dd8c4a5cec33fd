#include "rxl/service/annotation.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <unordered_map>

#include "httplib.h"

namespace rxl::service {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) s += (s.empty() ? "" : " ") + t;
  return s;
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

ordered_json field_error(const std::string& field, const std::string& message) {
  return {{"field", field}, {"message", message}};
}

}  // namespace

ordered_json AnnotationRecord::to_json() const {
  return {{"task_id", task_id},       {"sentence_id", sentence_id}, {"worker_id", worker_id},
          {"chosen", chosen},         {"correct", correct},         {"elapsed_ms", elapsed_ms},
          {"received_at_ms", received_at_ms}};
}

AnnotationRecord AnnotationRecord::from_json(const json& j) {
  AnnotationRecord r;
  r.task_id = j.at("task_id").get<std::string>();
  r.sentence_id = j.at("sentence_id").get<std::string>();
  r.worker_id = j.at("worker_id").get<std::string>();
  r.chosen = j.at("chosen").get<std::string>();
  r.correct = j.at("correct").get<bool>();
  r.elapsed_ms = j.at("elapsed_ms").get<double>();
  r.received_at_ms = j.value("received_at_ms", std::int64_t{0});
  return r;
}

std::vector<AnnotationRecord> read_records(const std::filesystem::path& path) {
  std::vector<AnnotationRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    try {
      out.push_back(AnnotationRecord::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw std::runtime_error("record log " + path.string() + " line " + std::to_string(no) + ": " + e.what());
    }
  }
  return out;
}

RecordLog::RecordLog(std::filesystem::path path) : path_(std::move(path)), records_(read_records(path_)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(path_, std::ios::app);
  if (!out_) throw std::runtime_error("record log: cannot open " + path_.string() + " for append");
}

void RecordLog::append(const AnnotationRecord& r) {
  out_ << r.to_json().dump() << '\n';
  out_.flush();
  if (!out_) throw std::runtime_error("record log: write to " + path_.string() + " failed");
  records_.push_back(r);
}

std::vector<AnnotationTask> make_tasks(const data::Dataset& ds, const std::string& split) {
  std::vector<AnnotationTask> tasks;
  for (const data::SentenceRecord* s : ds.sentences_in_split(split)) {
    tasks.push_back({"task-" + s->sentence_id, s->sentence_id, ds.scene_of(s->object_id).scene_id, s->object_id,
                     join_tokens(s->tokens)});
  }
  return tasks;
}

ordered_json task_payload(const data::Dataset& ds, const AnnotationTask& task) {
  const data::Scene& sc = ds.scene(task.scene_id);
  ordered_json boxes = ordered_json::array();
  for (const auto& o : sc.objects) {
    boxes.push_back({{"object_id", o.object_id}, {"x", o.box.x}, {"y", o.box.y}, {"w", o.box.w}, {"h", o.box.h}});
  }
  return {{"task_id", task.task_id},
          {"sentence", task.text},
          {"scene",
           {{"scene_id", sc.scene_id},
            {"width", sc.width},
            {"height", sc.height},
            {"grid", {sc.grid.rows, sc.grid.cols}},
            {"cell_colors", sc.cell_colors},
            {"boxes", boxes}}}};
}

AnnotationService::AnnotationService(const data::Dataset& ds, const ServeConfig& cfg)
    : ds_(ds), cfg_(cfg), tasks_(make_tasks(ds, cfg.split)), log_(cfg.record_log) {
  if (tasks_.empty()) throw std::runtime_error("serve: split '" + cfg.split + "' has no sentences");
  counts_.assign(tasks_.size(), 0);
  for (std::size_t i = 0; i < tasks_.size(); ++i) task_index_[tasks_[i].task_id] = i;
  for (const auto& r : log_.records()) {
    auto it = task_index_.find(r.task_id);
    if (it == task_index_.end()) {
      throw std::runtime_error("record log names unknown task '" + r.task_id + "'");
    }
    seen_.emplace(r.task_id, r.worker_id);
    ++counts_[it->second];
  }
}

Reply AnnotationService::next_task(const std::string& worker_id) {
  if (worker_id.empty()) {
    return {400, {{"errors", ordered_json::array({field_error("worker_id", "required query parameter")})}}};
  }
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (counts_[i] >= cfg_.workers_per_task || seen_.count({tasks_[i].task_id, worker_id})) continue;
    return {200, task_payload(ds_, tasks_[i])};
  }
  return {200, {{"done", true}}};
}

Reply AnnotationService::submit(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception&) {
    return {400, {{"errors", ordered_json::array({field_error("body", "not valid JSON")})}}};
  }
  if (!j.is_object()) return {400, {{"errors", ordered_json::array({field_error("body", "expected an object")})}}};

  ordered_json errors = ordered_json::array();
  auto text = [&](const char* key) -> std::string {
    if (!j.contains(key)) {
      errors.push_back(field_error(key, "missing"));
    } else if (!j[key].is_string() || j[key].get<std::string>().empty()) {
      errors.push_back(field_error(key, "must be a non-empty string"));
    } else {
      return j[key].get<std::string>();
    }
    return "";
  };
  const std::string task_id = text("task_id");
  const std::string worker_id = text("worker_id");
  const std::string chosen = text("chosen");
  double elapsed = 0.0;
  if (!j.contains("elapsed_ms")) {
    errors.push_back(field_error("elapsed_ms", "missing"));
  } else if (!j["elapsed_ms"].is_number()) {
    errors.push_back(field_error("elapsed_ms", "must be a number"));
  } else {
    elapsed = j["elapsed_ms"].get<double>();
    if (!std::isfinite(elapsed) || elapsed <= 0.0) errors.push_back(field_error("elapsed_ms", "must be > 0"));
  }

  std::lock_guard lock(mu_);
  const AnnotationTask* task = nullptr;
  if (!task_id.empty()) {
    auto it = task_index_.find(task_id);
    if (it == task_index_.end()) {
      errors.push_back(field_error("task_id", "unknown task"));
    } else {
      task = &tasks_[it->second];
    }
  }
  if (task != nullptr && !chosen.empty() && chosen != data::kImpossible) {
    bool in_scene = false;
    for (const auto& o : ds_.scene(task->scene_id).objects) in_scene = in_scene || o.object_id == chosen;
    if (!in_scene) errors.push_back(field_error("chosen", "not an object of the task's scene"));
  }
  if (!errors.empty()) return {400, {{"errors", errors}}};
  if (seen_.count({task_id, worker_id})) {
    return {409, {{"error", "duplicate response"}, {"task_id", task_id}, {"worker_id", worker_id}}};
  }

  AnnotationRecord r{task_id, task->sentence_id, worker_id, chosen, chosen == task->target_id, elapsed, now_ms()};
  log_.append(r);
  seen_.emplace(task_id, worker_id);
  ++counts_[task_index_.at(task_id)];
  return {201, r.to_json()};
}

Reply AnnotationService::progress() const {
  std::lock_guard lock(mu_);
  std::size_t complete = 0;
  std::set<std::string> workers;
  for (std::size_t c : counts_) complete += c >= cfg_.workers_per_task ? 1 : 0;
  for (const auto& [t, w] : seen_) workers.insert(w);
  return {200,
          {{"tasks", tasks_.size()},
           {"complete_tasks", complete},
           {"responses", log_.records().size()},
           {"workers", workers.size()},
           {"workers_per_task", cfg_.workers_per_task}}};
}

std::vector<AnnotationRecord> AnnotationService::records() const {
  std::lock_guard lock(mu_);
  return log_.records();
}

void bind_routes(httplib::Server& server, AnnotationService& service, const std::string& static_dir) {
  auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get("/task", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.next_task(req.has_param("worker_id") ? req.get_param_value("worker_id") : ""));
  });
  server.Post("/response", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.submit(req.body));
  });
  server.Get("/progress", [&service, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.progress());
  });
  if (!static_dir.empty() && !server.set_mount_point("/", static_dir)) {
    throw std::runtime_error("serve: static directory '" + static_dir + "' does not exist");
  }
}

void serve(const data::Dataset& ds, const ServeConfig& cfg) {
  AnnotationService service(ds, cfg);
  httplib::Server server;
  bind_routes(server, service, cfg.static_dir);
  std::cerr << "serving " << cfg.split << " tasks on http://" << cfg.host << ":" << cfg.port << "\n";
  if (!server.listen(cfg.host, cfg.port)) {
    throw std::runtime_error("serve: cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
  }
}

data::Dataset with_recorded_responses(const data::Dataset& ds, const std::vector<AnnotationRecord>& records) {
  std::unordered_map<std::string, std::vector<data::WorkerResponse>> by_sentence;
  for (const auto& r : records) {
    by_sentence[r.sentence_id].push_back({r.worker_id, r.chosen, r.correct, r.elapsed_ms / 1000.0});
  }
  std::vector<data::SentenceRecord> sentences;
  for (const auto& s : ds.sentences()) {
    auto it = by_sentence.find(s.sentence_id);
    if (it == by_sentence.end()) continue;
    data::SentenceRecord copy = s;
    copy.responses = it->second;
    copy.rank.reset();
    sentences.push_back(std::move(copy));
    by_sentence.erase(it);
  }
  if (!by_sentence.empty()) {
    throw std::runtime_error("records name unknown sentence '" + by_sentence.begin()->first + "'");
  }
  return data::Dataset(ds.scenes(), std::move(sentences), ds.splits());
}

}  // namespace rxl::service
