#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "rxl/data/scene.hpp"
#include "rxl/service/config.hpp"

namespace httplib {
class Server;
}

namespace rxl::service {

struct AnnotationTask {
  std::string task_id;
  std::string sentence_id;
  std::string scene_id;
  std::string target_id;  // never sent to clients
  std::string text;
};

struct AnnotationRecord {
  std::string task_id;
  std::string sentence_id;
  std::string worker_id;
  std::string chosen;  // object id or IMPOSSIBLE
  bool correct = false;
  double elapsed_ms = 0.0;
  std::int64_t received_at_ms = 0;  // server wall clock, audit only

  nlohmann::ordered_json to_json() const;
  static AnnotationRecord from_json(const nlohmann::json& j);
};

// JSON-lines file opened for append. Earlier lines are read back on open.
class RecordLog {
 public:
  explicit RecordLog(std::filesystem::path path);
  const std::vector<AnnotationRecord>& records() const { return records_; }
  void append(const AnnotationRecord& r);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::vector<AnnotationRecord> records_;
};

std::vector<AnnotationRecord> read_records(const std::filesystem::path& path);

// One task per sentence of the split, in dataset order.
std::vector<AnnotationTask> make_tasks(const data::Dataset& ds, const std::string& split);

// Scene payload for the client: size, grid, cell colors, candidate boxes and the sentence.
nlohmann::ordered_json task_payload(const data::Dataset& ds, const AnnotationTask& task);

struct Reply {
  int status = 200;
  nlohmann::ordered_json body;
};

// Transport-free core of the annotation API. Every public call takes the one mutex, so the
// record log has a single writer.
class AnnotationService {
 public:
  AnnotationService(const data::Dataset& ds, const ServeConfig& cfg);

  // The first task this worker has not answered that still needs responses; {"done": true} when none.
  Reply next_task(const std::string& worker_id);
  // Body {task_id, worker_id, chosen, elapsed_ms}. 201 with the stored record, 400 with field
  // errors, 409 for a repeated (task_id, worker_id).
  Reply submit(const std::string& body);
  Reply progress() const;

  std::vector<AnnotationRecord> records() const;

 private:
  const data::Dataset& ds_;
  ServeConfig cfg_;
  std::vector<AnnotationTask> tasks_;
  std::map<std::string, std::size_t> task_index_;
  std::vector<std::size_t> counts_;
  std::set<std::pair<std::string, std::string>> seen_;  // (task_id, worker_id)
  mutable std::mutex mu_;
  RecordLog log_;
};

// GET /task?worker_id=..., POST /response, GET /progress, static assets under / when configured.
void bind_routes(httplib::Server& server, AnnotationService& service, const std::string& static_dir);

// Blocks until the server stops.
void serve(const data::Dataset& ds, const ServeConfig& cfg);

// Dataset sentences that received records, with responses replaced by the records in log order.
// Elapsed times are converted to seconds.
data::Dataset with_recorded_responses(const data::Dataset& ds, const std::vector<AnnotationRecord>& records);

}  // namespace rxl::service
