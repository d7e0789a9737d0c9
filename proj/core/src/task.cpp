#include "promptcanary/task.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "promptcanary/errors.hpp"
#include "promptcanary/text.hpp"

namespace canary {

namespace {

using nlohmann::json;

json task_to_json(const Task& t) {
  return json{{"instruction", t.instruction},
              {"data", t.data},
              {"desired_output", t.desired_output},
              {"task_kind", t.task_kind}};
}

std::string require_string(const json& j, const char* key, long line) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(std::string("missing field \"") + key + "\"", line);
  if (!it->is_string()) throw SchemaError(std::string("field \"") + key + "\" must be a string", line);
  return it->get<std::string>();
}

Task task_from_json(const json& j, long line) {
  if (!j.is_object()) throw SchemaError("task record must be an object", line);
  Task t;
  t.instruction = require_string(j, "instruction", line);
  t.data = require_string(j, "data", line);
  t.desired_output = require_string(j, "desired_output", line);
  t.task_kind = require_string(j, "task_kind", line);
  return t;
}

json sample_to_json(const ContaminatedSample& s) {
  json j{{"payload", s.payload},
         {"separator", s.separator},
         {"attack_id", s.attack_id},
         {"label", s.label},
         {"target", task_to_json(s.target)}};
  j["injected"] = s.injected ? task_to_json(*s.injected) : json(nullptr);
  return j;
}

ContaminatedSample sample_from_json(const json& j, long line) {
  if (!j.is_object()) throw SchemaError("sample record must be an object", line);
  ContaminatedSample s;
  s.payload = require_string(j, "payload", line);
  s.separator = require_string(j, "separator", line);
  s.attack_id = require_string(j, "attack_id", line);
  s.label = require_string(j, "label", line);
  if (s.label != "clean" && s.label != "contaminated")
    throw SchemaError("label must be \"clean\" or \"contaminated\"", line);
  if (s.attack_id != "none" && s.label != "contaminated")
    throw SchemaError("attack_id \"" + s.attack_id + "\" requires label \"contaminated\"", line);
  auto target = j.find("target");
  if (target == j.end()) throw SchemaError("missing field \"target\"", line);
  s.target = task_from_json(*target, line);
  auto injected = j.find("injected");
  if (injected != j.end() && !injected->is_null())
    s.injected = task_from_json(*injected, line);
  return s;
}

json parse_line(const std::string& text, long line) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError("malformed JSON record", line);
  return j;
}

template <typename Record, typename FromJson>
std::vector<Record> load_jsonl(const std::filesystem::path& path, FromJson from_json) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<Record> out;
  std::string text;
  long line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    out.push_back(from_json(parse_line(text, line), line));
  }
  return out;
}

template <typename Record, typename ToJson>
void save_jsonl(const std::vector<Record>& records, const std::filesystem::path& path,
                ToJson to_json) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

}  // namespace

ContaminatedSample contaminate(const Task& target, const Task& injected,
                               const std::string& separator,
                               const std::string& attack_id) {
  ContaminatedSample s;
  s.payload = join({target.data, separator, injected.instruction, injected.data});
  s.separator = separator;
  s.attack_id = attack_id;
  s.label = "contaminated";
  s.target = target;
  s.injected = injected;
  return s;
}

ContaminatedSample clean_sample(const Task& target) {
  ContaminatedSample s;
  s.payload = target.data;
  s.separator = "";
  s.attack_id = "none";
  s.label = "clean";
  s.target = target;
  return s;
}

TaskCorpus load_corpus(const std::filesystem::path& path) {
  TaskCorpus corpus;
  corpus.tasks = load_jsonl<Task>(path, task_from_json);
  if (corpus.tasks.empty()) throw ParseError("empty corpus: " + path.string());
  corpus.corpus_id = path.stem().string();
  return corpus;
}

void save_corpus(const TaskCorpus& corpus, const std::filesystem::path& path) {
  save_jsonl(corpus.tasks, path, task_to_json);
}

std::vector<ContaminatedSample> load_samples(const std::filesystem::path& path) {
  return load_jsonl<ContaminatedSample>(path, sample_from_json);
}

void save_samples(const std::vector<ContaminatedSample>& samples,
                  const std::filesystem::path& path) {
  save_jsonl(samples, path, sample_to_json);
}

}  // namespace canary
