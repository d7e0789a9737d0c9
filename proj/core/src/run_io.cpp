#include "promptcanary/run_io.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "promptcanary/errors.hpp"
#include "promptcanary/remote_model.hpp"
#include "promptcanary/tiny_lm.hpp"

namespace canary {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items())
    if (!known.contains(key)) throw SchemaError("unknown key \"" + key + "\" in " + where);
}

json model_spec_to_json(const ModelSpec& spec) {
  return json{{"kind", spec.kind},
              {"checkpoint", spec.checkpoint},
              {"endpoint_url", spec.endpoint_url},
              {"auth_token_env", spec.auth_token_env},
              {"model_id", spec.model_id}};
}

ModelSpec model_spec_from_json(const json& obj, const std::string& where) {
  if (!obj.is_object()) throw SchemaError(where + " must be an object");
  reject_unknown_keys(obj, {"kind", "checkpoint", "endpoint_url", "auth_token_env", "model_id"},
                      where);
  ModelSpec spec;
  try {
    spec.kind = obj.value("kind", spec.kind);
    spec.checkpoint = obj.value("checkpoint", spec.checkpoint);
    spec.endpoint_url = obj.value("endpoint_url", spec.endpoint_url);
    spec.auth_token_env = obj.value("auth_token_env", spec.auth_token_env);
    spec.model_id = obj.value("model_id", spec.model_id);
  } catch (const json::exception& e) {
    throw SchemaError(where + ": " + e.what());
  }
  return spec;
}

}  // namespace

std::string run_config_to_json(const RunConfig& cfg) {
  json j{{"detector", model_spec_to_json(cfg.detector)},
         {"backend", model_spec_to_json(cfg.backend)},
         {"trainer", json::parse(trainer_config_to_json(cfg.trainer))},
         {"instruction_template", cfg.instruction_template},
         {"attacks", cfg.attacks},
         {"corpus_path", cfg.corpus_path},
         {"eval_corpus_path", cfg.eval_corpus_path},
         {"seed", cfg.seed},
         {"output_dir", cfg.output_dir}};
  return j.dump(2) + "\n";
}

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception&) {
    throw ParseError("run config is not valid json");
  }
  if (!j.is_object()) throw SchemaError("run config must be a json object");
  reject_unknown_keys(j,
                      {"detector", "backend", "trainer", "instruction_template", "attacks",
                       "corpus_path", "eval_corpus_path", "seed", "output_dir"},
                      "run config");
  RunConfig cfg;
  try {
    if (j.contains("detector")) cfg.detector = model_spec_from_json(j["detector"], "detector");
    if (j.contains("backend")) cfg.backend = model_spec_from_json(j["backend"], "backend");
    if (j.contains("trainer")) cfg.trainer = trainer_config_from_json(j["trainer"].dump());
    cfg.instruction_template = j.value("instruction_template", cfg.instruction_template);
    cfg.attacks = j.value("attacks", cfg.attacks);
    cfg.corpus_path = j.value("corpus_path", cfg.corpus_path);
    cfg.eval_corpus_path = j.value("eval_corpus_path", cfg.eval_corpus_path);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("run config: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return run_config_from_json(text);
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << run_config_to_json(cfg);
  if (!out) throw ParseError("cannot write " + path.string());
}

void write_key_manifest(const SecretKey& key, const std::filesystem::path& path) {
  if (key.value.empty()) throw InvalidArgumentError("key value is empty");
  {
    // Create empty and restrict permissions before the key value touches disk.
    std::ofstream touch(path);
    if (!touch) throw ParseError("cannot write " + path.string());
  }
  std::filesystem::permissions(
      path, std::filesystem::perms::owner_read | std::filesystem::perms::owner_write,
      std::filesystem::perm_options::replace);
  const json j{{"value", key.value},
               {"alphabet", key.alphabet},
               {"length", key.length},
               {"fingerprint", key_fingerprint(key)}};
  std::ofstream out(path);
  out << j.dump(2) << "\n";
  if (!out) throw ParseError("cannot write " + path.string());
}

SecretKey read_key_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception&) {
    throw ParseError("key manifest " + path.string() + " is not valid json");
  }
  if (!j.is_object()) throw SchemaError("key manifest must be a json object");
  reject_unknown_keys(j, {"value", "alphabet", "length", "fingerprint"}, "key manifest");
  SecretKey key;
  std::string fingerprint;
  try {
    key.value = j.at("value").get<std::string>();
    key.alphabet = j.at("alphabet").get<std::string>();
    key.length = j.at("length").get<int>();
    fingerprint = j.at("fingerprint").get<std::string>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("key manifest: ") + e.what());
  }
  if (key.value.size() != static_cast<std::size_t>(key.length))
    throw SchemaError("key manifest length does not match the value");
  for (char c : key.value)
    if (key.alphabet.find(c) == std::string::npos)
      throw SchemaError("key manifest value uses characters outside its alphabet");
  if (fingerprint != key_fingerprint(key))
    throw SchemaError("key manifest fingerprint does not match the value");
  return key;
}

std::filesystem::path ensure_run_dir(const std::filesystem::path& dir) {
  if (dir.empty()) throw InvalidArgumentError("run directory path is empty");
  std::filesystem::create_directories(dir / "checkpoints");
  std::filesystem::create_directories(dir / "samples");
  return dir;
}

std::unique_ptr<GenerativeModel> load_model(const ModelSpec& spec) {
  if (spec.kind == "tiny") {
    if (spec.checkpoint.empty()) throw SchemaError("tiny model spec needs a checkpoint path");
    return std::make_unique<TinyLm>(TinyLm::load(spec.checkpoint));
  }
  if (spec.kind == "remote") {
    if (spec.endpoint_url.empty()) throw SchemaError("remote model spec needs an endpoint url");
    RemoteModelConfig cfg;
    cfg.endpoint_url = spec.endpoint_url;
    cfg.auth_token_env = spec.auth_token_env;
    if (!spec.model_id.empty()) cfg.model_id = spec.model_id;
    return std::make_unique<RemoteModel>(cfg);
  }
  throw SchemaError("unknown model kind \"" + spec.kind + "\"");
}

}  // namespace canary
