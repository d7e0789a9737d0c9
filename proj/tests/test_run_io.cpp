#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "promptcanary/errors.hpp"
#include "promptcanary/remote_model.hpp"
#include "promptcanary/run_io.hpp"
#include "promptcanary/tiny_lm.hpp"

using namespace canary;
using nlohmann::json;

namespace {

std::filesystem::path fresh_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("canary_runio_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

RunConfig sample_config() {
  RunConfig cfg;
  cfg.detector = {.kind = "tiny", .checkpoint = "runs/demo/checkpoints/g.pclm"};
  cfg.backend = {.kind = "remote",
                 .endpoint_url = "http://127.0.0.1:9900/v1/generate",
                 .auth_token_env = "BACKEND_TOKEN",
                 .model_id = "backend-stub"};
  cfg.trainer.rounds = 2;
  cfg.trainer.inner_steps = 4;
  cfg.attacks = {"combined", "escape"};
  cfg.corpus_path = "data/train.jsonl";
  cfg.eval_corpus_path = "data/eval.jsonl";
  cfg.seed = 99;
  cfg.output_dir = "runs/demo";
  return cfg;
}

}  // namespace

TEST_CASE("run config survives a JSON round trip") {
  const RunConfig cfg = sample_config();
  const std::string text = run_config_to_json(cfg);
  CHECK(run_config_from_json(text) == cfg);

  // Defaults reconstruct from an empty object.
  CHECK(run_config_from_json("{}") == RunConfig{});

  auto dir = fresh_dir("roundtrip");
  save_run_config(cfg, dir / "config.json");
  CHECK(load_run_config(dir / "config.json") == cfg);
  CHECK_THROWS_AS(load_run_config(dir / "missing.json"), ParseError);
}

TEST_CASE("run config parsing is strict") {
  CHECK_THROWS_AS(run_config_from_json("not json"), ParseError);
  CHECK_THROWS_AS(run_config_from_json("[1,2]"), SchemaError);
  CHECK_THROWS_AS(run_config_from_json(R"({"speed": 1})"), SchemaError);
  CHECK_THROWS_AS(run_config_from_json(R"({"detector": {"king": "tiny"}})"), SchemaError);
  CHECK_THROWS_AS(run_config_from_json(R"({"trainer": {"rouns": 1}})"), SchemaError);
  CHECK_THROWS_AS(run_config_from_json(R"({"seed": "high"})"), SchemaError);
  CHECK_THROWS_AS(run_config_from_json(R"({"detector": 3})"), SchemaError);
}

TEST_CASE("key manifest round trips with restricted permissions") {
  auto dir = fresh_dir("manifest");
  const SecretKey key = generate_secret_key(7);
  write_key_manifest(key, dir / "key.manifest");

  const auto perms = std::filesystem::status(dir / "key.manifest").permissions();
  CHECK((perms & std::filesystem::perms::group_all) == std::filesystem::perms::none);
  CHECK((perms & std::filesystem::perms::others_all) == std::filesystem::perms::none);
  CHECK((perms & std::filesystem::perms::owner_read) != std::filesystem::perms::none);

  CHECK(read_key_manifest(dir / "key.manifest") == key);

  const json j = json::parse(std::ifstream(dir / "key.manifest"));
  CHECK(j["fingerprint"] == key_fingerprint(key));
}

TEST_CASE("key manifest validation catches tampering") {
  auto dir = fresh_dir("tamper");
  const SecretKey key = generate_secret_key(5);
  write_key_manifest(key, dir / "key.manifest");
  json j = json::parse(std::ifstream(dir / "key.manifest"));

  auto write_variant = [&](const json& doc) {
    std::ofstream out(dir / "variant.json");
    out << doc.dump();
  };

  json flipped = j;
  std::string v = flipped["value"];
  v[0] = v[0] == 'A' ? 'B' : 'A';
  flipped["value"] = v;
  write_variant(flipped);
  CHECK_THROWS_AS(read_key_manifest(dir / "variant.json"), SchemaError);

  json short_len = j;
  short_len["length"] = key.length - 1;
  write_variant(short_len);
  CHECK_THROWS_AS(read_key_manifest(dir / "variant.json"), SchemaError);

  json off_alphabet = j;
  off_alphabet["alphabet"] = "0123456789";
  write_variant(off_alphabet);
  CHECK_THROWS_AS(read_key_manifest(dir / "variant.json"), SchemaError);

  json extra = j;
  extra["note"] = "hello";
  write_variant(extra);
  CHECK_THROWS_AS(read_key_manifest(dir / "variant.json"), SchemaError);

  write_variant(json::array());
  CHECK_THROWS_AS(read_key_manifest(dir / "variant.json"), SchemaError);

  std::ofstream(dir / "variant.json") << "###";
  CHECK_THROWS_AS(read_key_manifest(dir / "variant.json"), ParseError);
  CHECK_THROWS_AS(read_key_manifest(dir / "absent.json"), ParseError);

  CHECK_THROWS_AS(write_key_manifest(SecretKey{}, dir / "empty.json"), InvalidArgumentError);
}

TEST_CASE("run directory scaffolding creates the layout") {
  auto dir = fresh_dir("scaffold");
  const auto run = ensure_run_dir(dir / "run");
  CHECK(std::filesystem::is_directory(run / "checkpoints"));
  CHECK(std::filesystem::is_directory(run / "samples"));
  ensure_run_dir(dir / "run");  // idempotent
  CHECK_THROWS_AS(ensure_run_dir(""), InvalidArgumentError);
}

TEST_CASE("model specs materialize the right backends") {
  auto dir = fresh_dir("models");
  TinyLmConfig mc;
  mc.alphabet = "abc";
  mc.d_model = 8;
  mc.n_layers = 1;
  mc.n_heads = 1;
  mc.d_ff = 16;
  mc.max_seq = 16;
  mc.init_seed = 3;
  TinyLm original(mc);
  original.save(dir / "m.pclm");

  auto tiny = load_model({.kind = "tiny", .checkpoint = (dir / "m.pclm").string()});
  CHECK(tiny->capabilities().trainable);
  GenerationConfig gen;
  gen.max_tokens = 4;
  CHECK(tiny->generate("ab", gen) == original.generate("ab", gen));

  auto remote = load_model({.kind = "remote",
                            .endpoint_url = "http://127.0.0.1:9900/v1/generate",
                            .model_id = "backend-stub"});
  CHECK(remote->model_id() == "backend-stub");
  CHECK_FALSE(remote->capabilities().loss);

  CHECK_THROWS_AS(load_model({.kind = "tiny"}), SchemaError);
  CHECK_THROWS_AS(load_model({.kind = "remote"}), SchemaError);
  CHECK_THROWS_AS(load_model({.kind = "gguf"}), SchemaError);
}
