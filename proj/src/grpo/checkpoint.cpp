#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cxrl/errors.hpp"
#include "cxrl/grpo.hpp"
#include "cxrl/util/hash.hpp"

namespace cxrl::grpo {

using ojson = nlohmann::ordered_json;

namespace {
constexpr const char* kFormat = "cxrl-toy-policy/1";
}

ojson checkpoint_json(const ToyPolicy& policy, const std::string& config_hash, std::size_t step) {
  return {{"format", kFormat},
          {"vocabulary", policy.vocabulary()},
          {"num_prompts", policy.num_prompts()},
          {"max_length", policy.max_length()},
          {"config_hash", config_hash},
          {"step", step},
          {"logits", policy.logits()}};
}

void save_checkpoint(const std::string& path, const ToyPolicy& policy, const std::string& config_hash,
                     std::size_t step) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << checkpoint_json(policy, config_hash, step).dump() << '\n';
  if (!out) throw IoError("write failed for checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path, const std::optional<std::string>& expected_hash) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  try {
    const ojson j = ojson::parse(in);
    if (j.value("format", std::string()) != kFormat) throw DataError("'" + path + "' is not a toy-policy checkpoint");
    ToyPolicy policy(j.at("vocabulary").get<std::vector<std::string>>(), j.at("num_prompts").get<std::size_t>(),
                     j.at("max_length").get<std::size_t>());
    auto logits = j.at("logits").get<std::vector<double>>();
    if (logits.size() != policy.logits().size()) throw DataError("checkpoint logits table has the wrong size");
    policy.logits() = std::move(logits);
    Checkpoint ck{std::move(policy), j.at("config_hash").get<std::string>(), j.at("step").get<std::size_t>()};
    if (expected_hash && ck.config_hash != *expected_hash) {
      throw DataError("checkpoint '" + path + "' was trained for config " + ck.config_hash + ", expected " +
                      *expected_hash);
    }
    return ck;
  } catch (const ojson::exception& e) {
    throw DataError("malformed checkpoint '" + path + "': " + e.what());
  }
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return to_hex(fnv1a64(buf.str()));
}

}  // namespace cxrl::grpo
