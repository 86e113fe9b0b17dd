#include "blockforge/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "blockforge/errors.hpp"
#include "json.hpp"

namespace blockforge {

using nlohmann::json;

namespace {

json arch_json(const Architecture& a) {
  return {{"d", a.d}, {"base_width", a.base_width}, {"levels", a.levels}, {"stem", a.stem}, {"leak", a.leak}};
}

Architecture arch_from(const json& j) {
  Architecture a;
  a.d = j.at("d").get<int>();
  a.base_width = j.at("base_width").get<int>();
  a.levels = j.at("levels").get<int>();
  a.stem = j.at("stem").get<int>();
  a.leak = j.at("leak").get<double>();
  return a;
}

json config_json(const TrainingConfig& c) {
  const ActionSpaceConfig& ac = c.actions;
  return {{"gamma", c.gamma},
          {"learning_rate", c.learning_rate},
          {"episodes", c.episodes},
          {"batch", c.batch},
          {"n_policy_iter", c.n_policy_iter},
          {"n_optim_iter", c.n_optim_iter},
          {"epsilon_start", c.epsilon_start},
          {"epsilon_end", c.epsilon_end},
          {"epsilon_decay_episodes", c.epsilon_decay_episodes},
          {"seed", c.seed},
          {"capacity", c.capacity},
          {"features", {{"d", c.features.d}, {"sigma_px", c.features.sigma_px}, {"reward_c", c.features.reward_c}}},
          {"arch", arch_json(c.arch)},
          {"actions",
           {{"shifts_per_face", ac.shifts_per_face},
            {"floor_step", ac.floor_step},
            {"dedupe_resolution", ac.dedupe_resolution},
            {"support_margin", ac.support_margin},
            {"contact_gap", ac.contact.gap},
            {"contact_angle", ac.contact.angle},
            {"contact_min_length", ac.contact.min_length}}}};
}

TrainingConfig config_from(const json& j) {
  TrainingConfig c;
  c.gamma = j.at("gamma").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.episodes = j.at("episodes").get<int>();
  c.batch = j.at("batch").get<int>();
  c.n_policy_iter = j.at("n_policy_iter").get<int>();
  c.n_optim_iter = j.at("n_optim_iter").get<int>();
  c.epsilon_start = j.at("epsilon_start").get<double>();
  c.epsilon_end = j.at("epsilon_end").get<double>();
  c.epsilon_decay_episodes = j.at("epsilon_decay_episodes").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.capacity = j.at("capacity").get<std::size_t>();
  const json& f = j.at("features");
  c.features.d = f.at("d").get<int>();
  c.features.sigma_px = f.at("sigma_px").get<double>();
  c.features.reward_c = f.at("reward_c").get<double>();
  c.arch = arch_from(j.at("arch"));
  const json& a = j.at("actions");
  c.actions.shifts_per_face = a.at("shifts_per_face").get<int>();
  c.actions.floor_step = a.at("floor_step").get<double>();
  c.actions.dedupe_resolution = a.at("dedupe_resolution").get<double>();
  c.actions.support_margin = a.at("support_margin").get<double>();
  c.actions.contact.gap = a.at("contact_gap").get<double>();
  c.actions.contact.angle = a.at("contact_angle").get<double>();
  c.actions.contact.min_length = a.at("contact_min_length").get<double>();
  return c;
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

}  // namespace

std::string config_to_json(const TrainingConfig& cfg) { return config_json(cfg).dump(2); }

TrainingConfig config_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(std::string("malformed training config: ") + e.what());
  }
}

void save_checkpoint(const ApproximatorParams& params, const TrainingConfig& cfg, const std::filesystem::path& path) {
  json manifest = json::array();
  for (const ParamSpec& s : params.manifest) manifest.push_back({{"name", s.name}, {"shape", s.shape}, {"offset", s.offset}});
  const json header = {{"arch", arch_json(params.arch)},
                       {"d", params.arch.d},
                       {"gamma", cfg.gamma},
                       {"sigma_px", cfg.features.sigma_px},
                       {"reward_c", cfg.features.reward_c},
                       {"row_orientation", "bottom_up"},
                       {"manifest", manifest},
                       {"payload_bytes", params.values.size() * 4},
                       {"config", config_json(cfg)}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out << kCheckpointMagic << "\n" << header.dump() << "\n";
  for (float v : params.values) {
    const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(v));
    out.write(reinterpret_cast<const char*>(&bits), 4);
  }
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<int> expected_d) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string magic;
  std::string header_line;
  if (!std::getline(in, magic) || magic != kCheckpointMagic) {
    throw CheckpointError(path.string() + ": not a BFSF1 checkpoint (bad magic or version)");
  }
  if (!std::getline(in, header_line)) throw CheckpointError(path.string() + ": missing header");
  const std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Checkpoint ck;
  json header;
  std::size_t payload_bytes = 0;
  try {
    header = json::parse(header_line);
    ck.params.arch = arch_from(header.at("arch"));
    ck.config = config_from(header.at("config"));
    payload_bytes = header.at("payload_bytes").get<std::size_t>();
    if (header.at("row_orientation").get<std::string>() != "bottom_up") {
      throw CheckpointError(path.string() + ": unsupported row orientation");
    }
    if (header.at("d").get<int>() != ck.params.arch.d) throw CheckpointError(path.string() + ": inconsistent d");
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": malformed header: " + e.what());
  }
  try {
    ck.params.manifest = parameter_manifest(ck.params.arch);
  } catch (const ShapeError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  const json& stored = header.at("manifest");
  bool same = stored.is_array() && stored.size() == ck.params.manifest.size();
  for (std::size_t i = 0; same && i < stored.size(); ++i) {
    const ParamSpec& s = ck.params.manifest[i];
    same = stored[i].value("name", "") == s.name && stored[i].value("shape", std::vector<int>{}) == s.shape &&
           stored[i].value("offset", std::size_t{0}) == s.offset;
  }
  if (!same) throw CheckpointError(path.string() + ": parameter manifest does not match the architecture");
  const ParamSpec& last = ck.params.manifest.back();
  const std::size_t count = last.offset + last.size();
  if (payload_bytes != count * 4) throw CheckpointError(path.string() + ": payload size disagrees with the manifest");
  if (payload.size() < payload_bytes) {
    throw CheckpointError(path.string() + ": truncated payload (" + std::to_string(payload.size()) + " of " +
                          std::to_string(payload_bytes) + " bytes)");
  }
  if (payload.size() > payload_bytes) throw CheckpointError(path.string() + ": trailing bytes after the payload");
  ck.params.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, payload.data() + 4 * i, 4);
    ck.params.values[i] = std::bit_cast<float>(to_le(bits));
  }
  if (expected_d && *expected_d != ck.params.arch.d) {
    throw CheckpointError(path.string() + ": checkpoint was trained at d = " + std::to_string(ck.params.arch.d) +
                          " but d = " + std::to_string(*expected_d) + " was requested");
  }
  return ck;
}

}  // namespace blockforge
