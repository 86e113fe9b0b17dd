#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "blockforge/learner.hpp"
#include "blockforge/nn.hpp"

namespace blockforge {

// File layout: the line "BFSF1", one line of JSON describing the
// architecture, d, gamma, sigma, C, row orientation, the parameter manifest
// and the training config, then the parameters as little-endian float32 in
// manifest order.
inline constexpr const char* kCheckpointMagic = "BFSF1";

struct Checkpoint {
  ApproximatorParams params;
  TrainingConfig config;
};

void save_checkpoint(const ApproximatorParams& params, const TrainingConfig& cfg, const std::filesystem::path& path);

// Throws CheckpointError on a bad magic string, malformed header, manifest
// mismatch, truncated payload, or when `expected_d` differs from the stored d.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<int> expected_d = {});

std::string config_to_json(const TrainingConfig& cfg);
TrainingConfig config_from_json(const std::string& text);

}  // namespace blockforge
