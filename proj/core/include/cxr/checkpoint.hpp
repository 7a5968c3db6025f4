#pragma once

#include <string>

#include "cxr/models.hpp"
#include "cxr/trainer.hpp"

namespace cxr {

struct Checkpoint {
  Model model;
  AdamState state;
  TrainConfig config;
};

// Checkpoint directory: params_*.npy, adam_m_*.npy, adam_v_*.npy,
// stats_*.npy (batchnorm running statistics, when present), config.json and
// a `version` file. Round trips restore parameters, moments and counters
// bit-for-bit.
void save_checkpoint(Model& model, const AdamState& state, const TrainConfig& config,
                     const std::string& dir);

// Rejects version mismatches and truncated or inconsistent files without
// returning a partial model.
Checkpoint load_checkpoint(const std::string& dir);

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace cxr
