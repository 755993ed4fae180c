#pragma once

// Checkpoint container:
//
//   offset 0   8 bytes   magic "DNCCCKPT"
//   offset 8   u32 LE    format version
//   offset 12  u64 LE    header length H
//   offset 20  H bytes   JSON header: spec, config, train_config, epoch, rng,
//                        metrics, block table, payload size and FNV-1a hash
//   offset 20+H          float64 LE blocks: parameters in declaration order,
//                        then one velocity block per parameter (if present)

#include <filesystem>
#include <optional>

#include <nlohmann/json.hpp>

#include "dncc/model.hpp"
#include "dncc/trainer.hpp"

namespace dncc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    EnsembleModel model;
    std::optional<TrainConfig> train_config;
    std::optional<TrainingState> state;
    nlohmann::json extra;  // caller-defined, e.g. the resolved run configuration
};

// Writes to `path` via a temporary file and rename, so an interrupted save
// leaves the previous checkpoint intact.
void save_checkpoint(const std::filesystem::path& path, const EnsembleModel& model,
                     const TrainConfig* train_config = nullptr, const TrainingState* state = nullptr,
                     const nlohmann::json& extra = nlohmann::json::object());

// Throws FormatError on bad magic, unsupported version, a corrupt or
// truncated header, size mismatches or a payload hash mismatch. Nothing is
// returned unless the whole file validates.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// JSON forms shared by the checkpoint header and run manifests.
nlohmann::json to_json(const BackboneSpec& spec);
nlohmann::json to_json(const EnsembleConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const EpochRecord& r);
BackboneSpec backbone_from_json(const nlohmann::json& j);
EnsembleConfig ensemble_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
EpochRecord epoch_record_from_json(const nlohmann::json& j);

}  // namespace dncc
