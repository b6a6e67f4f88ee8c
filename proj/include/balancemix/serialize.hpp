#pragma once

#include <filesystem>

#include <json.hpp>

#include "balancemix/datagen.hpp"
#include "balancemix/metrics.hpp"
#include "balancemix/trainer.hpp"

namespace balancemix {

// Dataset file: one line of JSON (n, d, k, seed, noise spec) terminated by
// '\n', then row-major little-endian float32 features, then the true and
// observed label matrices one byte per entry.
void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

// Realized statistics echoed next to a generated dataset.
nlohmann::json dataset_manifest(const Dataset& ds);

nlohmann::json noise_to_json(const NoiseSpec& spec);
NoiseSpec noise_from_json(const nlohmann::json& j);

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json generator_config_to_json(const GeneratorConfig& config);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

nlohmann::json group_spec_to_json(const GroupSpec& spec);
GroupSpec group_spec_from_json(const nlohmann::json& j);

// {map_all, map_many, map_medium, map_few, per_class: [...], diagnostics: ...}
nlohmann::json metrics_to_json(const MetricsSnapshot& snapshot,
                               const ManagementDiagnostics* diagnostics = nullptr);
nlohmann::json diagnostics_to_json(const ManagementDiagnostics& d);

nlohmann::json epoch_report_to_json(const EpochReport& report);
nlohmann::json epoch_diagnostics_to_json(const EpochDiagnostics& diag);

struct Checkpoint {
    ModelState model;
    TrainConfig config;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Strict-schema helpers: reject unknown keys so config typos fail loudly.
void require_known_keys(const nlohmann::json& j, std::initializer_list<const char*> keys,
                        const std::string& where);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace balancemix
