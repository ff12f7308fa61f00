#pragma once

#include <filesystem>
#include <string>

#include "decorr/model.hpp"
#include "json.hpp"

namespace decorr {

inline constexpr int kCheckpointVersion = 1;

/// Parameters, running statistics, optimizer velocity, and whitening
/// permutation/generator state. Doubles round-trip bit for bit.
nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

struct Checkpoint {
  Network network;
  nlohmann::json metadata;
};

void save_checkpoint(const std::filesystem::path& path, const Network& net,
                     const nlohmann::json& metadata = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace decorr
