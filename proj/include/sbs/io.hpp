#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "sbs/core.hpp"

// gridmap/json interchange: {"rows","cols","cell_size_m","kind","values"} for
// maps and the same header with "blocked" for obstacle masks. Non-finite map
// values (blocked-cell sentinels) are written as null.
namespace sbs::io {

using nlohmann::json;

json to_json(const GridMap& map);
json to_json(const ObstacleMask& mask);
GridMap map_from_json(const json& j);
ObstacleMask mask_from_json(const json& j);

GridMap read_map(const std::filesystem::path& path);
void write_map(const std::filesystem::path& path, const GridMap& map);
ObstacleMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const ObstacleMask& mask);

json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace sbs::io
