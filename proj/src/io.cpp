#include "sbs/io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace sbs::io {

namespace {

json header(const GridSpec& spec) {
    return json{{"rows", spec.rows}, {"cols", spec.cols}, {"cell_size_m", spec.cell_size_m}};
}

GridSpec spec_from_json(const json& j) {
    try {
        return GridSpec(j.at("rows").get<int>(), j.at("cols").get<int>(), j.at("cell_size_m").get<double>());
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed gridmap header: ") + e.what());
    }
}

}  // namespace

json to_json(const GridMap& map) {
    json j = header(map.spec());
    j["kind"] = std::string(to_string(map.kind()));
    json values = json::array();
    for (double v : map.values()) {
        if (std::isfinite(v)) {
            values.push_back(v);
        } else {
            values.push_back(nullptr);
        }
    }
    j["values"] = std::move(values);
    return j;
}

json to_json(const ObstacleMask& mask) {
    json j = header(mask.spec());
    json blocked = json::array();
    for (bool b : mask.cells()) blocked.push_back(b);
    j["blocked"] = std::move(blocked);
    return j;
}

GridMap map_from_json(const json& j) {
    const GridSpec spec = spec_from_json(j);
    const auto& raw = j.at("values");
    if (!raw.is_array()) throw ValidationError("gridmap values must be an array");
    std::vector<double> values;
    values.reserve(raw.size());
    for (const auto& v : raw) {
        values.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
    }
    const MapKind kind = j.contains("kind") ? map_kind_from_string(j["kind"].get<std::string>()) : MapKind::truth;
    return GridMap(spec, kind, std::move(values));
}

ObstacleMask mask_from_json(const json& j) {
    const GridSpec spec = spec_from_json(j);
    std::vector<bool> blocked;
    for (const auto& v : j.at("blocked")) blocked.push_back(v.get<bool>());
    return ObstacleMask(spec, std::move(blocked));
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << text;
}

GridMap read_map(const std::filesystem::path& path) { return map_from_json(read_json(path)); }

void write_map(const std::filesystem::path& path, const GridMap& map) { write_text(path, to_json(map).dump() + "\n"); }

ObstacleMask read_mask(const std::filesystem::path& path) { return mask_from_json(read_json(path)); }

void write_mask(const std::filesystem::path& path, const ObstacleMask& mask) {
    write_text(path, to_json(mask).dump() + "\n");
}

}  // namespace sbs::io
