#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "cli_internal.hpp"
#include "gcs/errors.hpp"
#include "json.hpp"

namespace gcs::cli {

std::string format_number(double v) { return fmt::format("{:.17g}", v); }

std::string format_constellation(const Constellation& c, const ConstellationMeta& meta) {
  nlohmann::ordered_json j;
  j["format"] = "gcs-constellation";
  j["version"] = 1;
  j["M"] = c.size();
  nlohmann::ordered_json pts = nlohmann::ordered_json::array();
  for (const cd& p : c.points()) pts.push_back({p.real(), p.imag()});
  j["points"] = pts;
  nlohmann::ordered_json m;
  m["label"] = meta.label;
  m["channel"] = meta.channel;
  m["operating_point"] = meta.operating_point ? nlohmann::ordered_json(*meta.operating_point) : nullptr;
  m["seed"] = meta.seed ? nlohmann::ordered_json(*meta.seed) : nullptr;
  j["metadata"] = m;
  return j.dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_constellation(const std::filesystem::path& path, const Constellation& c,
                         const ConstellationMeta& meta) {
  write_text(path, format_constellation(c, meta));
}

ConstellationFile read_constellation(const std::filesystem::path& path) {
  const std::string name = path.string();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(name + ": not valid JSON: " + e.what());
  }
  try {
    if (j.value("format", "") != "gcs-constellation")
      throw IoError(name + ": not a constellation file");
    const auto M = j.at("M").get<std::size_t>();
    ComplexVec pts;
    for (const auto& p : j.at("points")) {
      if (!p.is_array() || p.size() != 2) throw IoError(name + ": each point must be [re, im]");
      pts.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
    if (pts.size() != M)
      throw IoError(fmt::format("{}: M = {} but the file lists {} points", name, M, pts.size()));
    ConstellationFile f{Constellation(pts), {}};
    if (M == 0) throw IoError(name + ": empty constellation");
    const double power = f.constellation.mean_power();
    if (std::abs(power - 1.0) > 1e-9)
      throw IoError(fmt::format("{}: mean power {:.17g} is not 1 (tolerance 1e-9)", name, power));
    if (j.contains("metadata")) {
      const auto& m = j["metadata"];
      f.meta.label = m.value("label", "");
      f.meta.channel = m.value("channel", "");
      if (m.contains("operating_point") && m["operating_point"].is_number())
        f.meta.operating_point = m["operating_point"].get<double>();
      if (m.contains("seed") && m["seed"].is_number_unsigned()) f.meta.seed = m["seed"].get<std::uint64_t>();
    }
    if (f.meta.label.empty()) f.meta.label = path.stem().string();
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(name + ": malformed constellation file: " + e.what());
  }
}

}  // namespace gcs::cli
