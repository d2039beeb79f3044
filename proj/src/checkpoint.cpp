#include "cpe/checkpoint.hpp"

#include <fstream>

#include <fmt/format.h>

#include "cpe/error.hpp"

namespace cpe {

nlohmann::json tensors_to_json(const std::vector<diff::NamedTensor>& tensors, const nlohmann::json& metadata) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& t : tensors) {
    list.push_back({{"name", t.name}, {"shape", t.value.shape()}, {"data", t.value.values()}});
  }
  return {{"format", "cpe-checkpoint"}, {"version", kCheckpointVersion}, {"tensors", list}, {"metadata", metadata}};
}

std::vector<diff::NamedTensor> tensors_from_json(const nlohmann::json& doc) {
  if (doc.value("format", "") != "cpe-checkpoint") throw InputError("checkpoint: missing format header");
  const int version = doc.value("version", -1);
  if (version != kCheckpointVersion) {
    throw InputError(fmt::format("checkpoint: unsupported version {} (expected {})", version, kCheckpointVersion));
  }
  std::vector<diff::NamedTensor> out;
  try {
    for (const auto& t : doc.at("tensors")) {
      out.push_back({t.at("name").get<std::string>(),
                     diff::Tensor(t.at("shape").get<Shape>(), t.at("data").get<std::vector<double>>())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(fmt::format("checkpoint: malformed tensor entry: {}", e.what()));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<diff::NamedTensor>& tensors,
                     const nlohmann::json& metadata) {
  std::ofstream out(path);
  if (!out) throw InputError(fmt::format("checkpoint: cannot write {}", path.string()));
  out << tensors_to_json(tensors, metadata).dump() << '\n';
}

std::vector<diff::NamedTensor> load_checkpoint(const std::filesystem::path& path, nlohmann::json* metadata) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("checkpoint: cannot read {}", path.string()));
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(fmt::format("checkpoint: {} is not valid JSON: {}", path.string(), e.what()));
  }
  if (metadata != nullptr) *metadata = doc.value("metadata", nlohmann::json::object());
  return tensors_from_json(doc);
}

}  // namespace cpe
