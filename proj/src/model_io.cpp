#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "itd/model.hpp"

namespace itd {

const char* arch_name(ArchKind a) {
  switch (a) {
    case ArchKind::Tiny: return "tiny";
    case ArchKind::WideResnet10x4: return "wrn_10_4";
  }
  return "tiny";
}

ArchKind arch_from_name(const std::string& name) {
  if (name == "tiny") return ArchKind::Tiny;
  if (name == "wrn_10_4" || name == "paper") return ArchKind::WideResnet10x4;
  fail(ErrorKind::ConfigError, "unknown architecture '" + name + "' (want tiny|wrn_10_4)");
}

void save_checkpoint(ClassifierModel<float>& model, const std::string& stem) {
  const auto parent = std::filesystem::path(stem).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  auto params = model.net.params();
  nlohmann::json manifest;
  manifest["format"] = 1;
  manifest["dtype"] = "f32";
  manifest["arch"] = arch_name(model.arch);
  manifest["input_side"] = model.input_side;
  manifest["num_classes"] = model.num_classes;
  manifest["seed"] = model.seed;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : params) {
    nlohmann::json t;
    t["name"] = p.name;
    t["shape"] = p.shape;
    t["trainable"] = p.trainable;
    tensors.push_back(std::move(t));
  }
  manifest["tensors"] = std::move(tensors);

  std::ofstream meta(stem + ".json");
  meta << manifest.dump(2) << "\n";

  std::ofstream blob(stem + ".bin", std::ios::binary);
  for (const auto& p : params) {
    blob.write(reinterpret_cast<const char*>(p.value),
               static_cast<std::streamsize>(p.size * sizeof(float)));
  }
}

ClassifierModel<float> load_checkpoint(const std::string& stem) {
  std::ifstream meta(stem + ".json");
  if (!meta) fail(ErrorKind::DataError, "checkpoint manifest missing: " + stem + ".json");
  nlohmann::json manifest = nlohmann::json::parse(meta);

  ClassifierModel<float> model = build_classifier<float>(
      manifest.at("input_side").get<int>(), manifest.at("num_classes").get<int>(),
      arch_from_name(manifest.at("arch").get<std::string>()),
      manifest.at("seed").get<std::uint64_t>());

  auto params = model.net.params();
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != params.size()) {
    fail(ErrorKind::DataError, "checkpoint tensor count mismatch for " + stem);
  }
  std::ifstream blob(stem + ".bin", std::ios::binary);
  if (!blob) fail(ErrorKind::DataError, "checkpoint blob missing: " + stem + ".bin");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (tensors[i].at("name").get<std::string>() != params[i].name) {
      fail(ErrorKind::DataError, "checkpoint tensor order mismatch at " + params[i].name);
    }
    blob.read(reinterpret_cast<char*>(params[i].value),
              static_cast<std::streamsize>(params[i].size * sizeof(float)));
    if (!blob) fail(ErrorKind::DataError, "checkpoint blob truncated at " + params[i].name);
  }
  return model;
}

}  // namespace itd
