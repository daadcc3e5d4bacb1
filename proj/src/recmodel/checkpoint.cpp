#include "shillforge/recmodel/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "shillforge/graphdata/io.hpp"

namespace shillforge::rec {

using nlohmann::json;

std::string checkpoint_json(const RecParams& params, std::span<const std::string> item_ids) {
  json doc;
  doc["format"] = kCheckpointFormat;
  doc["levels"] = params.levels();
  json tensors = json::object();
  for (const auto& [name, t] : params.named()) {
    tensors[name] = {{"shape", t->shape()},
                     {"values", std::vector<double>(t->values().begin(), t->values().end())}};
  }
  doc["tensors"] = std::move(tensors);
  if (!item_ids.empty()) doc["item_ids"] = std::vector<std::string>(item_ids.begin(), item_ids.end());
  return doc.dump() + "\n";
}

RecParams parse_checkpoint(const std::string& text, std::vector<std::string>* item_ids) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw graph::ValidationError(std::string("checkpoint: ") + e.what());
  }
  if (doc.value("format", "") != kCheckpointFormat) {
    throw graph::ValidationError("checkpoint: expected format '" + std::string(kCheckpointFormat) +
                                 "'");
  }
  const int levels = doc.at("levels").get<int>();
  if (levels < 2) throw graph::ValidationError("checkpoint: invalid level count");
  RecParams p;
  p.user_msg.resize(static_cast<std::size_t>(levels));
  p.item_msg.resize(static_cast<std::size_t>(levels));
  const json& tensors = doc.at("tensors");
  for (auto& [name, slot] : p.named()) {
    if (!tensors.contains(name)) throw graph::ValidationError("checkpoint: missing tensor " + name);
    const json& t = tensors.at(name);
    try {
      *slot = nk::Tensor(t.at("shape").get<nk::Shape>(), t.at("values").get<std::vector<double>>());
    } catch (const nk::ContractViolation& e) {
      throw graph::ValidationError("checkpoint: tensor " + name + ": " + e.what());
    }
  }
  if (!p.all_finite()) throw graph::ValidationError("checkpoint: non-finite parameter");
  if (item_ids) {
    item_ids->clear();
    if (doc.contains("item_ids")) {
      try {
        *item_ids = doc.at("item_ids").get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        throw graph::ValidationError(std::string("checkpoint: item_ids: ") + e.what());
      }
      if (item_ids->size() != p.item_table.rows())
        throw graph::ValidationError("checkpoint: item_ids does not match the item table");
    }
  }
  return p;
}

void save_checkpoint(const RecParams& params, const std::filesystem::path& path,
                     std::span<const std::string> item_ids) {
  graph::atomic_write(path, checkpoint_json(params, item_ids));
}

RecParams load_checkpoint(const std::filesystem::path& path, std::vector<std::string>* item_ids) {
  std::ifstream in(path);
  if (!in) throw graph::ValidationError("cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str(), item_ids);
}

}  // namespace shillforge::rec
