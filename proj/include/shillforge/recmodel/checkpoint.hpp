#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "shillforge/recmodel/model.hpp"

namespace shillforge::rec {

inline constexpr const char* kCheckpointFormat = "shillforge-ckpt-v1";

/// JSON document {"format", "levels", "tensors": {name: {"shape", "values"}}}, plus
/// "item_ids" naming the item-table rows when given. Doubles are written in shortest
/// round-trip form, so reloading is exact.
std::string checkpoint_json(const RecParams& params, std::span<const std::string> item_ids = {});
/// `item_ids`, when non-null, receives the stored row ids (empty if none were saved).
RecParams parse_checkpoint(const std::string& text, std::vector<std::string>* item_ids = nullptr);

void save_checkpoint(const RecParams& params, const std::filesystem::path& path,
                     std::span<const std::string> item_ids = {});
RecParams load_checkpoint(const std::filesystem::path& path,
                          std::vector<std::string>* item_ids = nullptr);

}  // namespace shillforge::rec
