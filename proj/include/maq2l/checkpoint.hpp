#pragma once

#include <filesystem>
#include <string>

#include "maq2l/layers.hpp"

namespace maq2l {

// Named tensors grouped into sections by the first dotted component of each
// name, plus the text of the configuration that produced them.
//
// Layout: "MAQC", u32 version, u64 + bytes config text, u32 section count;
// per section u64 + bytes name, u32 tensor count; per tensor u64 + bytes full
// name followed by a MAQT tensor record.
struct Checkpoint {
  std::string config;
  ParamList tensors;

  const Tensor* find(const std::string& name) const;
  // Tensors whose names start with "<section>.", in file order.
  ParamList section(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace maq2l
