#pragma once

#include <optional>
#include <string>
#include <variant>

#include "innerloop/nn/params.hpp"

namespace innerloop::nn {

// Checkpoint layout (little-endian):
//   "MLNS" | u32 version | u32 len | ModelConfig JSON
//   | u32 epoch | u64 token_step | u8 has_adam | u64 adam_step
//   | arrays in Params::visit order (u32 rows, u32 cols, values in the
//     configured precision) | Adam m arrays | Adam v arrays (if has_adam)
//   | u32 CRC32 of everything before it
template <class T>
void save_checkpoint(const ModelState<T>& state, const std::string& path);

// Refuses files whose configuration differs from `expected` (when given),
// listing the differing fields.
template <class T>
ModelState<T> load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected = std::nullopt);

using AnyState = std::variant<ModelState<float>, ModelState<double>>;

AnyState load_any_checkpoint(const std::string& path);
ModelConfig read_checkpoint_config(const std::string& path);

}  // namespace innerloop::nn
