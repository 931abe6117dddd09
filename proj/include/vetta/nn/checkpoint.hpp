#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "vetta/nn/autodiff.hpp"
#include "vetta/nn/optim.hpp"

namespace vetta::nn {

inline constexpr char kCheckpointMagic[4] = {'V', 'T', 'A', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
struct Checkpoint {
  std::uint64_t step = 0;
  std::string config_json;
  ParamStore<T> params;
  std::optional<OptState<T>> opt;
};

/// Layout (little-endian): magic, u32 version, u32 float width in bytes,
/// u64 step, u64 param-store seed, config JSON (u64 length + bytes), u64
/// tensor count, then per tensor: u32 name length, name, u32 rank, u64 dims,
/// raw values. A trailing u8 flags optimizer state (step, hyperparameters,
/// schedule, first and second moments in tensor order).
/// The file is written to a temporary sibling and renamed into place.
template <class T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params, const OptState<T>* opt,
                     std::uint64_t step, const std::string& config_json);

/// Throws CheckpointError on bad magic, unknown version, a float width that
/// differs from T, or truncation.
template <class T>
Checkpoint<T> load_checkpoint(const std::string& path);

struct CheckpointHeader {
  std::uint32_t version = 0;
  std::uint32_t float_width = 0;
  std::uint64_t step = 0;
  std::string config_json;
};

CheckpointHeader read_checkpoint_header(const std::string& path);

}  // namespace vetta::nn
