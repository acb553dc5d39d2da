#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dsgsum/tensor.hpp"

namespace dsgsum {

inline constexpr const char* kCheckpointMagic = "DSGSUM-CKPT-1";

enum class ParamGroup { Encoder = 0, Decoder = 1 };

// Ordered, named registry of every trainable tensor, partitioned into the
// encoder-side and decoder-side optimizer groups.
class ParamRegistry {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    ParamGroup group;
  };

  Tensor add(const std::string& name, Tensor t, ParamGroup group);
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry> group_entries(ParamGroup g) const;
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  int64_t total_params() const;
  void zero_grads();

  // flat binary map name -> (shape, doubles); header kCheckpointMagic
  void save_checkpoint(const std::string& path) const;
  // shapes and names must match this registry exactly
  void load_checkpoint(const std::string& path);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace dsgsum
