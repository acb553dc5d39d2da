#include "dsgsum/params.hpp"

#include <cstring>
#include <fstream>

namespace dsgsum {

static_assert(sizeof(double) == 8, "checkpoint format assumes 8-byte doubles");

Tensor ParamRegistry::add(const std::string& name, Tensor t, ParamGroup group) {
  DSG_CHECK(index_.count(name) == 0, "duplicate parameter name '" << name << "'");
  t.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{name, t, group});
  return t;
}

std::vector<ParamRegistry::Entry> ParamRegistry::group_entries(ParamGroup g) const {
  std::vector<Entry> out;
  for (const Entry& e : entries_)
    if (e.group == g) out.push_back(e);
  return out;
}

Tensor ParamRegistry::get(const std::string& name) const {
  auto it = index_.find(name);
  DSG_CHECK(it != index_.end(), "unknown parameter '" << name << "'");
  return entries_[it->second].tensor;
}

int64_t ParamRegistry::total_params() const {
  int64_t n = 0;
  for (const Entry& e : entries_) n += e.tensor.numel();
  return n;
}

void ParamRegistry::zero_grads() {
  for (Entry& e : entries_) e.tensor.zero_grad();
}

namespace {

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void ParamRegistry::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  DSG_DATA_CHECK(out.good(), "cannot write checkpoint '" << path << "'");
  out.write(kCheckpointMagic, std::strlen(kCheckpointMagic));
  write_pod<uint64_t>(out, entries_.size());
  for (const Entry& e : entries_) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    const Shape& s = e.tensor.shape();
    write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
    for (int64_t d : s) write_pod<int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(e.tensor.data()),
              static_cast<std::streamsize>(e.tensor.numel() * sizeof(double)));
  }
  DSG_DATA_CHECK(out.good(), "write failed for checkpoint '" << path << "'");
}

void ParamRegistry::load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  DSG_DATA_CHECK(in.good(), "cannot open checkpoint '" << path << "'");
  std::string magic(std::strlen(kCheckpointMagic), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  DSG_DATA_CHECK(in.good() && magic == kCheckpointMagic,
                 "'" << path << "' is not a DSGSUM checkpoint");
  const uint64_t count = read_pod<uint64_t>(in);
  DSG_DATA_CHECK(count == entries_.size(), "checkpoint '" << path << "' holds " << count
                                               << " parameters, model expects "
                                               << entries_.size());
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_pod<uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    auto it = index_.find(name);
    DSG_DATA_CHECK(it != index_.end(), "checkpoint parameter '" << name << "' unknown to model");
    Entry& e = entries_[it->second];
    const uint32_t ndim = read_pod<uint32_t>(in);
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = read_pod<int64_t>(in);
    DSG_DATA_CHECK(shape == e.tensor.shape(),
                   "checkpoint parameter '" << name << "' has mismatched shape");
    in.read(reinterpret_cast<char*>(e.tensor.data()),
            static_cast<std::streamsize>(e.tensor.numel() * sizeof(double)));
    DSG_DATA_CHECK(in.good(), "checkpoint '" << path << "' truncated at '" << name << "'");
  }
}

}  // namespace dsgsum
