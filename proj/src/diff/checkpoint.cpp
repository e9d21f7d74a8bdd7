// SPDX-License-Identifier: Apache-2.0
#include "t2s/diff/checkpoint.hpp"

#include <fstream>

#include "t2s/binary_io.hpp"
#include "t2s/error.hpp"

namespace t2s::diff {
namespace {
constexpr char kMagic[4] = {'T', '2', 'C', 'K'};
}

void Checkpoint::put(const std::string& name, ArrayRecord record) {
  if (shape_numel(record.shape) != static_cast<std::int64_t>(record.values.size())) {
    throw ShapeError("checkpoint array '" + name + "' has inconsistent size");
  }
  arrays_[name] = std::move(record);
}

const ArrayRecord& Checkpoint::at(const std::string& name) const {
  const auto it = arrays_.find(name);
  if (it == arrays_.end()) throw FormatError("checkpoint has no array '" + name + "'");
  return it->second;
}

void Checkpoint::put_store(const std::string& prefix, const ParamStore& store) {
  for (const auto* list : {&store.params(), &store.buffers()}) {
    for (const auto& p : *list) {
      put(prefix + p.name, {p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
    }
  }
}

void Checkpoint::load_store(const std::string& prefix, ParamStore& store) const {
  for (const auto* list : {&store.params(), &store.buffers()}) {
    for (const auto& p : *list) {
      const ArrayRecord& r = at(prefix + p.name);
      if (r.shape != p.tensor.shape()) {
        throw FormatError("checkpoint array '" + prefix + p.name + "' has shape " + shape_str(r.shape) +
                          ", model expects " + shape_str(p.tensor.shape()));
      }
      Tensor t = p.tensor;
      t.mutable_data() = r.values;
    }
  }
}

void Checkpoint::put_optimizer(const std::string& prefix, const ParamStore& store, const Adam& opt) {
  const auto& params = store.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    put(prefix + "adam.m." + params[i].name, {params[i].tensor.shape(), opt.first_moments()[i]});
    put(prefix + "adam.v." + params[i].name, {params[i].tensor.shape(), opt.second_moments()[i]});
  }
  put(prefix + "adam.step", {{}, {static_cast<double>(opt.steps_taken())}});
}

void Checkpoint::load_optimizer(const std::string& prefix, const ParamStore& store, Adam& opt) const {
  const auto& params = store.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    opt.first_moments()[i] = at(prefix + "adam.m." + params[i].name).values;
    opt.second_moments()[i] = at(prefix + "adam.v." + params[i].name).values;
  }
  opt.set_steps_taken(static_cast<std::int64_t>(at(prefix + "adam.step").values.at(0)));
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(kMagic, 4);
  binio::put<std::uint16_t>(os, kVersion);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(arrays_.size()));
  for (const auto& [name, r] : arrays_) {
    binio::put_string(os, name);
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) binio::put<std::int64_t>(os, d);
    os.write(reinterpret_cast<const char*>(r.values.data()),
             static_cast<std::streamsize>(r.values.size() * sizeof(double)));
  }
  binio::put_string(os, meta.dump());
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || !std::equal(magic, magic + 4, kMagic)) {
    throw FormatError(path.string() + " is not a T2CK checkpoint");
  }
  const auto version = binio::get<std::uint16_t>(is, "checkpoint version");
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto count = binio::get<std::uint32_t>(is, "array count");
  for (std::uint32_t i = 0; i < count; ++i) {
    ArrayRecord r;
    const std::string name = binio::get_string(is, "array name");
    const auto rank = binio::get<std::uint32_t>(is, "array rank");
    if (rank > 8) throw FormatError("array '" + name + "' has implausible rank");
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = binio::get<std::int64_t>(is, "array dims");
      if (dim < 0 || dim > (1LL << 31)) throw FormatError("array '" + name + "' has invalid dims");
      r.shape.push_back(dim);
    }
    r.values.resize(static_cast<std::size_t>(shape_numel(r.shape)));
    const auto bytes = static_cast<std::streamsize>(r.values.size() * sizeof(double));
    is.read(reinterpret_cast<char*>(r.values.data()), bytes);
    if (is.gcount() != bytes) throw TruncatedError("checkpoint truncated in array '" + name + "'");
    ck.arrays_[name] = std::move(r);
  }
  ck.meta = nlohmann::json::parse(binio::get_string(is, "metadata"));
  return ck;
}

}  // namespace t2s::diff
