#include "protocad/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace protocad {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'K', 'P'};

template <class T>
void write_le(std::ostream& os, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_le(const unsigned char* p) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

constexpr const char* native_dtype() { return sizeof(Scalar) == 8 ? "f64" : "f32"; }

std::string key(const ParamSet& p, const std::string& name) { return p.group() + "/" + name; }

}  // namespace

void TensorArchive::put(const std::string& name, const Shape& shape,
                        std::span<const Scalar> values) {
  if (numel_of(shape) != values.size())
    throw std::invalid_argument("TensorArchive::put: size mismatch for " + name);
  if (!records_.count(name)) order_.push_back(name);
  records_[name] = {shape, std::vector<Scalar>(values.begin(), values.end())};
}

const TensorArchive::Record& TensorArchive::get(const std::string& name) const {
  auto it = records_.find(name);
  if (it == records_.end()) throw CheckpointError("checkpoint has no tensor named " + name);
  return it->second;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  nlohmann::json manifest;
  manifest["version"] = kVersion;
  manifest["meta"] = meta_;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& name : order_) {
    const auto& r = records_.at(name);
    const std::uint64_t nbytes = r.values.size() * sizeof(Scalar);
    manifest["tensors"].push_back(
        {{"name", name}, {"shape", r.shape}, {"dtype", native_dtype()}, {"offset", offset},
         {"nbytes", nbytes}});
    offset += nbytes;
  }
  const std::string text = manifest.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    os.write(kMagic, 4);
    write_le<std::uint32_t>(os, kVersion);
    write_le<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& name : order_)
      for (Scalar v : records_.at(name).values) write_le(os, v);
    if (!os) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), {});
  if (buf.size() < 16 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw CheckpointError(path.string() + ": not a tensor archive (bad magic)");
  const auto version = read_le<std::uint32_t>(buf.data() + 4);
  if (version != kVersion)
    throw CheckpointError(path.string() + ": archive version " + std::to_string(version) +
                          ", expected " + std::to_string(kVersion));
  const auto mlen = read_le<std::uint64_t>(buf.data() + 8);
  if (16 + mlen > buf.size()) throw CheckpointError(path.string() + ": truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(buf.begin() + 16, buf.begin() + 16 + static_cast<long>(mlen));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": malformed manifest: " + e.what());
  }
  const std::size_t base = 16 + mlen;

  TensorArchive ar;
  ar.meta_ = manifest.value("meta", nlohmann::json::object());
  for (const auto& t : manifest.at("tensors")) {
    const std::string name = t.at("name");
    const Shape shape = t.at("shape").get<Shape>();
    const std::string dtype = t.at("dtype");
    const std::uint64_t offset = t.at("offset");
    const std::uint64_t nbytes = t.at("nbytes");
    const std::size_t width = dtype == "f64" ? 8 : dtype == "f32" ? 4 : 0;
    if (width == 0) throw CheckpointError(path.string() + ": unknown dtype " + dtype + " for " + name);
    if (nbytes != numel_of(shape) * width)
      throw CheckpointError(path.string() + ": manifest size mismatch for tensor " + name);
    if (base + offset + nbytes > buf.size())
      throw CheckpointError(path.string() + ": payload truncated, tensor " + name +
                            " is missing bytes (need " + std::to_string(base + offset + nbytes) +
                            ", file has " + std::to_string(buf.size()) + ")");
    std::vector<Scalar> values(numel_of(shape));
    const unsigned char* p = buf.data() + base + offset;
    for (std::size_t i = 0; i < values.size(); ++i)
      values[i] = width == 8 ? static_cast<Scalar>(read_le<double>(p + 8 * i))
                             : static_cast<Scalar>(read_le<float>(p + 4 * i));
    ar.order_.push_back(name);
    ar.records_[name] = {shape, std::move(values)};
  }
  return ar;
}

void archive_params(TensorArchive& ar, const ParamSet& params, bool with_optimizer) {
  nlohmann::json steps = nlohmann::json::object();
  for (const auto& e : params.entries()) {
    const std::string k = key(params, e.name);
    ar.put(k, e.tensor.shape(), e.tensor.data());
    if (!with_optimizer) continue;
    if (!e.slot.m.empty()) {
      ar.put(k + "#m", e.tensor.shape(), e.slot.m);
      ar.put(k + "#v", e.tensor.shape(), e.slot.v);
    }
    steps[e.name] = e.slot.step;
  }
  if (with_optimizer) ar.meta()["adam_steps"][params.group()] = steps;
}

void restore_params(const TensorArchive& ar, ParamSet& params, bool with_optimizer) {
  std::ostringstream diff;
  const std::string prefix = params.group() + "/";
  for (const auto& e : params.entries()) {
    const std::string k = key(params, e.name);
    if (!ar.has(k))
      diff << "  missing: " << k << shape_str(e.tensor.shape()) << '\n';
    else if (ar.get(k).shape != e.tensor.shape())
      diff << "  shape:   " << k << " checkpoint " << shape_str(ar.get(k).shape) << " vs model "
           << shape_str(e.tensor.shape()) << '\n';
  }
  for (const auto& name : ar.names()) {
    if (name.rfind(prefix, 0) != 0 || name.find('#') != std::string::npos) continue;
    if (!params.contains(name.substr(prefix.size()))) diff << "  extra:   " << name << '\n';
  }
  if (!diff.str().empty())
    throw CheckpointError("checkpoint does not match group '" + params.group() + "':\n" + diff.str());

  for (auto& e : params.entries()) {
    const std::string k = key(params, e.name);
    const auto& rec = ar.get(k);
    std::copy(rec.values.begin(), rec.values.end(), e.tensor.mutable_data().begin());
    e.slot = {};
    if (!with_optimizer) continue;
    if (ar.has(k + "#m")) {
      e.slot.m = ar.get(k + "#m").values;
      e.slot.v = ar.get(k + "#v").values;
    }
    const auto& steps = ar.meta().value("adam_steps", nlohmann::json::object());
    if (steps.contains(params.group()) && steps[params.group()].contains(e.name))
      e.slot.step = steps[params.group()][e.name].get<std::int64_t>();
  }
}

void save_params(const std::filesystem::path& path, const ParamSet& params) {
  TensorArchive ar;
  archive_params(ar, params);
  ar.save(path);
}

void load_params(const std::filesystem::path& path, ParamSet& params) {
  restore_params(TensorArchive::load(path), params);
}

}  // namespace protocad
