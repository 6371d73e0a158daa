#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "protocad/optim.hpp"
#include "protocad/tensor.hpp"

namespace protocad {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor container: "PCKP", u32 version, u64 manifest length, UTF-8 JSON
/// manifest {version, meta, tensors: [{name, shape, dtype, offset, nbytes}]},
/// then raw little-endian IEEE-754 payloads in manifest order.
class TensorArchive {
 public:
  static constexpr std::uint32_t kVersion = 1;

  struct Record {
    Shape shape;
    std::vector<Scalar> values;
  };

  void put(const std::string& name, const Shape& shape, std::span<const Scalar> values);
  bool has(const std::string& name) const { return records_.count(name) != 0; }
  const Record& get(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }

  nlohmann::json& meta() { return meta_; }
  const nlohmann::json& meta() const { return meta_; }

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

 private:
  std::vector<std::string> order_;
  std::map<std::string, Record> records_;
  nlohmann::json meta_ = nlohmann::json::object();
};

/// Writes values plus optimizer slots ("<group>/<name>", "#m", "#v") and
/// step counters (in meta) for each group.
void archive_params(TensorArchive& ar, const ParamSet& params, bool with_optimizer = true);
/// Restores a group; any missing, extra or reshaped tensor is reported in
/// one CheckpointError listing the whole difference.
void restore_params(const TensorArchive& ar, ParamSet& params, bool with_optimizer = true);

void save_params(const std::filesystem::path& path, const ParamSet& params);
void load_params(const std::filesystem::path& path, ParamSet& params);

}  // namespace protocad
