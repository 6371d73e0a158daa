#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "protocad/env.hpp"
#include "protocad/rng.hpp"

namespace protocad {

/// One episode: obs has L+1 rows, act and rew have L rows. Arrays are
/// row-major float32 so episode files round-trip bit-exactly.
struct EpisodeRecord {
  std::string task;
  EnvContext context;
  std::uint64_t seed = 0;
  std::size_t length = 0;  // L
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  std::vector<float> obs;
  std::vector<float> act;
  std::vector<float> rew;

  double total_reward() const;
  void validate() const;
  bool operator==(const EpisodeRecord&) const = default;
};

/// Episode file: "PCAD", u32 version = 1, u32 JSON metadata length, UTF-8
/// JSON (task, context, seed, L, obs_dim, act_dim), then little-endian
/// float32 arrays obs, act, rew.
void write_episode(const std::filesystem::path& path, const EpisodeRecord& ep);
EpisodeRecord read_episode(const std::filesystem::path& path);

/// A batch of B windows of M steps. For window step t, act[t] led to obs[t]
/// and rew[t] was received on arrival. Stored time-major: index (t*B + b).
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  std::vector<double> obs;  // [M][B][obs_dim]
  std::vector<double> act;  // [M][B][act_dim]
  std::vector<double> rew;  // [M][B]
};

class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  /// With a directory set, every added episode is also written to disk.
  explicit ReplayBuffer(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void add(EpisodeRecord ep);
  std::size_t size() const { return episodes_.size(); }
  const EpisodeRecord& episode(std::size_t i) const { return episodes_.at(i); }
  /// Reloads the first n episode files from the directory.
  void load_from_disk(std::size_t n);
  std::filesystem::path episode_path(std::size_t i) const;

  /// Uniform episode, then uniform start in [0, L - M]; windows never cross
  /// episode boundaries.
  SequenceBatch sample(std::size_t batch, std::size_t seq_len, Rng& rng) const;
  /// Window from a given episode and start offset.
  void fill_window(SequenceBatch& out, std::size_t slot, std::size_t episode,
                   std::size_t start) const;

 private:
  std::filesystem::path dir_;
  std::vector<EpisodeRecord> episodes_;
};

}  // namespace protocad
