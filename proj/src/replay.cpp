#include "protocad/replay.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace protocad {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'A', 'D'};
constexpr std::uint32_t kEpisodeVersion = 1;

template <class T>
void put_le(std::string& buf, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  buf.append(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(const std::string& buf, std::size_t& pos, const std::filesystem::path& path) {
  if (pos + sizeof(T) > buf.size())
    throw std::runtime_error(path.string() + ": truncated episode file");
  unsigned char b[sizeof(T)];
  std::memcpy(b, buf.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  pos += sizeof(T);
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace

double EpisodeRecord::total_reward() const {
  double s = 0;
  for (float r : rew) s += r;
  return s;
}

void EpisodeRecord::validate() const {
  if (obs.size() != (length + 1) * obs_dim || act.size() != length * act_dim || rew.size() != length)
    throw std::invalid_argument("EpisodeRecord: array sizes inconsistent with L=" +
                                std::to_string(length));
}

void write_episode(const std::filesystem::path& path, const EpisodeRecord& ep) {
  ep.validate();
  const nlohmann::json meta = {
      {"task", ep.task},
      {"context",
       {{"mass_mult", ep.context.mass_mult},
        {"damping_mult", ep.context.damping_mult},
        {"split", to_string(ep.context.split)}}},
      {"seed", ep.seed},
      {"L", ep.length},
      {"obs_dim", ep.obs_dim},
      {"act_dim", ep.act_dim}};
  const std::string text = meta.dump();
  std::string buf(kMagic, 4);
  put_le<std::uint32_t>(buf, kEpisodeVersion);
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(text.size()));
  buf += text;
  for (float v : ep.obs) put_le(buf, v);
  for (float v : ep.act) put_le(buf, v);
  for (float v : ep.rew) put_le(buf, v);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write episode file " + path.string());
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

EpisodeRecord read_episode(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read episode file " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(is)), {});
  if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw std::runtime_error(path.string() + ": not an episode file (bad magic)");
  std::size_t pos = 4;
  const auto version = get_le<std::uint32_t>(buf, pos, path);
  if (version != kEpisodeVersion)
    throw std::runtime_error(path.string() + ": unsupported episode version " + std::to_string(version));
  const auto mlen = get_le<std::uint32_t>(buf, pos, path);
  if (pos + mlen > buf.size()) throw std::runtime_error(path.string() + ": truncated metadata");
  const auto meta = nlohmann::json::parse(buf.substr(pos, mlen));
  pos += mlen;

  EpisodeRecord ep;
  ep.task = meta.at("task");
  const auto& c = meta.at("context");
  ep.context = {c.at("mass_mult"), c.at("damping_mult"), parse_split(c.at("split"))};
  ep.seed = meta.at("seed");
  ep.length = meta.at("L");
  ep.obs_dim = meta.at("obs_dim");
  ep.act_dim = meta.at("act_dim");
  ep.obs.resize((ep.length + 1) * ep.obs_dim);
  ep.act.resize(ep.length * ep.act_dim);
  ep.rew.resize(ep.length);
  for (auto& v : ep.obs) v = get_le<float>(buf, pos, path);
  for (auto& v : ep.act) v = get_le<float>(buf, pos, path);
  for (auto& v : ep.rew) v = get_le<float>(buf, pos, path);
  if (pos != buf.size()) throw std::runtime_error(path.string() + ": trailing bytes after payload");
  return ep;
}

std::filesystem::path ReplayBuffer::episode_path(std::size_t i) const {
  std::ostringstream name;
  name << "episode_" << std::setw(6) << std::setfill('0') << i << ".pcad";
  return dir_ / name.str();
}

void ReplayBuffer::add(EpisodeRecord ep) {
  ep.validate();
  if (!dir_.empty()) {
    std::filesystem::create_directories(dir_);
    write_episode(episode_path(episodes_.size()), ep);
  }
  episodes_.push_back(std::move(ep));
}

void ReplayBuffer::load_from_disk(std::size_t n) {
  episodes_.clear();
  for (std::size_t i = 0; i < n; ++i) episodes_.push_back(read_episode(episode_path(i)));
}

void ReplayBuffer::fill_window(SequenceBatch& out, std::size_t slot, std::size_t episode,
                               std::size_t start) const {
  const EpisodeRecord& ep = episodes_.at(episode);
  if (start + out.seq_len > ep.length)
    throw std::out_of_range("ReplayBuffer: window [" + std::to_string(start) + ", " +
                            std::to_string(start + out.seq_len) + ") exceeds episode length " +
                            std::to_string(ep.length));
  const std::size_t b = out.batch;
  for (std::size_t t = 0; t < out.seq_len; ++t) {
    const std::size_t step = start + t;
    for (std::size_t k = 0; k < ep.obs_dim; ++k)
      out.obs[(t * b + slot) * ep.obs_dim + k] = ep.obs[(step + 1) * ep.obs_dim + k];
    for (std::size_t k = 0; k < ep.act_dim; ++k)
      out.act[(t * b + slot) * ep.act_dim + k] = ep.act[step * ep.act_dim + k];
    out.rew[t * b + slot] = ep.rew[step];
  }
}

SequenceBatch ReplayBuffer::sample(std::size_t batch, std::size_t seq_len, Rng& rng) const {
  if (episodes_.empty()) throw std::logic_error("ReplayBuffer::sample on an empty buffer");
  SequenceBatch out;
  out.batch = batch;
  out.seq_len = seq_len;
  out.obs_dim = episodes_.front().obs_dim;
  out.act_dim = episodes_.front().act_dim;
  out.obs.resize(seq_len * batch * out.obs_dim);
  out.act.resize(seq_len * batch * out.act_dim);
  out.rew.resize(seq_len * batch);
  for (std::size_t slot = 0; slot < batch; ++slot) {
    const std::size_t e = rng.index(episodes_.size());
    const std::size_t length = episodes_[e].length;
    if (seq_len > length)
      throw std::invalid_argument("ReplayBuffer: sequence length exceeds episode length");
    const std::size_t start = rng.index(length - seq_len + 1);
    fill_window(out, slot, e, start);
  }
  return out;
}

}  // namespace protocad
