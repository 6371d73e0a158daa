#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "protocad/replay.hpp"

using namespace protocad;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "protocad_test_replay" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Observations encode (episode, step) so windows can be decoded.
EpisodeRecord make_episode(std::size_t id, std::size_t len) {
  EpisodeRecord ep;
  ep.task = "msd_reach";
  ep.context = {1.5, 0.4, Split::test};
  ep.seed = 1000 + id;
  ep.length = len;
  ep.obs_dim = 2;
  ep.act_dim = 1;
  for (std::size_t t = 0; t <= len; ++t) {
    ep.obs.push_back(static_cast<float>(id));
    ep.obs.push_back(static_cast<float>(t));
  }
  for (std::size_t t = 0; t < len; ++t) {
    ep.act.push_back(static_cast<float>(t) + 0.25f);
    ep.rew.push_back(static_cast<float>(t) + 0.5f);
  }
  return ep;
}

}  // namespace

TEST_CASE("episode files round-trip bit-exactly") {
  const auto dir = fresh_dir("roundtrip");
  EpisodeRecord ep = make_episode(3, 7);
  ep.obs[1] = 1.0e-38f;
  ep.rew[0] = -0.0f;
  write_episode(dir / "e.pcad", ep);
  const EpisodeRecord back = read_episode(dir / "e.pcad");
  CHECK(back == ep);
  CHECK(std::signbit(back.rew[0]));
  CHECK(back.total_reward() == doctest::Approx(ep.total_reward()));
}

TEST_CASE("corrupt episode files are rejected") {
  const auto dir = fresh_dir("corrupt");
  write_episode(dir / "e.pcad", make_episode(0, 5));
  const auto size = std::filesystem::file_size(dir / "e.pcad");
  std::filesystem::copy_file(dir / "e.pcad", dir / "t.pcad");
  std::filesystem::resize_file(dir / "t.pcad", size - 3);
  CHECK_THROWS(read_episode(dir / "t.pcad"));
  {
    std::ofstream f(dir / "e.pcad", std::ios::binary | std::ios::app);
    f << "x";
  }
  CHECK_THROWS(read_episode(dir / "e.pcad"));
  std::ofstream(dir / "m.pcad", std::ios::binary) << "JUNKJUNKJUNK";
  CHECK_THROWS(read_episode(dir / "m.pcad"));
  CHECK_THROWS(read_episode(dir / "missing.pcad"));
}

TEST_CASE("validate catches inconsistent arrays") {
  EpisodeRecord ep = make_episode(0, 4);
  ep.rew.pop_back();
  CHECK_THROWS(ep.validate());
}

TEST_CASE("windows are aligned and never cross episode boundaries") {
  ReplayBuffer buf;
  buf.add(make_episode(0, 30));
  buf.add(make_episode(1, 12));
  buf.add(make_episode(2, 50));
  Rng rng(4);
  const std::size_t B = 8, M = 10;
  std::set<std::pair<int, int>> starts;
  for (int draw = 0; draw < 400; ++draw) {
    const SequenceBatch s = buf.sample(B, M, rng);
    REQUIRE(s.obs.size() == M * B * 2);
    for (std::size_t b = 0; b < B; ++b) {
      const double ep = s.obs[(0 * B + b) * 2];
      const double t0 = s.obs[(0 * B + b) * 2 + 1];
      starts.insert({static_cast<int>(ep), static_cast<int>(t0) - 1});
      for (std::size_t t = 0; t < M; ++t) {
        CHECK(s.obs[(t * B + b) * 2] == ep);
        CHECK(s.obs[(t * B + b) * 2 + 1] == t0 + t);
        // act[t] was taken at obs[t] - 1 and led to obs[t]; rew[t] arrived with it.
        CHECK(s.act[t * B + b] == t0 + t - 1 + 0.25);
        CHECK(s.rew[t * B + b] == t0 + t - 1 + 0.5);
      }
      const std::size_t len = buf.episode(static_cast<std::size_t>(ep)).length;
      CHECK(t0 + M - 1 <= len);
    }
  }
  // Every valid start is reachable: (30-10+1) + (12-10+1) + (50-10+1).
  CHECK(starts.size() == 21 + 3 + 41);
}

TEST_CASE("sampling fails when no episode is long enough") {
  ReplayBuffer buf;
  Rng rng(0);
  CHECK_THROWS(buf.sample(2, 4, rng));
  buf.add(make_episode(0, 3));
  CHECK_THROWS(buf.sample(2, 4, rng));
}

TEST_CASE("buffer persists episodes and reloads them") {
  const auto dir = fresh_dir("persist");
  {
    ReplayBuffer buf(dir);
    for (std::size_t i = 0; i < 3; ++i) buf.add(make_episode(i, 20));
    CHECK(std::filesystem::exists(buf.episode_path(2)));
  }
  ReplayBuffer again(dir);
  again.load_from_disk(2);
  CHECK(again.size() == 2);
  CHECK(again.episode(1) == make_episode(1, 20));
}
