#pragma once

#include <cstdint>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "driftnet/flow.hpp"
#include "driftnet/forest.hpp"
#include "driftnet/synth.hpp"

namespace fixtures {

using Rng = std::mt19937_64;

// Arrival-ordered packets; some with empty payload, some with duplicate timestamps.
inline std::vector<driftnet::PacketObservation> random_packets(Rng& rng, int max_packets = 60) {
  boost::random::uniform_int_distribution<int> count(0, max_packets);
  boost::random::uniform_int_distribution<std::uint32_t> wire(40, 1514);
  boost::random::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<driftnet::PacketObservation> out(static_cast<std::size_t>(count(rng)));
  double t = u(rng) * 100.0;
  for (auto& p : out) {
    if (u(rng) > 0.1) t += -std::log(1.0 - u(rng)) * 0.7;
    p.arrival_time = t;
    p.wire_bytes = wire(rng);
    const double roll = u(rng);
    if (roll < 0.3) {
      p.payload_bytes = 0;
    } else {
      boost::random::uniform_int_distribution<std::uint32_t> payload(1, p.wire_bytes);
      p.payload_bytes = payload(rng);
    }
  }
  return out;
}

// Two classes split on feature 0; the other features are noise.
inline std::vector<driftnet::Sample> separable(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  boost::random::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<driftnet::Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    driftnet::Sample s;
    const bool a = i % 2 == 0;
    for (auto& f : s.features) f = u(rng);
    s.features[0] = a ? u(rng) : 1.5 + u(rng);
    s.label = a ? "a" : "b";
    out.push_back(s);
  }
  return out;
}

// A handful of light classes over a few homes and days: cheap to train on.
inline driftnet::synth::SynthConfig tiny_config(int homes = 3, int days = 8, int train_days = 5) {
  auto c = driftnet::synth::SynthConfig::defaults();
  c.n_homes = homes;
  c.n_days = days;
  c.train_days = train_days;
  c.classes.resize(6);
  c.flows_per_home_day = 60.0;
  c.drift_events.clear();
  return c;
}

inline driftnet::ForestParams quick_forest(int trees = 10) {
  driftnet::ForestParams p;
  p.n_trees = trees;
  return p;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("driftnet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fixtures
