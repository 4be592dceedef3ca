#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sferic/rng.hpp"
#include "sferic/synthgen.hpp"

namespace sferic {

/// A set of synthetic "stations": one series each, sharing the earth model,
/// sferic population and noise spec, with independent derived seeds.
struct Scenario {
  std::size_t stations = 12;
  double duration_s = 2.0;
  double sample_rate_hz = 48000.0;
  EarthModel1D earth = EarthModel1D::halfspace(100.0);
  SfericPopulation population;
  NoiseSpec noise;
  double background_std = 0.0;
  double noise_spread = 1.0;  // per-station noise multiplier, log-uniform in [1/spread, spread]

  void validate() const {
    if (stations == 0) throw ConfigError("synth.stations must be >= 1");
    if (!(noise_spread >= 1.0)) throw ConfigError("synth.noise_spread must be >= 1");
    earth.validate();
    population.validate();
    noise.validate();
  }
};

inline std::uint64_t station_seed(std::uint64_t seed, std::size_t station) {
  return derive_seed(seed, 0x737461ULL, station);
}

inline SynthResult synthesize_station(const Scenario& sc, std::uint64_t seed, std::size_t station) {
  sc.validate();
  const auto s = station_seed(seed, station);
  NoiseSpec noise = sc.noise;
  if (sc.noise_spread > 1.0) {
    Rng rng(derive_seed(s, 0x737072ULL));
    const double f = std::pow(sc.noise_spread, uniform(rng, -1.0, 1.0));
    noise.white_std *= f;
    noise.impulse_amplitude *= f;
  }
  auto r = synthesize(sc.earth, draw_sferics(sc.population, sc.duration_s, s), noise, sc.duration_s,
                      sc.sample_rate_hz, s, sc.background_std);
  r.catalog.series_id = "station" + std::to_string(station);
  return r;
}

}  // namespace sferic
