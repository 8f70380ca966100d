#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "chartlib/geometry.hpp"

namespace chartlib {

using cfloat = std::complex<float>;

// Antenna setup shared by all datapoints. Arrays are uniform planar arrays;
// the scene is 2D, so only the column axis of each array carries geometry
// (rows stack out of plane and see identical phase).
struct ArrayGeometry {
  uint32_t num_arrays = 1;  // B
  uint32_t rows = 1;        // M_row
  uint32_t cols = 1;        // M_col
  uint32_t taps = 1;        // T
  std::vector<Vec2> array_positions;       // meters, size num_arrays
  std::vector<double> array_orientations;  // radians in [-pi, pi)
  double antenna_spacing = 0.5;            // wavelengths
  double carrier_wavelength = 0.06;        // meters
  double sample_rate = 50e6;               // samples/second

  size_t cir_size() const {
    return static_cast<size_t>(num_arrays) * rows * cols * taps;
  }
  size_t antennas_per_array() const { return static_cast<size_t>(rows) * cols; }
  void validate() const;
};

// One record: CIR tensor indexed [b][r][c][tap], position, timestamp.
struct DatapointView {
  std::span<const cfloat> cir;
  Vec2 position;
  bool has_position = false;
  double timestamp = 0.0;
};

struct Dataset {
  ArrayGeometry geometry;
  std::vector<cfloat> cir;        // L * cir_size, row-major [l][b][r][c][tap]
  std::vector<Vec2> positions;    // empty when has_positions is false
  std::vector<double> timestamps; // strictly increasing
  bool has_positions = false;
  // Indices l where t[l] - t[l-1] exceeds the gap threshold; each marks the
  // start of a new trajectory segment. Acceleration terms never span these.
  std::vector<uint32_t> trajectory_breaks;

  uint32_t size() const { return static_cast<uint32_t>(timestamps.size()); }
  std::span<const cfloat> cir_of(uint32_t l) const {
    const size_t sz = geometry.cir_size();
    return {cir.data() + static_cast<size_t>(l) * sz, sz};
  }
  DatapointView point(uint32_t l) const {
    return {cir_of(l), has_positions ? positions[l] : Vec2{}, has_positions,
            timestamps[l]};
  }
  void validate() const;
  // gap_threshold <= 0 selects 5x the median sample interval.
  void recompute_breaks(double gap_threshold = 0.0);
};

struct Scatterer {
  Vec2 position;
  double gain = 1.0;
};

struct SceneConfig {
  std::vector<Vec2> polygon;   // walkable area, may be nonconvex
  std::vector<Vec2> blocker;   // optional LoS blocker polygon
  uint32_t num_points = 500;   // L
  double mean_speed = 1.0;     // m/s
  double max_acceleration = 2.0;  // m/s^2
  double sample_interval = 0.5;   // seconds
  std::vector<Scatterer> scatterers;
  double noise_std = 0.0;  // complex noise std, E|n|^2 = noise_std^2
  uint64_t seed = 1;
  ArrayGeometry geometry;

  void validate() const;
};

// Directory layout: meta.json + csi.bin (complex64) + pos.bin (f64) + time.bin (f64).
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& ds, const std::filesystem::path& dir,
                  bool overwrite = false);

// Keeps only array `array_number` (1-based); positions and timestamps
// unchanged, geometry reduced to B=1.
Dataset restrict_to_array(const Dataset& ds, uint32_t array_number);

// Synthesizes the CIR for one transmitter position into `out`
// (size geometry.cir_size()). Deterministic; noise is added by the caller.
void synthesize_cir(const SceneConfig& cfg, Vec2 tx_position,
                    std::span<cfloat> out);

// Smooth random walk inside cfg.polygon plus ray-based CIR synthesis.
// Deterministic given cfg.seed.
Dataset synth_scene(const SceneConfig& cfg);

// An L-shaped default scene with 4 arrays and a LoS blocker in the inner
// corner; the desk-scale stand-in for a measured industrial dataset.
SceneConfig default_scene(uint32_t num_points, uint64_t seed);

}  // namespace chartlib
