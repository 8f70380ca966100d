#include "chartlib/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "chartlib/io_util.hpp"
#include "chartlib/rng.hpp"

namespace chartlib {

namespace {

constexpr double kSpeedOfLight = 299792458.0;
constexpr double kRcRolloff = 0.35;

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a >= std::numbers::pi) a -= 2.0 * std::numbers::pi;
  return a;
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

// Raised-cosine pulse amplitude at offset t (tap units from the peak).
double raised_cosine(double t) {
  double den = 1.0 - 4.0 * kRcRolloff * kRcRolloff * t * t;
  if (std::abs(den) < 1e-9) {
    // Limit at t = +-1/(2*rolloff).
    return sinc(1.0 / (2.0 * kRcRolloff)) * std::numbers::pi / 4.0;
  }
  return sinc(t) * std::cos(std::numbers::pi * kRcRolloff * t) / den;
}

}  // namespace

void ArrayGeometry::validate() const {
  if (num_arrays < 1 || rows < 1 || cols < 1 || taps < 1)
    throw std::invalid_argument("geometry: B, M_row, M_col, T must all be >= 1");
  if (array_positions.size() != num_arrays ||
      array_orientations.size() != num_arrays)
    throw std::invalid_argument("geometry: array placement lists must have length B");
  for (double a : array_orientations)
    if (!std::isfinite(a) || a < -std::numbers::pi || a >= std::numbers::pi)
      throw std::invalid_argument("geometry: orientations must lie in [-pi, pi)");
  if (!(antenna_spacing > 0.0) || !(carrier_wavelength > 0.0) ||
      !(sample_rate > 0.0))
    throw std::invalid_argument("geometry: spacing, wavelength, sample_rate must be positive");
}

void Dataset::validate() const {
  geometry.validate();
  const size_t L = timestamps.size();
  if (cir.size() != L * geometry.cir_size())
    throw std::runtime_error("dataset: CIR buffer size does not match L x geometry");
  if (has_positions && positions.size() != L)
    throw std::runtime_error("dataset: position count does not match L");
  for (size_t l = 0; l < L; ++l) {
    if (!std::isfinite(timestamps[l]))
      throw std::runtime_error("dataset: non-finite timestamp");
    if (l > 0 && !(timestamps[l] > timestamps[l - 1]))
      throw std::runtime_error("non-monotone timestamps");
  }
}

void Dataset::recompute_breaks(double gap_threshold) {
  trajectory_breaks.clear();
  const size_t L = timestamps.size();
  if (L < 2) return;
  if (gap_threshold <= 0.0) {
    std::vector<double> dts(L - 1);
    for (size_t l = 1; l < L; ++l) dts[l - 1] = timestamps[l] - timestamps[l - 1];
    auto mid = dts.begin() + static_cast<ptrdiff_t>(dts.size() / 2);
    std::nth_element(dts.begin(), mid, dts.end());
    gap_threshold = 5.0 * *mid;
  }
  for (size_t l = 1; l < L; ++l)
    if (timestamps[l] - timestamps[l - 1] > gap_threshold)
      trajectory_breaks.push_back(static_cast<uint32_t>(l));
}

void SceneConfig::validate() const {
  if (polygon.size() < 3 || !polygon_is_simple(polygon))
    throw std::invalid_argument("scene: polygon must be simple with >= 3 vertices");
  if (!blocker.empty() && blocker.size() < 3)
    throw std::invalid_argument("scene: blocker polygon must have >= 3 vertices");
  if (num_points < 3) throw std::invalid_argument("scene: L >= 3 required");
  if (!(mean_speed > 0.0)) throw std::invalid_argument("scene: mean_speed must be positive");
  if (!(max_acceleration > 0.0) || !(sample_interval > 0.0))
    throw std::invalid_argument("scene: max_acceleration and sample_interval must be positive");
  if (noise_std < 0.0) throw std::invalid_argument("scene: noise_std must be >= 0");
  geometry.validate();
}

// ---------------------------------------------------------------------------
// On-disk format

void save_dataset(const Dataset& ds, const std::filesystem::path& dir,
                  bool overwrite) {
  if (ds.size() < 1) throw std::invalid_argument("save_dataset: L >= 1 required");
  ds.validate();
  namespace fs = std::filesystem;
  if (fs::exists(dir / "meta.json") && !overwrite)
    throw std::runtime_error("save_dataset: refusing to overwrite " +
                             dir.string() + " (overwrite flag unset)");
  fs::create_directories(dir);

  nlohmann::json meta;
  meta["L"] = ds.size();
  meta["B"] = ds.geometry.num_arrays;
  meta["M_row"] = ds.geometry.rows;
  meta["M_col"] = ds.geometry.cols;
  meta["T"] = ds.geometry.taps;
  meta["sample_rate"] = ds.geometry.sample_rate;
  meta["carrier_wavelength"] = ds.geometry.carrier_wavelength;
  meta["antenna_spacing"] = ds.geometry.antenna_spacing;
  auto positions = nlohmann::json::array();
  for (Vec2 p : ds.geometry.array_positions)
    positions.push_back({p.x, p.y});
  meta["array_positions"] = positions;
  meta["array_orientations"] = ds.geometry.array_orientations;
  meta["has_positions"] = ds.has_positions;
  ioutil::write_text(dir / "meta.json", meta.dump(2) + "\n");

  ioutil::write_file<cfloat>(dir / "csi.bin", ds.cir);
  if (ds.has_positions) {
    std::vector<double> flat(2 * static_cast<size_t>(ds.size()));
    for (size_t l = 0; l < ds.size(); ++l) {
      flat[2 * l] = ds.positions[l].x;
      flat[2 * l + 1] = ds.positions[l].y;
    }
    ioutil::write_file<double>(dir / "pos.bin", flat);
  }
  ioutil::write_file<double>(dir / "time.bin", ds.timestamps);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ioutil::read_text(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_dataset: bad meta.json: " + std::string(e.what()));
  }

  Dataset ds;
  const auto L = meta.at("L").get<uint64_t>();
  ds.geometry.num_arrays = meta.at("B").get<uint32_t>();
  ds.geometry.rows = meta.at("M_row").get<uint32_t>();
  ds.geometry.cols = meta.at("M_col").get<uint32_t>();
  ds.geometry.taps = meta.at("T").get<uint32_t>();
  ds.geometry.sample_rate = meta.at("sample_rate").get<double>();
  ds.geometry.carrier_wavelength = meta.at("carrier_wavelength").get<double>();
  ds.geometry.antenna_spacing = meta.at("antenna_spacing").get<double>();
  for (const auto& p : meta.at("array_positions"))
    ds.geometry.array_positions.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  for (const auto& a : meta.at("array_orientations"))
    ds.geometry.array_orientations.push_back(wrap_angle(a.get<double>()));
  ds.has_positions = meta.at("has_positions").get<bool>();

  ds.cir = ioutil::read_array<cfloat>(dir / "csi.bin", L * ds.geometry.cir_size());
  ds.timestamps = ioutil::read_array<double>(dir / "time.bin", L);

  if (ds.has_positions) {
    auto bytes = ioutil::read_file(dir / "pos.bin");
    size_t cols = 0;
    if (bytes.size() == L * 2 * sizeof(double)) cols = 2;
    else if (bytes.size() == L * 3 * sizeof(double)) cols = 3;
    else
      throw std::runtime_error("payload size mismatch: " + (dir / "pos.bin").string());
    if (cols == 3)
      std::fprintf(stderr, "load_dataset: pos.bin has 3 coordinates per point; dropping the third\n");
    std::vector<double> flat(L * cols);
    std::memcpy(flat.data(), bytes.data(), bytes.size());
    ds.positions.resize(L);
    for (size_t l = 0; l < L; ++l)
      ds.positions[l] = {flat[cols * l], flat[cols * l + 1]};
  }

  ds.validate();
  ds.recompute_breaks();
  return ds;
}

Dataset restrict_to_array(const Dataset& ds, uint32_t array_number) {
  if (array_number < 1 || array_number > ds.geometry.num_arrays)
    throw std::invalid_argument("restrict_to_array: array number out of range");
  const uint32_t b = array_number - 1;

  Dataset out;
  out.geometry = ds.geometry;
  out.geometry.num_arrays = 1;
  out.geometry.array_positions = {ds.geometry.array_positions[b]};
  out.geometry.array_orientations = {ds.geometry.array_orientations[b]};
  out.positions = ds.positions;
  out.timestamps = ds.timestamps;
  out.has_positions = ds.has_positions;
  out.trajectory_breaks = ds.trajectory_breaks;

  const size_t per_array = ds.geometry.antennas_per_array() * ds.geometry.taps;
  const size_t full = ds.geometry.cir_size();
  out.cir.resize(ds.size() * per_array);
  for (size_t l = 0; l < ds.size(); ++l)
    std::copy_n(ds.cir.data() + l * full + b * per_array, per_array,
                out.cir.data() + l * per_array);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic scene

void synthesize_cir(const SceneConfig& cfg, Vec2 tx, std::span<cfloat> out) {
  const ArrayGeometry& g = cfg.geometry;
  if (out.size() != g.cir_size())
    throw std::invalid_argument("synthesize_cir: output span size mismatch");
  std::fill(out.begin(), out.end(), cfloat{});

  struct Ray {
    double distance;
    double azimuth;  // world angle of arrival at the array
    double amplitude;
  };

  const double tap_rate = g.sample_rate / kSpeedOfLight;  // taps per meter
  for (uint32_t b = 0; b < g.num_arrays; ++b) {
    const Vec2 ap = g.array_positions[b];
    std::vector<Ray> rays;
    rays.reserve(cfg.scatterers.size() + 1);

    const bool los_blocked =
        !cfg.blocker.empty() && segment_crosses_polygon(tx, ap, cfg.blocker);
    if (!los_blocked) {
      const double d = std::max(distance(tx, ap), 0.1);
      rays.push_back({d, std::atan2(tx.y - ap.y, tx.x - ap.x), 10.0 / d});
    }
    for (const Scatterer& sc : cfg.scatterers) {
      const double d1 = std::max(distance(tx, sc.position), 0.1);
      const double d2 = std::max(distance(sc.position, ap), 0.1);
      rays.push_back({d1 + d2,
                      std::atan2(sc.position.y - ap.y, sc.position.x - ap.x),
                      sc.gain / (d1 * d2)});
    }

    for (const Ray& ray : rays) {
      const double carrier_phase =
          -2.0 * std::numbers::pi * ray.distance / g.carrier_wavelength;
      const double tap_center = ray.distance * tap_rate;
      const double local = ray.azimuth - g.array_orientations[b];
      const double phase_step =
          2.0 * std::numbers::pi * g.antenna_spacing * std::sin(local);
      for (uint32_t c = 0; c < g.cols; ++c) {
        const double col_phase =
            phase_step * (static_cast<double>(c) - 0.5 * (g.cols - 1));
        const std::complex<double> steer =
            std::polar(ray.amplitude, carrier_phase + col_phase);
        for (uint32_t tap = 0; tap < g.taps; ++tap) {
          const double pulse = raised_cosine(static_cast<double>(tap) - tap_center);
          if (std::abs(pulse) < 1e-7) continue;
          const cfloat value{static_cast<float>(steer.real() * pulse),
                             static_cast<float>(steer.imag() * pulse)};
          for (uint32_t r = 0; r < g.rows; ++r) {
            const size_t idx =
                ((static_cast<size_t>(b) * g.rows + r) * g.cols + c) * g.taps + tap;
            out[idx] += value;
          }
        }
      }
    }
  }
}

namespace {

struct Walker {
  Vec2 pos, vel;
  Vec2 waypoint;
  double waypoint_age = 0.0;
};

Vec2 clamp_norm(Vec2 v, double max_norm) {
  double n = v.norm();
  return n > max_norm ? v * (max_norm / n) : v;
}

Vec2 sample_interior_point(Rng& rng, std::span<const Vec2> poly, double margin) {
  Bbox box = polygon_bbox(poly);
  for (int tries = 0; tries < 20000; ++tries) {
    Vec2 p{rng.uniform(box.lo.x, box.hi.x), rng.uniform(box.lo.y, box.hi.y)};
    if (point_in_polygon(p, poly) && distance_to_boundary(p, poly) > margin)
      return p;
  }
  throw std::runtime_error("synth_scene: polygon degenerate (no interior found)");
}

}  // namespace

Dataset synth_scene(const SceneConfig& cfg) {
  cfg.validate();
  const double dt = cfg.sample_interval;
  const double a_max = cfg.max_acceleration;
  const double a_brake = 0.5 * a_max;
  const double v_max = 2.0 * cfg.mean_speed;
  // Wall margin: large enough that a full brake always stops inside
  // (>= a_brake * dt^2 / 2), small enough that tight polygons keep an
  // interior.
  const Bbox box = polygon_bbox(cfg.polygon);
  const double min_side = std::min(box.hi.x - box.lo.x, box.hi.y - box.lo.y);
  const double margin = std::max(0.5 * a_brake * dt * dt + 1e-3,
                                 std::min(v_max * dt + 0.05, 0.2 * min_side));

  Rng traj_rng(cfg.seed, 0x7261796b77616cull);  // trajectory stream
  Rng noise_rng(cfg.seed, 0x6e6f697365ull);     // CIR noise stream

  // Speed cap that guarantees a full brake always stops before the wall.
  auto allowed_speed = [&](Vec2 p) {
    double d = distance_to_boundary(p, cfg.polygon);
    return std::sqrt(std::max(0.0, 2.0 * a_brake * (d - margin)));
  };

  Walker w;
  w.pos = sample_interior_point(traj_rng, cfg.polygon, margin);
  {
    double heading = traj_rng.uniform(0.0, 2.0 * std::numbers::pi);
    double v0 = std::min(0.5 * cfg.mean_speed, allowed_speed(w.pos));
    w.vel = {v0 * std::cos(heading), v0 * std::sin(heading)};
  }
  w.waypoint = sample_interior_point(traj_rng, cfg.polygon, margin);

  std::vector<Vec2> track(cfg.num_points);
  track[0] = w.pos;

  auto acceptable = [&](Vec2 vel_next) {
    Vec2 pos_next = w.pos + vel_next * dt;
    if (!point_in_polygon(pos_next, cfg.polygon)) return false;
    double sp = vel_next.norm();
    return sp <= v_max + 1e-12 && sp <= allowed_speed(pos_next) + 1e-12;
  };

  for (uint32_t l = 1; l < cfg.num_points; ++l) {
    // Waypoint steering keeps the walk covering the whole polygon.
    w.waypoint_age += dt;
    if (w.waypoint_age > 20.0 || distance(w.pos, w.waypoint) < 1.0) {
      w.waypoint = sample_interior_point(traj_rng, cfg.polygon, margin);
      w.waypoint_age = 0.0;
    }

    const double speed = w.vel.norm();
    Vec2 heading = speed > 1e-9 ? w.vel / speed : Vec2{1.0, 0.0};
    Vec2 lateral{-heading.y, heading.x};

    Vec2 a_des{};
    a_des += heading * ((cfg.mean_speed - speed) * 1.0);
    a_des += lateral * (0.5 * a_max * traj_rng.normal());
    Vec2 to_wp = w.waypoint - w.pos;
    double wp_dist = to_wp.norm();
    if (wp_dist > 1e-9) a_des += to_wp * (0.35 * a_max / wp_dist);
    double bd = distance_to_boundary(w.pos, cfg.polygon);
    a_des += inward_direction(w.pos, cfg.polygon) *
             (a_brake * std::exp(-(bd - margin) / std::max(margin, 1e-3)));
    a_des = clamp_norm(a_des, 0.85 * a_max);

    // Candidate accelerations in preference order; the full brake is always
    // feasible given the allowed_speed invariant.
    std::vector<Vec2> candidates{a_des};
    for (double deg : {30.0, -30.0, 60.0, -60.0, 90.0, -90.0, 135.0, -135.0}) {
      double rad = deg * std::numbers::pi / 180.0;
      double cs = std::cos(rad), sn = std::sin(rad);
      candidates.push_back({a_des.x * cs - a_des.y * sn, a_des.x * sn + a_des.y * cs});
    }
    candidates.push_back({});
    candidates.push_back(heading * (-std::min(a_max, speed / dt)));

    bool stepped = false;
    for (Vec2 a : candidates) {
      Vec2 vel_next = w.vel + a * dt;
      if (acceptable(vel_next)) {
        w.vel = vel_next;
        w.pos = w.pos + vel_next * dt;
        stepped = true;
        break;
      }
    }
    if (!stepped)
      throw std::runtime_error("synth_scene: trajectory failed to stay inside polygon");
    track[l] = w.pos;
  }

  Dataset ds;
  ds.geometry = cfg.geometry;
  ds.has_positions = true;
  ds.positions = std::move(track);
  ds.timestamps.resize(cfg.num_points);
  for (uint32_t l = 0; l < cfg.num_points; ++l) ds.timestamps[l] = l * dt;

  const size_t sz = ds.geometry.cir_size();
  ds.cir.resize(static_cast<size_t>(cfg.num_points) * sz);
  for (uint32_t l = 0; l < cfg.num_points; ++l) {
    std::span<cfloat> slot{ds.cir.data() + static_cast<size_t>(l) * sz, sz};
    synthesize_cir(cfg, ds.positions[l], slot);
    if (cfg.noise_std > 0.0) {
      const double s = cfg.noise_std / std::numbers::sqrt2;
      for (cfloat& v : slot)
        v += cfloat{static_cast<float>(s * noise_rng.normal()),
                    static_cast<float>(s * noise_rng.normal())};
    }
  }

  ds.validate();
  ds.recompute_breaks();
  return ds;
}

SceneConfig default_scene(uint32_t num_points, uint64_t seed) {
  SceneConfig cfg;
  // L-shaped walkable area, 12 m outer edge, 4.5 m arm width.
  cfg.polygon = {{0.0, 0.0}, {12.0, 0.0}, {12.0, 4.5},
                 {4.5, 4.5}, {4.5, 12.0}, {0.0, 12.0}};
  // Metal-container stand-in in the concave notch; blocks cross-corner LoS.
  cfg.blocker = {{5.0, 5.0}, {8.5, 5.0}, {8.5, 8.5}, {5.0, 8.5}};
  cfg.num_points = num_points;
  cfg.mean_speed = 1.1;
  cfg.max_acceleration = 1.5;
  cfg.sample_interval = 0.35;
  cfg.noise_std = 0.02;
  cfg.seed = seed;
  cfg.scatterers = {
      {{0.4, 0.4}, 30.0},  {{11.6, 0.4}, 30.0}, {{11.6, 4.1}, 25.0},
      {{0.4, 11.6}, 30.0}, {{4.1, 11.6}, 25.0}, {{4.1, 4.1}, 20.0},
      {{6.0, 0.4}, 25.0},  {{0.4, 6.0}, 25.0},  {{9.0, 4.1}, 20.0},
      {{4.1, 9.0}, 20.0},  {{2.2, 2.2}, 15.0},  {{10.0, 2.2}, 15.0},
      {{2.2, 10.0}, 15.0}, {{6.5, 2.2}, 15.0},
  };

  ArrayGeometry g;
  g.num_arrays = 4;
  g.rows = 2;
  g.cols = 4;
  g.taps = 13;
  g.sample_rate = 50e6;
  g.carrier_wavelength = 0.086;  // ~3.5 GHz
  g.antenna_spacing = 0.5;
  g.array_positions = {{6.0, -0.3}, {12.3, 2.25}, {-0.3, 6.0}, {2.25, 12.3}};
  g.array_orientations = {std::numbers::pi / 2.0, -std::numbers::pi,
                          0.0, -std::numbers::pi / 2.0};
  cfg.geometry = g;
  return cfg;
}

}  // namespace chartlib
