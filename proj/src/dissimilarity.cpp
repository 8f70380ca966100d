#include "chartlib/dissimilarity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "chartlib/io_util.hpp"
#include "chartlib/rng.hpp"

namespace chartlib {

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::time: return "time";
    case Metric::adp: return "adp";
    case Metric::fuse: return "fuse";
  }
  return "?";
}

Metric metric_from_name(const std::string& name) {
  if (name == "time") return Metric::time;
  if (name == "adp") return Metric::adp;
  if (name == "fuse") return Metric::fuse;
  throw std::invalid_argument("unknown metric tag: " + name);
}

void DistanceModel::validate() const {
  if (!(mean_speed > 0.0) || !(adp_scale > 0.0) || !(adp_exponent > 0.0))
    throw std::invalid_argument("distance model: mean_speed, adp_scale, adp_exponent must be positive");
  if (time_spread < 0.0 || adp_spread < 0.0)
    throw std::invalid_argument("distance model: spreads must be >= 0");
  if (!(sigma_min > 0.0))
    throw std::invalid_argument("distance model: sigma_min must be positive");
}

uint64_t DistanceModel::hash() const {
  uint64_t h = 0x243f6a8885a308d3ull;
  auto mix = [&h](double v) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    h = hash_combine(h, bits);
  };
  mix(mean_speed);
  mix(time_spread);
  mix(adp_scale);
  mix(adp_exponent);
  mix(adp_spread);
  mix(sigma_min);
  return h;
}

double delta_time(double t_i, double t_j) { return std::abs(t_i - t_j); }

double delta_adp(std::span<const cfloat> h_i, std::span<const cfloat> h_j,
                 const ArrayGeometry& g, uint64_t* zero_power_slices) {
  const size_t sz = g.cir_size();
  if (h_i.size() != sz || h_j.size() != sz)
    throw std::invalid_argument("delta_adp: tensor size does not match geometry");
  const uint32_t antennas = static_cast<uint32_t>(g.antennas_per_array());
  const uint32_t taps = g.taps;

  double total = 0.0;
  for (uint32_t b = 0; b < g.num_arrays; ++b) {
    const size_t base = static_cast<size_t>(b) * antennas * taps;
    for (uint32_t tap = 0; tap < taps; ++tap) {
      // Antenna slice for fixed (b, tap): stride T across the r,c grid.
      double cross_re = 0.0, cross_im = 0.0, pow_i = 0.0, pow_j = 0.0;
      for (uint32_t a = 0; a < antennas; ++a) {
        const size_t idx = base + static_cast<size_t>(a) * taps + tap;
        const cfloat vi = h_i[idx], vj = h_j[idx];
        // conj(vi) * vj
        cross_re += static_cast<double>(vi.real()) * vj.real() +
                    static_cast<double>(vi.imag()) * vj.imag();
        cross_im += static_cast<double>(vi.real()) * vj.imag() -
                    static_cast<double>(vi.imag()) * vj.real();
        pow_i += static_cast<double>(vi.real()) * vi.real() +
                 static_cast<double>(vi.imag()) * vi.imag();
        pow_j += static_cast<double>(vj.real()) * vj.real() +
                 static_cast<double>(vj.imag()) * vj.imag();
      }
      double p = 0.0;
      if (pow_i > 0.0 && pow_j > 0.0) {
        p = (cross_re * cross_re + cross_im * cross_im) / (pow_i * pow_j);
        p = std::min(p, 1.0);  // Cauchy-Schwarz, up to rounding
      } else if (zero_power_slices) {
        ++*zero_power_slices;
      }
      total += 1.0 - p;
    }
  }
  return total;
}

namespace {

float matrix_entry(const Dataset& ds, Metric metric, uint32_t i, uint32_t j,
                   uint64_t* zero_count) {
  if (metric == Metric::time)
    return static_cast<float>(delta_time(ds.timestamps[i], ds.timestamps[j]));
  return static_cast<float>(
      delta_adp(ds.cir_of(i), ds.cir_of(j), ds.geometry, zero_count));
}

}  // namespace

DissimilarityMatrix compute_matrix(const Dataset& ds, Metric metric,
                                   DissimStats* stats) {
  if (metric != Metric::time && metric != Metric::adp)
    throw std::invalid_argument("compute_matrix: metric must be time or adp");
  DissimilarityMatrix m;
  m.n = ds.size();
  m.tag = metric;
  m.packed.resize(m.pair_count());

  const uint32_t n = m.n;
  uint64_t zero_total = 0;
#pragma omp parallel for schedule(dynamic, 8) reduction(+ : zero_total)
  for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) {
    uint64_t zeros = 0;
    const size_t row_base = static_cast<size_t>(i) * (2 * static_cast<size_t>(n) - i - 1) / 2;
    for (uint32_t j = static_cast<uint32_t>(i) + 1; j < n; ++j)
      m.packed[row_base + (j - i - 1)] =
          matrix_entry(ds, metric, static_cast<uint32_t>(i), j, &zeros);
    zero_total += zeros;
  }
  if (stats) stats->zero_power_slices = zero_total;
  return m;
}

namespace serial {

DissimilarityMatrix compute_matrix(const Dataset& ds, Metric metric,
                                   DissimStats* stats) {
  if (metric != Metric::time && metric != Metric::adp)
    throw std::invalid_argument("compute_matrix: metric must be time or adp");
  DissimilarityMatrix m;
  m.n = ds.size();
  m.tag = metric;
  m.packed.resize(m.pair_count());
  uint64_t zeros = 0;
  size_t slot = 0;
  for (uint32_t i = 0; i < m.n; ++i)
    for (uint32_t j = i + 1; j < m.n; ++j)
      m.packed[slot++] = matrix_entry(ds, metric, i, j, &zeros);
  if (stats) stats->zero_power_slices = zeros;
  return m;
}

}  // namespace serial

GaussianMoments model_distance(double delta, Metric metric,
                               const DistanceModel& model) {
  if (delta < 0.0) throw std::invalid_argument("model_distance: delta must be >= 0");
  GaussianMoments out;
  switch (metric) {
    case Metric::time:
      out.mu = model.mean_speed * delta;
      out.sigma = std::max(model.time_spread * out.mu, model.sigma_min);
      break;
    case Metric::adp:
      out.mu = model.adp_scale * std::pow(delta, model.adp_exponent);
      out.sigma = std::max(model.adp_spread * out.mu, model.sigma_min);
      break;
    case Metric::fuse:
      // Fused values are already meters.
      out.mu = delta;
      out.sigma = model.sigma_min;
      break;
  }
  return out;
}

DistanceModel calibrate_adp_model(const Dataset& ds,
                                  const DissimilarityMatrix& time_matrix,
                                  const DissimilarityMatrix& adp_matrix,
                                  DistanceModel model,
                                  double short_time_quantile) {
  if (time_matrix.n != adp_matrix.n || time_matrix.n != ds.size())
    throw std::invalid_argument("calibrate_adp_model: matrix dimensions disagree");
  model.validate();

  std::vector<float> positive;
  positive.reserve(time_matrix.packed.size());
  for (float v : time_matrix.packed)
    if (v > 0.0f) positive.push_back(v);
  if (positive.empty())
    throw std::runtime_error("calibrate_adp_model: insufficient calibration pairs (all delta_time zero)");
  const size_t q_idx = static_cast<size_t>(
      std::min<double>(positive.size() - 1.0,
                       short_time_quantile * static_cast<double>(positive.size())));
  std::nth_element(positive.begin(), positive.begin() + q_idx, positive.end());
  const float cutoff = positive[q_idx];

  // Least squares: log(mean_speed * dt) = log(alpha) + gamma * log(d_adp).
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  size_t count = 0;
  const size_t pairs = time_matrix.packed.size();
  for (size_t p = 0; p < pairs; ++p) {
    const float dt = time_matrix.packed[p];
    const float da = adp_matrix.packed[p];
    if (dt <= 0.0f || dt > cutoff || da <= 0.0f) continue;
    const double x = std::log(static_cast<double>(da));
    const double y = std::log(model.mean_speed * static_cast<double>(dt));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  if (count < 10)
    throw std::runtime_error("calibrate_adp_model: insufficient calibration pairs");
  const double denom = count * sxx - sx * sx;
  if (std::abs(denom) < 1e-12 * count * std::max(sxx, 1.0))
    throw std::runtime_error("calibrate_adp_model: degenerate fit (constant delta_adp)");
  const double gamma = (count * sxy - sx * sy) / denom;
  const double log_alpha = (sy - gamma * sx) / count;

  model.adp_exponent = gamma;
  model.adp_scale = std::exp(log_alpha);
  model.validate();
  return model;
}

DissimilarityMatrix fuse(const DissimilarityMatrix& time_matrix,
                         const DissimilarityMatrix& adp_matrix,
                         const DistanceModel& model) {
  if (time_matrix.n != adp_matrix.n)
    throw std::invalid_argument("fuse: matrix dimensions disagree");
  model.validate();
  DissimilarityMatrix out;
  out.n = time_matrix.n;
  out.tag = Metric::fuse;
  out.packed.resize(time_matrix.packed.size());
  const size_t pairs = out.packed.size();
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < static_cast<int64_t>(pairs); ++p) {
    const double mu_t = model_distance(time_matrix.packed[p], Metric::time, model).mu;
    const double mu_a = model_distance(adp_matrix.packed[p], Metric::adp, model).mu;
    out.packed[p] = static_cast<float>(std::min(mu_t, mu_a));
  }
  return out;
}

// ---------------------------------------------------------------------------
// File format

namespace {

nlohmann::json model_to_json(const DistanceModel& m) {
  return {{"mean_speed", m.mean_speed}, {"time_spread", m.time_spread},
          {"adp_scale", m.adp_scale},   {"adp_exponent", m.adp_exponent},
          {"adp_spread", m.adp_spread}, {"sigma_min", m.sigma_min}};
}

DistanceModel model_from_json(const nlohmann::json& j) {
  DistanceModel m;
  m.mean_speed = j.at("mean_speed").get<double>();
  m.time_spread = j.at("time_spread").get<double>();
  m.adp_scale = j.at("adp_scale").get<double>();
  m.adp_exponent = j.at("adp_exponent").get<double>();
  m.adp_spread = j.at("adp_spread").get<double>();
  m.sigma_min = j.at("sigma_min").get<double>();
  return m;
}

}  // namespace

void save_matrix(const DissimilarityMatrix& m, const DistanceModel& model,
                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string stem = std::string("dissim-") + metric_name(m.tag);
  std::vector<uint8_t> blob(8 + m.packed.size() * sizeof(float));
  const uint64_t n64 = m.n;
  std::memcpy(blob.data(), &n64, 8);
  std::memcpy(blob.data() + 8, m.packed.data(), m.packed.size() * sizeof(float));
  ioutil::write_file(dir / (stem + ".bin"), blob.data(), blob.size());

  nlohmann::json j;
  j["metric_tag"] = metric_name(m.tag);
  j["L"] = m.n;
  j["model"] = model_to_json(model);
  ioutil::write_text(dir / (stem + ".json"), j.dump(2) + "\n");
}

DissimilarityMatrix load_matrix(const std::filesystem::path& dir, Metric metric,
                                DistanceModel* model_out) {
  const std::string stem = std::string("dissim-") + metric_name(metric);
  auto blob = ioutil::read_file(dir / (stem + ".bin"));
  if (blob.size() < 8)
    throw std::runtime_error("payload size mismatch: " + (dir / (stem + ".bin")).string());
  uint64_t n64 = 0;
  std::memcpy(&n64, blob.data(), 8);
  DissimilarityMatrix m;
  m.n = static_cast<uint32_t>(n64);
  m.tag = metric;
  const size_t expect = m.pair_count() * sizeof(float);
  if (blob.size() != 8 + expect)
    throw std::runtime_error("payload size mismatch: " + (dir / (stem + ".bin")).string());
  m.packed.resize(m.pair_count());
  std::memcpy(m.packed.data(), blob.data() + 8, expect);

  auto j = nlohmann::json::parse(ioutil::read_text(dir / (stem + ".json")));
  if (metric_from_name(j.at("metric_tag").get<std::string>()) != metric)
    throw std::runtime_error("matrix metadata tag mismatch in " + (dir / (stem + ".json")).string());
  if (model_out) *model_out = model_from_json(j.at("model"));
  return m;
}

}  // namespace chartlib
