#include "chartlib/chart_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "chartlib/io_util.hpp"
#include "chartlib/rng.hpp"

namespace chartlib {

namespace {

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double softplus_grad(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::vector<double> feature_map(std::span<const cfloat> cir) {
  std::vector<double> out(2 * cir.size());
  double power = 0.0;
  for (const cfloat& v : cir) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw std::invalid_argument("feature_map: non-finite CIR value");
    power += static_cast<double>(v.real()) * v.real() +
             static_cast<double>(v.imag()) * v.imag();
  }
  if (power == 0.0) return out;  // all-zero input maps to all-zero features
  const double scale = std::sqrt(2.0 * static_cast<double>(cir.size()) / power);
  for (size_t c = 0; c < cir.size(); ++c) {
    out[2 * c] = scale * cir[c].real();
    out[2 * c + 1] = scale * cir[c].imag();
  }
  return out;
}

FeatureMatrix feature_map_all(const Dataset& ds) {
  FeatureMatrix f;
  f.rows = ds.size();
  f.dim = static_cast<uint32_t>(2 * ds.geometry.cir_size());
  f.values.resize(static_cast<size_t>(f.rows) * f.dim);
#pragma omp parallel for schedule(static)
  for (int64_t l = 0; l < static_cast<int64_t>(f.rows); ++l) {
    auto row = feature_map(ds.cir_of(static_cast<uint32_t>(l)));
    std::copy(row.begin(), row.end(),
              f.values.begin() + static_cast<size_t>(l) * f.dim);
  }
  return f;
}

// ---------------------------------------------------------------------------

void ChartModel::build_offsets() {
  w_offset_.clear();
  b_offset_.clear();
  size_t off = 0;
  for (size_t layer = 0; layer + 1 < dims_.size(); ++layer) {
    w_offset_.push_back(off);
    off += static_cast<size_t>(dims_[layer + 1]) * dims_[layer];
    b_offset_.push_back(off);
    off += dims_[layer + 1];
  }
  params_.resize(off);
}

ChartModel ChartModel::make_parametric(uint32_t input_dim,
                                       std::span<const uint32_t> hidden,
                                       uint64_t seed) {
  if (input_dim < 1) throw std::invalid_argument("make_parametric: input_dim >= 1");
  ChartModel m;
  m.mode_ = ChartMode::parametric;
  m.seed_ = seed;
  m.dims_.push_back(input_dim);
  for (uint32_t h : hidden) {
    if (h < 1) throw std::invalid_argument("make_parametric: empty hidden layer");
    m.dims_.push_back(h);
  }
  m.dims_.push_back(2);
  m.build_offsets();

  // Uniform fan-in init, biases zero.
  Rng rng(seed, 0x696e6974ull);
  for (size_t layer = 0; layer + 1 < m.dims_.size(); ++layer) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(m.dims_[layer]));
    double* w = m.params_.data() + m.w_offset_[layer];
    const size_t count = static_cast<size_t>(m.dims_[layer + 1]) * m.dims_[layer];
    for (size_t t = 0; t < count; ++t) w[t] = rng.uniform(-bound, bound);
    double* b = m.params_.data() + m.b_offset_[layer];
    std::fill(b, b + m.dims_[layer + 1], 0.0);
  }
  return m;
}

ChartModel ChartModel::make_free(uint32_t num_points, double init_scale,
                                 uint64_t seed) {
  if (num_points < 1) throw std::invalid_argument("make_free: need at least one point");
  ChartModel m;
  m.mode_ = ChartMode::free_embedding;
  m.seed_ = seed;
  m.params_.resize(2 * static_cast<size_t>(num_points));
  Rng rng(seed, 0x667265655f696eull);
  for (double& p : m.params_) p = rng.uniform(-init_scale, init_scale);
  return m;
}

Vec2 ChartModel::forward(std::span<const double> features) const {
  if (mode_ != ChartMode::parametric)
    throw std::logic_error("forward(features): model is in free-embedding mode");
  if (features.size() != dims_.front())
    throw std::invalid_argument("forward: feature length does not match input layer");

  std::vector<double> a(features.begin(), features.end());
  std::vector<double> next;
  for (size_t layer = 0; layer + 1 < dims_.size(); ++layer) {
    const uint32_t in = dims_[layer], out = dims_[layer + 1];
    const double* w = params_.data() + w_offset_[layer];
    const double* b = params_.data() + b_offset_[layer];
    next.assign(out, 0.0);
    for (uint32_t o = 0; o < out; ++o) {
      double acc = b[o];
      const double* wrow = w + static_cast<size_t>(o) * in;
      for (uint32_t i = 0; i < in; ++i) acc += wrow[i] * a[i];
      next[o] = (layer + 2 < dims_.size()) ? softplus(acc) : acc;
    }
    a.swap(next);
  }
  return {a[0], a[1]};
}

Vec2 ChartModel::coord(uint32_t index) const {
  if (mode_ != ChartMode::free_embedding)
    throw std::logic_error("coord(index): model is parametric");
  return {params_[2 * static_cast<size_t>(index)],
          params_[2 * static_cast<size_t>(index) + 1]};
}

std::vector<Vec2> ChartModel::forward_all(const FeatureMatrix& features) const {
  Cache scratch;
  return forward_all(features, scratch);
}

std::vector<Vec2> ChartModel::forward_all(const FeatureMatrix& features,
                                          Cache& cache) const {
  if (mode_ == ChartMode::free_embedding) {
    const uint32_t n = num_points();
    if (features.rows != 0 && features.rows != n)
      throw std::invalid_argument("forward_all: row count does not match free embedding");
    std::vector<Vec2> z(n);
    for (uint32_t l = 0; l < n; ++l) z[l] = coord(l);
    cache.rows = n;
    return z;
  }

  if (features.dim != dims_.front())
    throw std::invalid_argument("forward_all: feature dim does not match input layer");
  const uint32_t rows = features.rows;
  const size_t n_layers = dims_.size() - 1;
  cache.pre.assign(n_layers > 0 ? n_layers - 1 : 0, {});
  cache.act.assign(n_layers > 0 ? n_layers - 1 : 0, {});
  for (size_t layer = 0; layer + 1 < n_layers; ++layer) {
    cache.pre[layer].resize(static_cast<size_t>(rows) * dims_[layer + 1]);
    cache.act[layer].resize(static_cast<size_t>(rows) * dims_[layer + 1]);
  }
  cache.rows = rows;

  std::vector<Vec2> z(rows);
#pragma omp parallel
  {
    std::vector<double> a, next;
#pragma omp for schedule(static)
    for (int64_t l = 0; l < static_cast<int64_t>(rows); ++l) {
      auto row = features.row(static_cast<uint32_t>(l));
      a.assign(row.begin(), row.end());
      for (size_t layer = 0; layer < n_layers; ++layer) {
        const uint32_t in = dims_[layer], out = dims_[layer + 1];
        const double* w = params_.data() + w_offset_[layer];
        const double* b = params_.data() + b_offset_[layer];
        next.assign(out, 0.0);
        const bool hidden = layer + 1 < n_layers;
        for (uint32_t o = 0; o < out; ++o) {
          double acc = b[o];
          const double* wrow = w + static_cast<size_t>(o) * in;
          for (uint32_t i = 0; i < in; ++i) acc += wrow[i] * a[i];
          if (hidden) {
            cache.pre[layer][static_cast<size_t>(l) * out + o] = acc;
            acc = softplus(acc);
            cache.act[layer][static_cast<size_t>(l) * out + o] = acc;
          }
          next[o] = acc;
        }
        a.swap(next);
      }
      z[l] = {a[0], a[1]};
    }
  }
  return z;
}

std::vector<double> ChartModel::backward(const FeatureMatrix& features,
                                         const Cache& cache,
                                         std::span<const Vec2> upstream) const {
  std::vector<double> grad(params_.size(), 0.0);

  if (mode_ == ChartMode::free_embedding) {
    if (upstream.size() != num_points())
      throw std::invalid_argument("backward: upstream rows do not match free embedding");
    for (size_t l = 0; l < upstream.size(); ++l) {
      grad[2 * l] = upstream[l].x;
      grad[2 * l + 1] = upstream[l].y;
    }
    return grad;
  }

  const uint32_t rows = cache.rows;
  if (rows != features.rows || upstream.size() != rows)
    throw std::invalid_argument("backward: stale forward cache");
  const size_t n_layers = dims_.size() - 1;

  // d(loss)/d(pre-activation) of the current layer, rows x width.
  std::vector<double> dcur(static_cast<size_t>(rows) * 2);
  for (uint32_t l = 0; l < rows; ++l) {
    dcur[2 * static_cast<size_t>(l)] = upstream[l].x;
    dcur[2 * static_cast<size_t>(l) + 1] = upstream[l].y;
  }

  std::vector<double> dprev;
  for (size_t layer = n_layers; layer-- > 0;) {
    const uint32_t in = dims_[layer], out = dims_[layer + 1];
    const double* input =
        layer == 0 ? features.values.data() : cache.act[layer - 1].data();

    // dW[o][i] and db[o]: each entry is one full dot product over rows, so
    // the reduction order is fixed regardless of thread count.
    double* dw = grad.data() + w_offset_[layer];
    double* db = grad.data() + b_offset_[layer];
#pragma omp parallel for schedule(static)
    for (int64_t o = 0; o < static_cast<int64_t>(out); ++o) {
      for (uint32_t i = 0; i < in; ++i) {
        double acc = 0.0;
        for (uint32_t l = 0; l < rows; ++l)
          acc += dcur[static_cast<size_t>(l) * out + o] *
                 input[static_cast<size_t>(l) * in + i];
        dw[static_cast<size_t>(o) * in + i] = acc;
      }
      double acc = 0.0;
      for (uint32_t l = 0; l < rows; ++l)
        acc += dcur[static_cast<size_t>(l) * out + o];
      db[o] = acc;
    }

    if (layer == 0) break;

    dprev.assign(static_cast<size_t>(rows) * in, 0.0);
    const double* w = params_.data() + w_offset_[layer];
    const double* pre = cache.pre[layer - 1].data();
#pragma omp parallel for schedule(static)
    for (int64_t l = 0; l < static_cast<int64_t>(rows); ++l) {
      const double* drow = dcur.data() + static_cast<size_t>(l) * out;
      double* prow = dprev.data() + static_cast<size_t>(l) * in;
      for (uint32_t o = 0; o < out; ++o) {
        const double d = drow[o];
        if (d == 0.0) continue;
        const double* wrow = w + static_cast<size_t>(o) * in;
        for (uint32_t i = 0; i < in; ++i) prow[i] += d * wrow[i];
      }
      for (uint32_t i = 0; i < in; ++i)
        prow[i] *= softplus_grad(pre[static_cast<size_t>(l) * in + i]);
    }
    dcur.swap(dprev);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Checkpoint format

void ChartModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["mode"] = mode_ == ChartMode::parametric ? "parametric" : "free";
  j["latent_dim"] = 2;
  j["activation"] = "softplus";
  j["seed"] = seed_;
  if (mode_ == ChartMode::parametric) j["layer_sizes"] = dims_;
  else j["num_points"] = num_points();
  ioutil::write_text(dir / "model.json", j.dump(2) + "\n");
  ioutil::write_file<double>(dir / "model.bin", params_);
}

ChartModel ChartModel::load(const std::filesystem::path& dir) {
  auto j = nlohmann::json::parse(ioutil::read_text(dir / "model.json"));
  ChartModel m;
  m.seed_ = j.at("seed").get<uint64_t>();
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "parametric") {
    m.mode_ = ChartMode::parametric;
    m.dims_ = j.at("layer_sizes").get<std::vector<uint32_t>>();
    if (m.dims_.size() < 2 || m.dims_.back() != 2)
      throw std::runtime_error("model.json: bad layer_sizes");
    m.build_offsets();
  } else if (mode == "free") {
    m.mode_ = ChartMode::free_embedding;
    m.params_.resize(2 * j.at("num_points").get<size_t>());
  } else {
    throw std::runtime_error("model.json: unknown mode " + mode);
  }
  m.params_ = ioutil::read_array<double>(dir / "model.bin", m.params_.size());
  return m;
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(ChartModel& model, const FeatureMatrix& features,
                           const LossEvaluator& loss, uint32_t max_params,
                           uint64_t seed) {
  ChartModel::Cache cache;
  auto z = model.forward_all(features, cache);
  std::vector<Vec2> upstream;
  loss(z, &upstream);
  auto analytic = model.backward(features, cache, upstream);

  auto params = model.params();
  const size_t total = params.size();
  std::vector<size_t> picks;
  if (total <= max_params) {
    picks.resize(total);
    for (size_t t = 0; t < total; ++t) picks[t] = t;
  } else {
    Rng rng(seed, 0x67726164636865ull);
    picks.resize(max_params);
    for (size_t t = 0; t < max_params; ++t) picks[t] = rng.below(total);
  }

  // Near-zero components are dominated by finite-difference round-off, so
  // the relative-error denominator is floored at a fraction of the overall
  // gradient scale.
  double scale = 0.0;
  for (double g : analytic) scale = std::max(scale, std::abs(g));
  const double floor = std::max(1e-6, 1e-3 * scale);

  const double h = 1e-5;
  GradCheckReport report;
  for (size_t idx : picks) {
    const double saved = params[idx];
    params[idx] = saved + h;
    const double up = loss(model.forward_all(features), nullptr);
    params[idx] = saved - h;
    const double down = loss(model.forward_all(features), nullptr);
    params[idx] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double an = analytic[idx];
    const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), floor});
    report.max_rel_error = std::max(report.max_rel_error, err);
    ++report.checked;
  }
  return report;
}

}  // namespace chartlib
