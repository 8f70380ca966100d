#include "chartlib/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "chartlib/io_util.hpp"
#include "chartlib/rng.hpp"

namespace chartlib {

const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::siam: return "siam";
    case LossKind::geo: return "geo";
    case LossKind::geo_unc: return "geo-unc";
  }
  return "?";
}

LossKind loss_from_name(const std::string& name) {
  if (name == "siam") return LossKind::siam;
  if (name == "geo") return LossKind::geo;
  if (name == "geo-unc" || name == "geo_unc") return LossKind::geo_unc;
  throw std::invalid_argument("unknown loss kind: " + name);
}

void TrainConfig::validate() const {
  if (!(beta > 0.0)) throw std::invalid_argument("train: beta must be positive");
  if (!(sigma_acc > 0.0)) throw std::invalid_argument("train: sigma_acc must be positive");
  if (mu_acc < 0.0) throw std::invalid_argument("train: mu_acc must be >= 0");
  if (batch_pairs < 1) throw std::invalid_argument("train: batch_pairs >= 1");
  if (steps < 1) throw std::invalid_argument("train: steps >= 1");
  if (!(learning_rate > 0.0) && learning_rate != 0.0)
    throw std::invalid_argument("train: learning_rate must be >= 0");
  if (!(subsample.target_segment_length > 0.0))
    throw std::invalid_argument("train: target_segment_length must be positive");
}

// ---------------------------------------------------------------------------
// Losses

namespace {

struct SparseGrad {
  std::vector<std::pair<uint32_t, Vec2>> terms;
  void add(uint32_t row, Vec2 g) { terms.push_back({row, g}); }
  void clear() { terms.clear(); }
};

// Length of the sub-sampled path plus d(rho)/dz scaled by `upstream`.
double rho_geo_term(std::span<const Vec2> z, std::span<const uint32_t> q,
                    uint32_t s, double upstream, SparseGrad* grad) {
  if (q.empty()) throw std::invalid_argument("rho_geo: empty path");
  if (s < 1) throw std::invalid_argument("rho_geo: s >= 1 required");
  const size_t hops = q.size() - 1;
  double rho = 0.0;
  size_t m = 0;
  while (m < hops) {
    const size_t next = std::min(m + s, hops);
    const uint32_t a = q[m], b = q[next];
    const Vec2 diff = z[a] - z[b];
    const double norm = diff.norm();
    rho += norm;
    if (grad && norm > 0.0) {
      const Vec2 unit = diff / norm;
      grad->add(a, unit * upstream);
      grad->add(b, unit * -upstream);
    }
    // Norm gradient at coincident points is taken as 0.
    m = next;
  }
  return rho;
}

// Exceptions cannot cross an OpenMP region; every precondition is checked
// here, serially, before the parallel loop.
void validate_batch(std::span<const PathSample> batch, bool need_sigma) {
  for (const PathSample& p : batch) {
    if (p.q.empty()) throw std::invalid_argument("loss: empty path in batch");
    if (p.s < 1) throw std::invalid_argument("loss: s >= 1 required");
    if (need_sigma && !(p.sigma_geo > 0.0))
      throw std::invalid_argument("loss_geo_unc: sigma_geo must be positive");
  }
}

template <typename TermFn>
double batched_loss(std::span<const PathSample> batch, std::vector<Vec2>* grad,
                    TermFn term) {
  const size_t n = batch.size();
  std::vector<double> values(n, 0.0);
  std::vector<SparseGrad> grads(grad ? n : 0);
#pragma omp parallel for schedule(dynamic, 64)
  for (int64_t b = 0; b < static_cast<int64_t>(n); ++b)
    values[b] = term(batch[b], grad ? &grads[b] : nullptr);
  // Fixed-order reduction keeps results independent of the thread count.
  double total = 0.0;
  for (double v : values) total += v;
  if (grad)
    for (const SparseGrad& sg : grads)
      for (const auto& [row, g] : sg.terms) (*grad)[row] += g;
  return total;
}

}  // namespace

double rho_geo(std::span<const Vec2> z, std::span<const uint32_t> q, uint32_t s) {
  return rho_geo_term(z, q, s, 0.0, nullptr);
}

double rho_geo(std::span<const Vec2> z, std::span<const uint32_t> q, uint32_t s,
               std::vector<Vec2>& grad) {
  SparseGrad sg;
  const double rho = rho_geo_term(z, q, s, 1.0, &sg);
  for (const auto& [row, g] : sg.terms) grad[row] += g;
  return rho;
}

double loss_siam(std::span<const Vec2> z, std::span<const PathSample> batch,
                 double beta, std::vector<Vec2>* grad) {
  validate_batch(batch, false);
  return batched_loss(batch, grad, [&](const PathSample& p, SparseGrad* sg) {
    const uint32_t i = p.q.front(), j = p.q.back();
    const Vec2 diff = z[i] - z[j];
    const double norm = diff.norm();
    const double denom = p.delta_geo + beta;
    const double resid = norm - p.delta_geo;
    if (sg && norm > 0.0) {
      const Vec2 unit = diff * (2.0 * resid / (denom * norm));
      sg->add(i, unit);
      sg->add(j, unit * -1.0);
    }
    return resid * resid / denom;
  });
}

double loss_geo(std::span<const Vec2> z, std::span<const PathSample> batch,
                double beta, std::vector<Vec2>* grad) {
  validate_batch(batch, false);
  return batched_loss(batch, grad, [&](const PathSample& p, SparseGrad* sg) {
    const double denom = p.delta_geo + beta;
    const double rho = rho_geo_term(z, p.q, p.s, 0.0, nullptr);
    const double resid = rho - p.delta_geo;
    if (sg) rho_geo_term(z, p.q, p.s, 2.0 * resid / denom, sg);
    return resid * resid / denom;
  });
}

double loss_geo_unc(std::span<const Vec2> z, std::span<const PathSample> batch,
                    std::vector<Vec2>* grad) {
  validate_batch(batch, true);
  return batched_loss(batch, grad, [&](const PathSample& p, SparseGrad* sg) {
    const double var = p.sigma_geo * p.sigma_geo;
    const double rho = rho_geo_term(z, p.q, p.s, 0.0, nullptr);
    const double resid = rho - p.mu_geo;
    if (sg) rho_geo_term(z, p.q, p.s, resid / var, sg);
    return resid * resid / (2.0 * var);
  });
}

double loss_acc(std::span<const Vec2> z, std::span<const double> timestamps,
                std::span<const uint32_t> trajectory_breaks, double mu_acc,
                double sigma_acc, std::vector<Vec2>* grad) {
  if (!(sigma_acc > 0.0))
    throw std::invalid_argument("loss_acc: sigma_acc must be positive");
  const size_t L = z.size();
  const double inv_var = 1.0 / (sigma_acc * sigma_acc);

  // Count valid terms first: l with two predecessors inside one segment.
  std::vector<size_t> seg_starts{0};
  for (uint32_t b : trajectory_breaks) seg_starts.push_back(b);
  seg_starts.push_back(L);

  size_t count = 0;
  for (size_t s = 0; s + 1 < seg_starts.size(); ++s) {
    const size_t len = seg_starts[s + 1] - seg_starts[s];
    if (len >= 3) count += len - 2;
  }
  if (count == 0) return 0.0;
  const double inv_count = 1.0 / static_cast<double>(count);

  double total = 0.0;
  for (size_t s = 0; s + 1 < seg_starts.size(); ++s) {
    for (size_t l = seg_starts[s] + 2; l < seg_starts[s + 1]; ++l) {
      const double dt1 = timestamps[l - 1] - timestamps[l - 2];
      const double dt2 = timestamps[l] - timestamps[l - 1];
      if (!(dt1 > 0.0) || !(dt2 > 0.0))
        throw std::invalid_argument("loss_acc: duplicate timestamps");
      const Vec2 v1 = (z[l - 1] - z[l - 2]) / dt1;
      const Vec2 v2 = (z[l] - z[l - 1]) / dt2;
      const Vec2 a_vec = (v2 - v1) / dt2;
      const double a = a_vec.norm();

      // -ln(e^{u1} + e^{u2}) with u1 >= u2, evaluated via log1p.
      const double u1 = -0.5 * (a - mu_acc) * (a - mu_acc) * inv_var;
      const double u2 = -0.5 * (a + mu_acc) * (a + mu_acc) * inv_var;
      const double w = std::exp(u2 - u1);
      total += -(u1 + std::log1p(w));

      if (grad && a > 0.0) {
        const double dterm_da =
            ((a - mu_acc) + w * (a + mu_acc)) * inv_var / (1.0 + w);
        const Vec2 unit = a_vec / a;
        const double c2 = 1.0 / (dt2 * dt2);
        const double c1 = 1.0 / (dt1 * dt2);
        const Vec2 g = unit * (dterm_da * inv_count);
        (*grad)[l] += g * c2;
        (*grad)[l - 1] -= g * (c2 + c1);
        (*grad)[l - 2] += g * c1;
      }
    }
  }
  return total * inv_count;
}

// ---------------------------------------------------------------------------
// Schedule and batch sampling

uint32_t schedule_subsample(uint32_t step, uint32_t hops, double delta_geo,
                            const SubsampleSchedule& schedule,
                            uint32_t total_steps) {
  if (hops <= 1) return 1;
  const uint32_t decay =
      schedule.decay_steps > 0 ? schedule.decay_steps : total_steps;
  const double target = schedule.target_segment_length;
  uint32_t s_target = 1;
  if (delta_geo > 0.0) {
    const double raw = std::floor(static_cast<double>(hops) * target / delta_geo);
    s_target = static_cast<uint32_t>(std::clamp(raw, 1.0, static_cast<double>(hops)));
  } else {
    s_target = hops;
  }
  if (!schedule.start_full) return s_target;

  const uint32_t warmup =
      static_cast<uint32_t>(schedule.warmup_fraction * static_cast<double>(decay));
  if (step < warmup) return hops;
  if (step >= decay || s_target >= hops) return s_target;

  // Geometric decay from M down to the per-path target.
  const double f = static_cast<double>(step - warmup) /
                   static_cast<double>(decay - warmup);
  const double s = std::exp((1.0 - f) * std::log(static_cast<double>(hops)) +
                            f * std::log(static_cast<double>(s_target)));
  return static_cast<uint32_t>(
      std::clamp(std::round(s), static_cast<double>(s_target),
                 static_cast<double>(hops)));
}

std::vector<PathSample> sample_batch(
    std::span<const GeodesicRealization> realizations, uint32_t batch_pairs,
    uint32_t step, uint64_t seed, bool with_moments,
    const DissimilarityMatrix* time_matrix, const DissimilarityMatrix* adp_matrix,
    const DistanceModel* model) {
  if (realizations.empty())
    throw std::invalid_argument("sample_batch: need at least one realization");
  const GeodesicRealization& real = realizations[step % realizations.size()];
  const uint32_t L = real.n;
  if (L < 2) throw std::invalid_argument("sample_batch: need at least two points");
  if (with_moments && (!time_matrix || !adp_matrix || !model))
    throw std::invalid_argument("sample_batch: moments need matrices and model");

  // Pair draws come from one sequential stream keyed by (seed, step).
  Rng rng(seed, 0x626174636873ull, step);
  std::vector<PathSample> batch(batch_pairs);
  for (uint32_t b = 0; b < batch_pairs; ++b) {
    const uint32_t i = static_cast<uint32_t>(rng.below(L));
    uint32_t j = static_cast<uint32_t>(rng.below(L - 1));
    if (j >= i) ++j;
    batch[b].q = {i, j};
  }

#pragma omp parallel for schedule(dynamic, 64)
  for (int64_t b = 0; b < static_cast<int64_t>(batch_pairs); ++b) {
    PathSample& p = batch[b];
    const uint32_t i = p.q.front(), j = p.q.back();
    p.q = reconstruct_path(real, i, j);
    p.delta_geo = real.dist_at(i, j);
    if (with_moments) {
      const PathMoments m =
          path_moments(p.q, real.graph, *time_matrix, *adp_matrix, *model);
      p.mu_geo = m.mu_geo;
      p.sigma_geo = m.sigma_geo;
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Optimizer loop

namespace {

struct Adam {
  std::vector<double> m, v;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  uint64_t t = 0;

  explicit Adam(size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t p = 0; p < params.size(); ++p) {
      m[p] = beta1 * m[p] + (1.0 - beta1) * grad[p];
      v[p] = beta2 * v[p] + (1.0 - beta2) * grad[p] * grad[p];
      params[p] -= lr * (m[p] / c1) / (std::sqrt(v[p] / c2) + eps);
    }
  }
};

}  // namespace

TrainReport train(const Dataset& ds, const TrainArtifacts& artifacts,
                  ChartModel& model, const TrainConfig& config) {
  config.validate();
  if (ds.size() < 3) throw std::invalid_argument("train: L >= 3 required");
  if (artifacts.realizations.empty())
    throw std::invalid_argument("train: need at least one geodesic realization");
  for (const GeodesicRealization* r : artifacts.realizations)
    if (!r || r->n != ds.size())
      throw std::invalid_argument("train: realization size does not match dataset");

  const bool with_moments = config.loss == LossKind::geo_unc;
  const auto& reals = artifacts.realizations;

  FeatureMatrix features;
  if (model.mode() == ChartMode::parametric) {
    features = feature_map_all(ds);
    if (features.dim != model.input_dim())
      throw std::invalid_argument("train: model input dim does not match dataset features");
  } else if (model.num_points() != ds.size()) {
    throw std::invalid_argument("train: free embedding size does not match dataset");
  }

  const auto t_start = std::chrono::steady_clock::now();
  TrainReport report;
  report.loss_trace.reserve(config.steps);
  Adam adam(model.params().size());

  std::vector<Vec2> zgrad;
  ChartModel::Cache cache;
  for (uint32_t step = 0; step < config.steps; ++step) {
    const double lr =
        config.learning_rate *
        std::pow(0.5, static_cast<double>((3ull * step) / config.steps));

    auto z = model.forward_all(features, cache);
    zgrad.assign(z.size(), Vec2{});

    const GeodesicRealization& real = *reals[step % reals.size()];
    auto batch = sample_batch({&real, 1}, config.batch_pairs, step, config.seed,
                              with_moments, artifacts.time_matrix,
                              artifacts.adp_matrix, &artifacts.model);
    for (PathSample& p : batch)
      p.s = schedule_subsample(step, static_cast<uint32_t>(p.q.size() - 1),
                               p.delta_geo, config.subsample, config.steps);

    double dissim = 0.0;
    switch (config.loss) {
      case LossKind::siam:
        dissim = loss_siam(z, batch, config.beta, &zgrad);
        break;
      case LossKind::geo:
        dissim = loss_geo(z, batch, config.beta, &zgrad);
        break;
      case LossKind::geo_unc:
        dissim = loss_geo_unc(z, batch, &zgrad);
        break;
    }

    double acc = 0.0;
    if (config.use_acc) {
      std::vector<Vec2> acc_grad(z.size(), Vec2{});
      acc = loss_acc(z, ds.timestamps, ds.trajectory_breaks, config.mu_acc,
                     config.sigma_acc, &acc_grad);
      for (size_t l = 0; l < z.size(); ++l)
        zgrad[l] += acc_grad[l] * config.acc_weight;
    }

    const double total = dissim + config.acc_weight * acc;
    report.loss_trace.push_back(total);
    report.dissim_trace.push_back(dissim);
    report.acc_trace.push_back(acc);
    if (!std::isfinite(total)) {
      std::fprintf(stderr, "train: non-finite loss at step %u, aborting\n", step);
      report.diverged = true;
      break;
    }

    auto grad = model.backward(features, cache, zgrad);
    adam.step(model.params(), grad, lr);
  }

  report.final_loss = report.loss_trace.empty() ? 0.0 : report.loss_trace.back();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return report;
}

void save_trace(const TrainReport& report, const std::filesystem::path& file) {
  std::string out = "step,loss,loss_dissim,loss_acc\n";
  char line[128];
  for (size_t s = 0; s < report.loss_trace.size(); ++s) {
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g,%.17g\n", s,
                  report.loss_trace[s], report.dissim_trace[s],
                  report.acc_trace[s]);
    out += line;
  }
  ioutil::write_text(file, out);
}

}  // namespace chartlib
