#include "chartlib/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "chartlib/io_util.hpp"

namespace chartlib {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

PipelineConfig default_config() {
  PipelineConfig cfg;
  cfg.scene = default_scene(500, cfg.seed);
  cfg.model.mean_speed = cfg.scene.mean_speed;
  return cfg;
}

namespace {

std::vector<Vec2> parse_points(const json& j) {
  std::vector<Vec2> out;
  for (const auto& p : j) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return out;
}

json points_to_json(const std::vector<Vec2>& pts) {
  json out = json::array();
  for (Vec2 p : pts) out.push_back({p.x, p.y});
  return out;
}

template <typename T>
void maybe(const json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

void parse_geometry(const json& j, ArrayGeometry& g) {
  maybe(j, "B", g.num_arrays);
  maybe(j, "M_row", g.rows);
  maybe(j, "M_col", g.cols);
  maybe(j, "T", g.taps);
  maybe(j, "sample_rate", g.sample_rate);
  maybe(j, "carrier_wavelength", g.carrier_wavelength);
  maybe(j, "antenna_spacing", g.antenna_spacing);
  if (j.contains("array_positions")) g.array_positions = parse_points(j.at("array_positions"));
  if (j.contains("array_orientations"))
    g.array_orientations = j.at("array_orientations").get<std::vector<double>>();
}

void parse_scene(const json& j, SceneConfig& s) {
  if (j.contains("polygon")) s.polygon = parse_points(j.at("polygon"));
  if (j.contains("blocker")) s.blocker = parse_points(j.at("blocker"));
  maybe(j, "num_points", s.num_points);
  maybe(j, "mean_speed", s.mean_speed);
  maybe(j, "max_acceleration", s.max_acceleration);
  maybe(j, "sample_interval", s.sample_interval);
  maybe(j, "noise_std", s.noise_std);
  maybe(j, "seed", s.seed);
  if (j.contains("scatterers")) {
    s.scatterers.clear();
    for (const auto& sc : j.at("scatterers"))
      s.scatterers.push_back({{sc.at(0).get<double>(), sc.at(1).get<double>()},
                              sc.at(2).get<double>()});
  }
  if (j.contains("geometry")) parse_geometry(j.at("geometry"), s.geometry);
}

void parse_model(const json& j, DistanceModel& m) {
  maybe(j, "mean_speed", m.mean_speed);
  maybe(j, "time_spread", m.time_spread);
  maybe(j, "adp_scale", m.adp_scale);
  maybe(j, "adp_exponent", m.adp_exponent);
  maybe(j, "adp_spread", m.adp_spread);
  maybe(j, "sigma_min", m.sigma_min);
}

void parse_train(const json& j, TrainConfig& t) {
  if (j.contains("loss")) t.loss = loss_from_name(j.at("loss").get<std::string>());
  maybe(j, "use_acc", t.use_acc);
  maybe(j, "beta", t.beta);
  maybe(j, "mu_acc", t.mu_acc);
  maybe(j, "sigma_acc", t.sigma_acc);
  maybe(j, "acc_weight", t.acc_weight);
  maybe(j, "batch_pairs", t.batch_pairs);
  maybe(j, "steps", t.steps);
  maybe(j, "learning_rate", t.learning_rate);
  maybe(j, "seed", t.seed);
  maybe(j, "free_init_scale", t.free_init_scale);
  if (j.contains("subsample")) {
    const auto& s = j.at("subsample");
    if (s.contains("initial"))
      t.subsample.start_full = s.at("initial").get<std::string>() == "full";
    maybe(s, "target_segment_length", t.subsample.target_segment_length);
    maybe(s, "decay_steps", t.subsample.decay_steps);
    maybe(s, "warmup_fraction", t.subsample.warmup_fraction);
  }
}

}  // namespace

PipelineConfig load_config(const fs::path& file) {
  json j;
  try {
    j = json::parse(ioutil::read_text(file));
  } catch (const json::exception& e) {
    throw std::invalid_argument("config: " + std::string(e.what()));
  }
  PipelineConfig cfg = default_config();
  try {
    maybe(j, "seed", cfg.seed);
    cfg.scene.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    if (j.contains("scene")) parse_scene(j.at("scene"), cfg.scene);
    if (j.contains("distance_model")) parse_model(j.at("distance_model"), cfg.model);
    else cfg.model.mean_speed = cfg.scene.mean_speed;
    if (j.contains("graph")) {
      maybe(j.at("graph"), "k", cfg.k);
      maybe(j.at("graph"), "realizations", cfg.realizations);
    }
    if (j.contains("train")) parse_train(j.at("train"), cfg.train);
    if (j.contains("mode"))
      cfg.mode = j.at("mode").get<std::string>() == "parametric"
                     ? ChartMode::parametric
                     : ChartMode::free_embedding;
    maybe(j, "hidden_layers", cfg.hidden_layers);
    if (j.contains("eval")) maybe(j.at("eval"), "neighborhood", cfg.eval_neighborhood);
    if (j.contains("render")) {
      maybe(j.at("render"), "point_radius", cfg.render.point_radius);
      maybe(j.at("render"), "size_px", cfg.render.size_px);
      maybe(j.at("render"), "colorize_by_position", cfg.render.colorize_by_position);
    }
    maybe(j, "restrict_array", cfg.restrict_array);
    maybe(j, "l_cap", cfg.l_cap);
    maybe(j, "allow_large", cfg.allow_large);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config: " + std::string(e.what()));
  }
  return cfg;
}

void save_config(const PipelineConfig& cfg, const fs::path& file) {
  json j;
  j["seed"] = cfg.seed;
  json scene;
  scene["polygon"] = points_to_json(cfg.scene.polygon);
  scene["blocker"] = points_to_json(cfg.scene.blocker);
  scene["num_points"] = cfg.scene.num_points;
  scene["mean_speed"] = cfg.scene.mean_speed;
  scene["max_acceleration"] = cfg.scene.max_acceleration;
  scene["sample_interval"] = cfg.scene.sample_interval;
  scene["noise_std"] = cfg.scene.noise_std;
  scene["seed"] = cfg.scene.seed;
  json scat = json::array();
  for (const Scatterer& s : cfg.scene.scatterers)
    scat.push_back({s.position.x, s.position.y, s.gain});
  scene["scatterers"] = scat;
  json geom;
  geom["B"] = cfg.scene.geometry.num_arrays;
  geom["M_row"] = cfg.scene.geometry.rows;
  geom["M_col"] = cfg.scene.geometry.cols;
  geom["T"] = cfg.scene.geometry.taps;
  geom["sample_rate"] = cfg.scene.geometry.sample_rate;
  geom["carrier_wavelength"] = cfg.scene.geometry.carrier_wavelength;
  geom["antenna_spacing"] = cfg.scene.geometry.antenna_spacing;
  geom["array_positions"] = points_to_json(cfg.scene.geometry.array_positions);
  geom["array_orientations"] = cfg.scene.geometry.array_orientations;
  scene["geometry"] = geom;
  j["scene"] = scene;
  j["distance_model"] = {
      {"mean_speed", cfg.model.mean_speed},   {"time_spread", cfg.model.time_spread},
      {"adp_scale", cfg.model.adp_scale},     {"adp_exponent", cfg.model.adp_exponent},
      {"adp_spread", cfg.model.adp_spread},   {"sigma_min", cfg.model.sigma_min}};
  j["graph"] = {{"k", cfg.k}, {"realizations", cfg.realizations}};
  j["train"] = {
      {"loss", loss_name(cfg.train.loss)},
      {"use_acc", cfg.train.use_acc},
      {"beta", cfg.train.beta},
      {"mu_acc", cfg.train.mu_acc},
      {"sigma_acc", cfg.train.sigma_acc},
      {"acc_weight", cfg.train.acc_weight},
      {"batch_pairs", cfg.train.batch_pairs},
      {"steps", cfg.train.steps},
      {"learning_rate", cfg.train.learning_rate},
      {"seed", cfg.train.seed},
      {"free_init_scale", cfg.train.free_init_scale},
      {"subsample",
       {{"initial", cfg.train.subsample.start_full ? "full" : "target"},
        {"target_segment_length", cfg.train.subsample.target_segment_length},
        {"decay_steps", cfg.train.subsample.decay_steps},
        {"warmup_fraction", cfg.train.subsample.warmup_fraction}}}};
  j["mode"] = cfg.mode == ChartMode::parametric ? "parametric" : "free";
  j["hidden_layers"] = cfg.hidden_layers;
  j["eval"] = {{"neighborhood", cfg.eval_neighborhood}};
  j["render"] = {{"point_radius", cfg.render.point_radius},
                 {"size_px", cfg.render.size_px},
                 {"colorize_by_position", cfg.render.colorize_by_position}};
  j["restrict_array"] = cfg.restrict_array;
  j["l_cap"] = cfg.l_cap;
  j["allow_large"] = cfg.allow_large;
  ioutil::write_text(file, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Stages

Dataset load_working_dataset(const PipelineConfig& cfg, const fs::path& dir) {
  Dataset ds = load_dataset(dir / "dataset");
  if (cfg.restrict_array > 0) ds = restrict_to_array(ds, cfg.restrict_array);
  if (ds.size() > cfg.l_cap && !cfg.allow_large)
    throw std::invalid_argument(
        "dataset exceeds the desk-scale cap (L = " + std::to_string(ds.size()) +
        " > " + std::to_string(cfg.l_cap) + "); set allow_large to override");
  return ds;
}

void cmd_synth(const PipelineConfig& cfg, const fs::path& dir) {
  Dataset ds = synth_scene(cfg.scene);
  fs::create_directories(dir);
  save_dataset(ds, dir / "dataset", /*overwrite=*/true);
  Bbox box = polygon_bbox(ds.positions);
  std::printf("synth: L=%u  bbox=[%.2f, %.2f] x [%.2f, %.2f]\n", ds.size(),
              box.lo.x, box.hi.x, box.lo.y, box.hi.y);
}

void cmd_dissim(const PipelineConfig& cfg, const fs::path& dir) {
  Dataset ds = load_working_dataset(cfg, dir);
  DissimStats stats;
  DissimilarityMatrix time_m = compute_matrix(ds, Metric::time);
  DissimilarityMatrix adp_m = compute_matrix(ds, Metric::adp, &stats);
  DistanceModel model = calibrate_adp_model(ds, time_m, adp_m, cfg.model);
  DissimilarityMatrix fuse_m = fuse(time_m, adp_m, model);
  save_matrix(time_m, model, dir);
  save_matrix(adp_m, model, dir);
  save_matrix(fuse_m, model, dir);
  std::printf("dissim: L=%u pairs=%zu  calibrated adp_scale=%.4g adp_exponent=%.4g  zero_power_slices=%llu\n",
              ds.size(), time_m.pair_count(), model.adp_scale, model.adp_exponent,
              static_cast<unsigned long long>(stats.zero_power_slices));
}

void cmd_graph(const PipelineConfig& cfg, const fs::path& dir) {
  DistanceModel model;
  DissimilarityMatrix time_m = load_matrix(dir, Metric::time);
  DissimilarityMatrix adp_m = load_matrix(dir, Metric::adp, &model);

  uint32_t comps = 0;
  GeodesicRealization det = deterministic_realization(time_m, adp_m, model, cfg.k, &comps);
  save_realization(det, cfg.k, cfg.seed, model.hash(), dir / "geo-r0");
  std::printf("graph: r=0 (deterministic) components_before_bridging=%u edges=%zu\n",
              comps, det.graph.edge_count());

  for (uint32_t r = 1; r <= cfg.realizations; ++r) {
    GeodesicRealization real =
        sample_realization(time_m, adp_m, model, cfg.k, r, cfg.seed, &comps);
    save_realization(real, cfg.k, cfg.seed, model.hash(), dir / ("geo-r" + std::to_string(r)));
    std::printf("graph: r=%u components_before_bridging=%u edges=%zu\n", r, comps,
                real.graph.edge_count());
  }
}

namespace {

struct LoadedArtifacts {
  DissimilarityMatrix time_m, adp_m;
  DistanceModel model;
  std::vector<GeodesicRealization> bundles;
};

LoadedArtifacts load_artifacts(const PipelineConfig& cfg, const fs::path& dir) {
  LoadedArtifacts a;
  a.time_m = load_matrix(dir, Metric::time);
  a.adp_m = load_matrix(dir, Metric::adp, &a.model);
  if (cfg.train.loss == LossKind::geo_unc) {
    for (uint32_t r = 1; r <= cfg.realizations; ++r)
      a.bundles.push_back(load_realization(dir / ("geo-r" + std::to_string(r))));
    if (a.bundles.empty())
      throw std::invalid_argument("train: loss geo-unc needs sampled realizations (graph stage with R >= 1)");
  } else {
    a.bundles.push_back(load_realization(dir / "geo-r0"));
  }
  return a;
}

ChartModel make_model(const PipelineConfig& cfg, const Dataset& ds, uint64_t seed) {
  if (cfg.mode == ChartMode::parametric)
    return ChartModel::make_parametric(static_cast<uint32_t>(2 * ds.geometry.cir_size()),
                                       cfg.hidden_layers, seed);
  return ChartModel::make_free(ds.size(), cfg.train.free_init_scale, seed);
}

TrainReport run_training(const PipelineConfig& cfg, const Dataset& ds,
                         const LoadedArtifacts& a, ChartModel& model,
                         uint64_t seed) {
  TrainArtifacts art;
  for (const auto& b : a.bundles) art.realizations.push_back(&b);
  art.time_matrix = &a.time_m;
  art.adp_matrix = &a.adp_m;
  art.model = a.model;
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  return train(ds, art, model, tc);
}

}  // namespace

TrainReport cmd_train(const PipelineConfig& cfg, const fs::path& dir) {
  Dataset ds = load_working_dataset(cfg, dir);
  LoadedArtifacts a = load_artifacts(cfg, dir);
  ChartModel model = make_model(cfg, ds, cfg.train.seed);
  TrainReport report = run_training(cfg, ds, a, model, cfg.train.seed);
  model.save(dir);
  save_trace(report, dir / "trace.csv");
  std::printf("train: loss=%s acc=%d steps=%u final_loss=%.6g%s\n",
              loss_name(cfg.train.loss), cfg.train.use_acc ? 1 : 0,
              cfg.train.steps, report.final_loss,
              report.diverged ? "  DIVERGED" : "");
  return report;
}

SeedSummary cmd_train_seeds(const PipelineConfig& cfg, const fs::path& dir,
                            uint32_t num_seeds) {
  Dataset ds = load_working_dataset(cfg, dir);
  if (!ds.has_positions)
    throw std::invalid_argument("train --seeds: ground-truth positions required for the harness");
  LoadedArtifacts a = load_artifacts(cfg, dir);

  SeedSummary summary;
  std::vector<ChartModel> models;
  for (uint32_t s = 0; s < num_seeds; ++s) {
    const uint64_t seed = cfg.train.seed + s;
    ChartModel model = make_model(cfg, ds, seed);
    TrainReport report = run_training(cfg, ds, a, model, seed);

    SeedRun run;
    run.seed = seed;
    run.final_loss = report.final_loss;
    run.diverged = report.diverged;
    if (!report.diverged) {
      auto z = model.forward_all(cfg.mode == ChartMode::parametric
                                     ? feature_map_all(ds)
                                     : FeatureMatrix{});
      const AffineTransform t = optimal_affine(z, ds.positions);
      const ErrorStats es = error_stats(z, ds.positions, t);
      run.mae = es.mae;
      run.cep = es.cep;
    }
    summary.runs.push_back(run);
    models.push_back(std::move(model));
    std::printf("train[seed=%llu]: final_loss=%.6g mae=%.4g%s\n",
                static_cast<unsigned long long>(seed), run.final_loss, run.mae,
                run.diverged ? "  DIVERGED" : "");
  }

  // Discard rule: diverged, or final loss > 2x the median final loss.
  std::vector<double> losses;
  for (const SeedRun& r : summary.runs)
    if (!r.diverged) losses.push_back(r.final_loss);
  if (losses.empty())
    throw std::runtime_error("train --seeds: every run diverged");
  const double median_loss = percentile(losses, 0.5);
  std::vector<double> maes, ceps;
  for (SeedRun& r : summary.runs) {
    r.kept = !r.diverged && r.final_loss <= 2.0 * median_loss;
    if (r.kept) {
      maes.push_back(r.mae);
      ceps.push_back(r.cep);
    }
  }
  summary.kept = static_cast<uint32_t>(maes.size());
  summary.median_mae = percentile(maes, 0.5);
  summary.median_cep = percentile(ceps, 0.5);

  // Keep the checkpoint of the kept run closest to the median MAE.
  size_t best = 0;
  double best_gap = 1e300;
  for (size_t r = 0; r < summary.runs.size(); ++r) {
    if (!summary.runs[r].kept) continue;
    const double gap = std::abs(summary.runs[r].mae - summary.median_mae);
    if (gap < best_gap) {
      best_gap = gap;
      best = r;
    }
  }
  models[best].save(dir);

  json j;
  j["median_mae"] = summary.median_mae;
  j["median_cep"] = summary.median_cep;
  j["kept"] = summary.kept;
  j["checkpoint_seed"] = summary.runs[best].seed;
  json runs = json::array();
  for (const SeedRun& r : summary.runs)
    runs.push_back({{"seed", r.seed},
                    {"mae", r.mae},
                    {"cep", r.cep},
                    {"final_loss", r.final_loss},
                    {"diverged", r.diverged},
                    {"kept", r.kept}});
  j["runs"] = runs;
  ioutil::write_text(dir / "seeds.json", j.dump(2) + "\n");
  std::printf("train --seeds: kept=%u/%zu median_mae=%.4g median_cep=%.4g\n",
              summary.kept, summary.runs.size(), summary.median_mae,
              summary.median_cep);
  return summary;
}

EvalReport cmd_eval(const PipelineConfig& cfg, const fs::path& dir) {
  Dataset ds = load_working_dataset(cfg, dir);
  ChartModel model = ChartModel::load(dir);
  auto z = model.forward_all(model.mode() == ChartMode::parametric
                                 ? feature_map_all(ds)
                                 : FeatureMatrix{});

  json j;
  EvalReport report;
  if (ds.has_positions) {
    std::vector<double> errors;
    const AffineTransform t = optimal_affine(z, ds.positions);
    const ErrorStats es = error_stats(z, ds.positions, t, &errors);
    uint32_t K = cfg.eval_neighborhood;
    if (K == 0) K = static_cast<uint32_t>(std::ceil(0.05 * ds.size()));
    K = std::max<uint32_t>(1, std::min(K, (ds.size() - 1) / 2));
    auto [ct, tw] = continuity_trustworthiness(z, ds.positions, K);
    report = {es.mae, es.drms, es.cep, es.r95, ct, tw,
              kruskal_stress(z, ds.positions), K};
    j["mae"] = report.mae;
    j["drms"] = report.drms;
    j["cep"] = report.cep;
    j["r95"] = report.r95;
    j["ct"] = report.ct;
    j["tw"] = report.tw;
    j["ks"] = report.ks;
    j["neighborhood"] = report.neighborhood;
    j["affine"] = {{"A", {t.a00, t.a01, t.a10, t.a11}}, {"b", {t.b.x, t.b.y}}};
    std::string csv = "l,error\n";
    char line[64];
    for (size_t l = 0; l < errors.size(); ++l) {
      std::snprintf(line, sizeof(line), "%zu,%.9g\n", l, errors[l]);
      csv += line;
    }
    ioutil::write_text(dir / "errors.csv", csv);
  } else {
    // No ground truth: rank metrics against the geodesic dissimilarities of
    // the deterministic bundle; position-error metrics are unavailable.
    std::fprintf(stderr, "eval: dataset has no ground-truth positions; "
                         "reporting CT/TW/KS against geodesic dissimilarities only\n");
    GeodesicRealization det = load_realization(dir / "geo-r0");
    if (det.n != ds.size())
      throw std::invalid_argument("eval: geo-r0 size does not match dataset");
    uint32_t K = cfg.eval_neighborhood;
    if (K == 0) K = static_cast<uint32_t>(std::ceil(0.05 * ds.size()));
    K = std::max<uint32_t>(1, std::min(K, (ds.size() - 1) / 2));
    auto chart_d = [&z](uint32_t i, uint32_t jj) { return (z[i] - z[jj]).norm(); };
    auto geo_d = [&det](uint32_t i, uint32_t jj) {
      return static_cast<double>(det.dist_at(i, jj));
    };
    auto [ct, tw] = continuity_trustworthiness(chart_d, geo_d, ds.size(), K);
    report.ct = ct;
    report.tw = tw;
    report.ks = kruskal_stress(chart_d, geo_d, ds.size());
    report.neighborhood = K;
    report.mae = report.drms = report.cep = report.r95 =
        std::numeric_limits<double>::quiet_NaN();
    j["ct"] = report.ct;
    j["tw"] = report.tw;
    j["ks"] = report.ks;
    j["neighborhood"] = report.neighborhood;
    j["reference"] = "geodesic";
    j["error"] = "position metrics unavailable: dataset has no ground truth";
  }
  ioutil::write_text(dir / "eval.json", j.dump(2) + "\n");
  std::printf("eval: mae=%.4g drms=%.4g cep=%.4g r95=%.4g ct=%.4g tw=%.4g ks=%.4g (K=%u)\n",
              report.mae, report.drms, report.cep, report.r95, report.ct,
              report.tw, report.ks, report.neighborhood);
  return report;
}

void cmd_render(const PipelineConfig& cfg, const fs::path& dir) {
  Dataset ds = load_working_dataset(cfg, dir);
  ChartModel model = ChartModel::load(dir);
  auto z = model.forward_all(model.mode() == ChartMode::parametric
                                 ? feature_map_all(ds)
                                 : FeatureMatrix{});
  std::vector<Vec2> aligned = z;
  std::span<const Vec2> colors = z;
  if (ds.has_positions && cfg.render.colorize_by_position) {
    const AffineTransform t = optimal_affine(z, ds.positions);
    for (Vec2& p : aligned) p = t.apply(p);
    colors = ds.positions;
  }
  ioutil::write_text(dir / "chart.svg", render_svg(aligned, colors, cfg.render));
  std::printf("render: %zu points -> %s\n", aligned.size(),
              (dir / "chart.svg").string().c_str());
}

void cmd_ablate(const PipelineConfig& cfg, const fs::path& dir, uint32_t num_seeds) {
  struct Variant {
    LossKind loss;
    bool acc;
  };
  const Variant grid[] = {{LossKind::siam, false}, {LossKind::siam, true},
                          {LossKind::geo, false},  {LossKind::geo, true},
                          {LossKind::geo_unc, false}, {LossKind::geo_unc, true}};
  json rows = json::array();
  std::printf("%-10s %-4s %12s %12s %6s\n", "loss", "acc", "median MAE", "median CEP", "kept");
  for (const Variant& v : grid) {
    PipelineConfig c = cfg;
    c.train.loss = v.loss;
    c.train.use_acc = v.acc;
    SeedSummary s = cmd_train_seeds(c, dir, num_seeds);
    std::printf("%-10s %-4d %12.4g %12.4g %3u/%zu\n", loss_name(v.loss),
                v.acc ? 1 : 0, s.median_mae, s.median_cep, s.kept, s.runs.size());
    rows.push_back({{"loss", loss_name(v.loss)},
                    {"use_acc", v.acc},
                    {"median_mae", s.median_mae},
                    {"median_cep", s.median_cep},
                    {"kept", s.kept},
                    {"seeds", num_seeds}});
  }
  json j;
  j["grid"] = rows;
  j["restrict_array"] = cfg.restrict_array;
  ioutil::write_text(dir / "ablate.json", j.dump(2) + "\n");
}

}  // namespace chartlib
