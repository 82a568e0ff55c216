#include "gridfloor/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "gridfloor/error.hpp"
#include "gridfloor/eval.hpp"
#include "gridfloor/floorsim.hpp"
#include "gridfloor/forest.hpp"
#include "gridfloor/nn/network.hpp"
#include "gridfloor/nn/train.hpp"
#include "gridfloor/trajfit.hpp"
#include "json.hpp"

namespace gridfloor::pipeline {

namespace {

const io::Config kCommon = {{"seed", "7"}, {"grid", "23x15"}};

io::Config with_common(io::Config c) {
  c.insert(kCommon.begin(), kCommon.end());
  return c;
}

const std::map<std::string, io::Config>& all_defaults() {
  static const std::map<std::string, io::Config> defaults = {
      {"simulate", with_common({{"n_test_runs", "3"},
                                {"test_waypoints", "6"},
                                {"node_sample_period", "0.4"},
                                {"poll_rtt", "4"},
                                {"poll_jitter_sd", "0.05"},
                                {"buffer_capacity", "32"},
                                {"gt_rate", "200"},
                                {"robot_speed", "1"},
                                {"rssi_ref", "-40"},
                                {"path_loss_exp", "2.2"},
                                {"rssi_noise_sd", "2"},
                                {"dipole_strength", "5"},
                                {"mag_noise_sd", "0.3"}})},
      {"ingest", with_common({{"poll_rtt", "4"}})},
      {"features", with_common({{"train_prefix", "train_"}})},
      {"train-rf", with_common({{"train_prefix", "train_"},
                                {"rf_trees", "50,100,200"},
                                {"rf_depths", "8,16,0"},
                                {"rf_min_leaf", "1"},
                                {"rf_features_per_split", "0"},
                                {"cv_folds", "10"}})},
      {"train-cnn", with_common({{"train_prefix", "train_"},
                                 {"val_run", "train_d3"},
                                 {"epochs", "200"},
                                 {"batch_size", "32"},
                                 {"learning_rate", "0.001"},
                                 {"patience", "10"}})},
      {"predict", with_common({{"model_dir", "models"},
                               {"test_prefix", "test_"},
                               {"train_prefix", "train_"},
                               {"window", "0"},
                               {"max_iterations", "5000"},
                               {"accel_mode", "difference"}})},
      {"trajfit", with_common({{"data_dir", "data"},
                               {"train_prefix", "train_"},
                               {"test_prefix", "test_"},
                               {"window", "0"},
                               {"max_iterations", "5000"},
                               {"accel_mode", "difference"}})},
      {"evaluate", with_common({{"data_dir", "data"}, {"train_prefix", "train_"}, {"test_prefix", "test_"}})},
      {"report", with_common({{"data_dir", "data"}, {"pred_dir", "preds"}, {"test_prefix", "test_"}})},
  };
  return defaults;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto part : io::split(s, ',')) {
    auto t = io::trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

fs::path write_text(const StageContext& ctx, const fs::path& rel, const std::string& text,
                    StageResult& res) {
  io::write_file_atomic(ctx.out / rel, text);
  res.outputs.push_back(rel);
  return ctx.out / rel;
}

std::vector<std::string> subdirs_with(const fs::path& dir, const std::string& file) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::exists(e.path() / file)) out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- simulate ----

StageResult simulate_stage(const StageContext& ctx) {
  StageResult res;
  sim::SimConfig cfg;
  cfg.grid = ctx.grid;
  cfg.node_sample_period = ctx.real("node_sample_period");
  cfg.poll_rtt = ctx.real("poll_rtt");
  cfg.poll_jitter_sd = ctx.real("poll_jitter_sd");
  cfg.buffer_capacity = static_cast<int>(ctx.integer("buffer_capacity"));
  cfg.gt_rate = ctx.real("gt_rate");
  cfg.robot_speed = ctx.real("robot_speed");
  sim::SignalModel model;
  model.rssi_ref = ctx.real("rssi_ref");
  model.path_loss_exp = ctx.real("path_loss_exp");
  model.rssi_noise_sd = ctx.real("rssi_noise_sd");
  model.dipole_strength = ctx.real("dipole_strength");
  model.mag_noise_sd = ctx.real("mag_noise_sd");

  auto plans = sim::plan_training_runs(ctx.grid, cfg.robot_speed);
  const long n_test = ctx.integer("n_test_runs");
  for (long k = 0; k < n_test; ++k) {
    auto p = sim::plan_random_run(ctx.grid, derive_seed(ctx.seed, 1000 + k),
                                  static_cast<int>(ctx.integer("test_waypoints")), cfg.robot_speed);
    p.label = "test_r" + std::to_string(k + 1);
    plans.push_back(std::move(p));
  }
  std::string overflow = "run,payloads,ground_truth,overflow\n";
  for (std::size_t i = 0; i < plans.size(); ++i) {
    cfg.rng_seed = derive_seed(ctx.seed, i);
    const auto log = sim::simulate(cfg, {plans[i]}, model);
    const fs::path dir = plans[i].label;
    write_text(ctx, dir / "payload.jsonl", sim::payload_log_text(log), res);
    write_text(ctx, dir / "groundtruth.jsonl", sim::ground_truth_log_text(log), res);
    nlohmann::ordered_json plan;
    plan["label"] = plans[i].label;
    plan["speed"] = plans[i].speed;
    auto wps = nlohmann::ordered_json::array();
    for (const auto& w : plans[i].waypoints) wps.push_back({w.x, w.y});
    plan["waypoints"] = wps;
    write_text(ctx, dir / "plan.json", plan.dump() + "\n", res);
    overflow += plans[i].label + "," + std::to_string(log.payloads.size()) + "," +
                std::to_string(log.ground_truth.size()) + "," + std::to_string(log.overflow_count) + "\n";
  }
  write_text(ctx, "runs.csv", overflow, res);
  return res;
}

// ---- ingest ----

StageResult ingest_stage(const StageContext& ctx) {
  StageResult res;
  const auto runs = subdirs_with(ctx.in, "payload.jsonl");
  if (runs.empty()) throw InputError("no runs with payload.jsonl under " + ctx.in.string());
  std::string summary = "run,frames,features\n";
  for (const auto& run : runs) {
    const auto payload = io::read_lines(ctx.in / run / "payload.jsonl");
    const auto gt = io::read_lines(ctx.in / run / "groundtruth.jsonl");
    res.inputs.push_back(ctx.in / run / "payload.jsonl");
    res.inputs.push_back(ctx.in / run / "groundtruth.jsonl");
    const auto ds = ingest::build_dataset(ctx.grid, payload, gt, ctx.real("poll_rtt"));
    if (ds.frames.empty()) throw InputError("run " + run + " produced no frames");
    ingest::write_dataset(ds, ctx.out / (run + ".csv"));
    res.outputs.push_back(run + ".csv");
    summary += run + "," + std::to_string(ds.frames.size()) + "," + std::to_string(ds.feature_width()) + "\n";
  }
  write_text(ctx, "frames.csv", summary, res);
  return res;
}

features::FeatureTable concat_selected(const std::vector<RunData>& runs) {
  features::FeatureTable all;
  all.grid = runs.front().ds.grid;
  all.channels = features::kSelectedChannels;
  std::vector<features::FeatureTable> parts;
  Eigen::Index rows = 0;
  for (const auto& r : runs) {
    parts.push_back(features::select_channels(features::from_dataset(r.ds)));
    rows += parts.back().values.rows();
  }
  all.values.resize(rows, static_cast<Eigen::Index>(all.width()));
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    all.values.middleRows(at, p.values.rows()) = p.values;
    at += p.values.rows();
  }
  return all;
}

Eigen::MatrixX2d concat_labels(const std::vector<RunData>& runs) {
  Eigen::Index rows = 0;
  for (const auto& r : runs) rows += static_cast<Eigen::Index>(r.ds.frames.size());
  Eigen::MatrixX2d y(rows, 2);
  Eigen::Index at = 0;
  for (const auto& r : runs) {
    const auto l = features::labels_of(r.ds);
    y.middleRows(at, l.rows()) = l;
    at += l.rows();
  }
  return y;
}

void require_runs(const std::vector<RunData>& runs, const fs::path& dir, const std::string& prefix) {
  if (runs.empty()) throw InputError("no '" + prefix + "*.csv' datasets in " + dir.string());
}

// ---- features ----

StageResult features_stage(const StageContext& ctx) {
  StageResult res;
  const auto prefix = ctx.text("train_prefix");
  const auto runs = load_runs(ctx.in, prefix);
  require_runs(runs, ctx.in, prefix);
  for (const auto& r : runs) res.inputs.push_back(ctx.in / (r.label + ".csv"));
  const auto table = concat_selected(runs);
  features::PrepParams p{features::fit_minmax(table), features::fit_znorm(table)};
  features::write_params(p, ctx.out / "featureprep.json");
  res.outputs.push_back("featureprep.json");
  return res;
}

// ---- train-rf ----

StageResult train_rf_stage(const StageContext& ctx) {
  StageResult res;
  const auto prefix = ctx.text("train_prefix");
  const auto runs = load_runs(ctx.in, prefix);
  require_runs(runs, ctx.in, prefix);
  const auto prep = features::read_params(ctx.out / "featureprep.json");
  res.inputs.push_back(ctx.out / "featureprep.json");

  std::vector<Eigen::MatrixXd> parts;
  Eigen::Index rows = 0;
  for (const auto& r : runs) {
    parts.push_back(forest_features(r.ds, prep.minmax));
    rows += parts.back().rows();
    res.inputs.push_back(ctx.in / (r.label + ".csv"));
  }
  Eigen::MatrixXd X(rows, parts.front().cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    X.middleRows(at, p.rows()) = p;
    at += p.rows();
  }
  const auto Y = concat_labels(runs);

  std::vector<forest::ForestParams> grid;
  for (const auto& trees : split_list(ctx.text("rf_trees"))) {
    for (const auto& depth : split_list(ctx.text("rf_depths"))) {
      forest::ForestParams p;
      p.n_trees = static_cast<int>(io::parse_long(trees));
      p.max_depth = static_cast<int>(io::parse_long(depth));
      p.min_leaf = static_cast<int>(ctx.integer("rf_min_leaf"));
      p.features_per_split = static_cast<int>(ctx.integer("rf_features_per_split"));
      p.seed = ctx.seed;
      grid.push_back(p);
    }
  }
  const auto report = forest::cross_validate(X, Y, grid, static_cast<int>(ctx.integer("cv_folds")));
  std::string cv = "n_trees,max_depth,mean_error";
  for (int k = 0; k < report.n_folds; ++k) cv += ",fold_" + std::to_string(k + 1);
  cv += ",chosen\n";
  for (std::size_t g = 0; g < grid.size(); ++g) {
    cv += std::to_string(grid[g].n_trees) + "," + std::to_string(grid[g].max_depth) + "," +
          io::format_double(report.mean_errors[g]);
    for (double e : report.fold_errors[g]) cv += "," + io::format_double(e);
    cv += g == report.chosen ? ",1\n" : ",0\n";
  }
  write_text(ctx, "cv_report.csv", cv, res);
  const auto f = forest::fit_forest(X, Y, report.best());
  forest::write_forest(f, ctx.out / "forest.json");
  res.outputs.push_back("forest.json");
  return res;
}

// ---- train-cnn ----

nn::LabeledTensors labeled(const RunData& r, const features::ZNormParams& z) {
  nn::LabeledTensors out;
  out.inputs = cnn_inputs(r.ds, z);
  for (const auto& f : r.ds.frames) out.labels.push_back(f.label);
  return out;
}

StageResult train_cnn_stage(const StageContext& ctx) {
  StageResult res;
  const auto prefix = ctx.text("train_prefix");
  const auto runs = load_runs(ctx.in, prefix);
  require_runs(runs, ctx.in, prefix);
  const auto prep = features::read_params(ctx.out / "featureprep.json");
  res.inputs.push_back(ctx.out / "featureprep.json");
  const auto val_label = ctx.text("val_run");
  nn::LabeledTensors train_set, val_set;
  for (const auto& r : runs) {
    res.inputs.push_back(ctx.in / (r.label + ".csv"));
    auto part = labeled(r, prep.znorm);
    auto& dst = (r.label == val_label && runs.size() > 1) ? val_set : train_set;
    std::move(part.inputs.begin(), part.inputs.end(), std::back_inserter(dst.inputs));
    dst.labels.insert(dst.labels.end(), part.labels.begin(), part.labels.end());
  }
  nn::TrainConfig tc;
  tc.learning_rate = ctx.real("learning_rate");
  tc.batch_size = static_cast<int>(ctx.integer("batch_size"));
  tc.max_epochs = static_cast<int>(ctx.integer("epochs"));
  tc.patience = static_cast<int>(ctx.integer("patience"));
  tc.seed = ctx.seed;
  nn::Network net(nn::NetworkSpec::standard(),
                  {ctx.grid.n_strips, ctx.grid.nodes_per_strip, static_cast<int>(features::kSelectedChannels)});
  const auto result = nn::train(net, train_set, val_set, tc);
  net.save(ctx.out / "cnn_weights.bin", ctx.out / "cnn_manifest.json", ctx.seed, "featureprep.json");
  res.outputs.push_back("cnn_weights.bin");
  res.outputs.push_back("cnn_manifest.json");
  std::string hist = "epoch,train_nll,val_nll\n";
  for (const auto& e : result.history) {
    hist += std::to_string(e.epoch) + "," + io::format_double(e.train_nll) + "," + io::format_double(e.val_nll) + "\n";
  }
  write_text(ctx, "cnn_history.csv", hist, res);
  return res;
}

// ---- trajectory fit helpers ----

trajfit::RegParams calibrate_from_runs(const fs::path& data_dir, const std::string& prefix,
                                       trajfit::AccelMode mode, StageResult& res) {
  const auto train_runs = load_runs(data_dir, prefix);
  require_runs(train_runs, data_dir, prefix);
  std::vector<double> speeds, accels;
  for (const auto& r : train_runs) {
    res.inputs.push_back(data_dir / (r.label + ".csv"));
    std::vector<double> x, y, t;
    for (const auto& f : r.ds.frames) {
      x.push_back(f.label.x);
      y.push_back(f.label.y);
      t.push_back(f.t);
    }
    if (x.size() < 3) continue;
    const auto k = trajfit::kinematics(x, y, t, mode);
    speeds.insert(speeds.end(), k.speed.begin(), k.speed.end());
    accels.insert(accels.end(), k.accel.begin(), k.accel.end());
  }
  if (speeds.size() < 2) throw CalibrationError("not enough training frames to calibrate limits");
  const trajfit::RegParams params{trajfit::percentile(speeds, trajfit::kLimitPercentile),
                                  trajfit::percentile(accels, trajfit::kLimitPercentile), mode};
  if (!(params.c_v > 0) || !(params.c_a > 0)) throw CalibrationError("training labels never move");
  return params;
}

void write_regparams(const StageContext& ctx, const trajfit::RegParams& params, StageResult& res) {
  nlohmann::ordered_json pj;
  pj["c_v"] = params.c_v;
  pj["c_a"] = params.c_a;
  pj["accel_mode"] = trajfit::to_string(params.accel);
  write_text(ctx, "regparams.json", pj.dump() + "\n", res);
}

trajfit::FitOptions fit_options(const StageContext& ctx) {
  trajfit::FitOptions opt;
  opt.window = static_cast<int>(ctx.integer("window"));
  opt.max_iterations = static_cast<int>(ctx.integer("max_iterations"));
  return opt;
}

std::vector<trajfit::FrameEstimate> read_estimates(const fs::path& path) {
  const auto table = io::read_csv(path);
  const auto ct = table.column("t"), cx = table.column("x"), cy = table.column("y"),
             csx = table.column("sigma_x"), csy = table.column("sigma_y"), crx = table.column("r_x"),
             cry = table.column("r_y");
  std::vector<trajfit::FrameEstimate> est;
  for (const auto& row : table.rows) {
    est.push_back({row[ct], row[cx], row[cy], row[csx], row[csy], row[crx], row[cry]});
  }
  return est;
}

/// Fits each cnn_<run>.csv, writing rcnn_<run>.csv and a stats table.
void fit_all(const StageContext& ctx, const std::vector<std::pair<std::string, fs::path>>& runs,
             const trajfit::RegParams& params, StageResult& res) {
  const auto opt = fit_options(ctx);
  std::string stats = "run,frames,initial_objective,objective,iterations\n";
  for (const auto& [run, path] : runs) {
    const auto est = read_estimates(path);
    const auto fitted = trajfit::fit(est, params, opt);
    io::CsvTable out{{"t", "x", "y"}, {}};
    for (std::size_t i = 0; i < est.size(); ++i) out.rows.push_back({fitted.t[i], fitted.x[i], fitted.y[i]});
    write_text(ctx, "rcnn_" + run + ".csv", io::csv_to_text(out), res);
    stats += run + "," + std::to_string(est.size()) + "," + io::format_double(fitted.initial_objective) +
             "," + io::format_double(fitted.objective) + "," + std::to_string(fitted.iterations) + "\n";
  }
  write_text(ctx, "trajfit_stats.csv", stats, res);
}

// ---- predict ----

StageResult predict_stage(const StageContext& ctx) {
  StageResult res;
  const fs::path model_dir = ctx.text("model_dir");
  const auto prefix = ctx.text("test_prefix");
  const auto runs = load_runs(ctx.in, prefix);
  require_runs(runs, ctx.in, prefix);
  for (const auto& r : runs) res.inputs.push_back(ctx.in / (r.label + ".csv"));
  const auto prep = features::read_params(model_dir / "featureprep.json");
  res.inputs.push_back(model_dir / "featureprep.json");
  if (ctx.model == "rf") {
    const auto f = forest::read_forest(model_dir / "forest.json");
    res.inputs.push_back(model_dir / "forest.json");
    for (const auto& r : runs) {
      const auto pred = forest::predict_forest(f, forest_features(r.ds, prep.minmax));
      io::CsvTable t{{"t", "x", "y"}, {}};
      for (std::size_t i = 0; i < r.ds.frames.size(); ++i) {
        t.rows.push_back({r.ds.frames[i].t, pred(i, 0), pred(i, 1)});
      }
      write_text(ctx, "rf_" + r.label + ".csv", io::csv_to_text(t), res);
    }
    return res;
  }
  if (ctx.model != "cnn" && ctx.model != "rcnn") throw UsageError("--model must be rf, cnn or rcnn");
  const auto net = nn::Network::load(model_dir / "cnn_manifest.json");
  res.inputs.push_back(model_dir / "cnn_manifest.json");
  std::vector<std::pair<std::string, fs::path>> written;
  for (const auto& r : runs) {
    const auto inputs = cnn_inputs(r.ds, prep.znorm);
    io::CsvTable t{{"t", "x", "y", "sigma_x", "sigma_y", "r_x", "r_y"}, {}};
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto a = net.forward(inputs[i]).activated;
      t.rows.push_back({r.ds.frames[i].t, a[0], a[1], a[2], a[3], a[4], a[5]});
    }
    written.emplace_back(r.label, write_text(ctx, "cnn_" + r.label + ".csv", io::csv_to_text(t), res));
  }
  if (ctx.model == "rcnn") {
    // The regularised model is the network followed by the trajectory fit.
    const auto params = calibrate_from_runs(ctx.in, ctx.text("train_prefix"), trajfit::accel_mode_from(ctx.text("accel_mode")), res);
    write_regparams(ctx, params, res);
    fit_all(ctx, written, params, res);
  }
  return res;
}

// ---- trajfit ----

StageResult trajfit_stage(const StageContext& ctx) {
  StageResult res;
  const auto params = calibrate_from_runs(ctx.text("data_dir"), ctx.text("train_prefix"), trajfit::accel_mode_from(ctx.text("accel_mode")), res);
  write_regparams(ctx, params, res);
  const auto prefix = "cnn_" + ctx.text("test_prefix");
  std::vector<std::pair<std::string, fs::path>> inputs;
  for (const auto& e : fs::directory_iterator(ctx.in)) {
    const auto name = e.path().filename().string();
    if (name.starts_with(prefix) && name.ends_with(".csv")) {
      inputs.emplace_back(e.path().stem().string().substr(4), e.path());
    }
  }
  std::sort(inputs.begin(), inputs.end());
  if (inputs.empty()) throw InputError("no " + prefix + "*.csv predictions in " + ctx.in.string());
  for (const auto& [run, path] : inputs) res.inputs.push_back(path);
  fit_all(ctx, inputs, params, res);
  return res;
}

// ---- evaluate ----

struct ErrorRow {
  std::string run;
  std::size_t frame;
  double t;
  double error;
};

std::string errors_text(const std::vector<ErrorRow>& rows) {
  std::string s = "run,frame,t,error\n";
  for (const auto& r : rows) {
    s += r.run + "," + std::to_string(r.frame) + "," + io::format_double(r.t) + "," +
         io::format_double(r.error) + "\n";
  }
  return s;
}

std::vector<double> read_error_column(const fs::path& path) {
  const auto lines = io::read_lines(path);
  if (lines.empty() || lines[0] != "run,frame,t,error") throw SchemaError(path.string() + ": bad header");
  std::vector<double> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto cells = io::split(lines[i], ',');
    if (cells.size() != 4) throw SchemaError(path.string() + ": bad row " + std::to_string(i + 1));
    out.push_back(io::parse_double(cells[3]));
  }
  return out;
}

const std::vector<std::string> kModels = {"rf", "cnn", "rcnn"};

std::string histogram_text(const eval::ErrorReport& r) {
  std::string s = "bin_lo,bin_hi,count\n";
  for (int b = 0; b < eval::kHistogramBins; ++b) {
    s += io::format_double(r.bin_edges[b]) + "," + io::format_double(r.bin_edges[b + 1]) + "," +
         std::to_string(r.bin_counts[b]) + "\n";
  }
  return s;
}

StageResult evaluate_stage(const StageContext& ctx) {
  StageResult res;
  const fs::path data_dir = ctx.text("data_dir");
  const auto test_runs = load_runs(data_dir, ctx.text("test_prefix"));
  require_runs(test_runs, data_dir, ctx.text("test_prefix"));
  const auto train_runs = load_runs(data_dir, ctx.text("train_prefix"));
  require_runs(train_runs, data_dir, ctx.text("train_prefix"));

  // Constant-centroid baseline from the training labels.
  const auto ytrain = concat_labels(train_runs);
  const Point2 centroid{ytrain.col(0).mean(), ytrain.col(1).mean()};

  std::vector<eval::NamedReport> reports;
  auto record = [&](const std::string& name, const std::vector<ErrorRow>& rows) {
    write_text(ctx, "errors_" + name + ".csv", errors_text(rows), res);
    std::vector<double> e;
    for (const auto& r : rows) e.push_back(r.error);
    reports.push_back({name, eval::summarize(e)});
    write_text(ctx, "histogram_" + name + ".csv", histogram_text(reports.back().report), res);
  };

  for (const auto& model : kModels) {
    bool complete = true;
    std::vector<ErrorRow> rows;
    for (const auto& run : test_runs) {
      const auto path = ctx.in / (model + "_" + run.label + ".csv");
      if (!fs::exists(path)) {
        complete = false;
        break;
      }
      res.inputs.push_back(path);
      const auto t = io::read_csv(path);
      const auto cx = t.column("x"), cy = t.column("y");
      std::vector<Point2> pred, truth;
      for (const auto& row : t.rows) pred.push_back({row[cx], row[cy]});
      for (const auto& f : run.ds.frames) truth.push_back(f.label);
      const auto errs = eval::frame_errors(truth, pred);
      for (std::size_t i = 0; i < errs.size(); ++i) rows.push_back({run.label, i, run.ds.frames[i].t, errs[i]});
    }
    if (complete) record(model, rows);
  }
  if (reports.empty()) throw InputError("no complete prediction sets in " + ctx.in.string());
  std::vector<ErrorRow> base;
  for (const auto& run : test_runs) {
    for (std::size_t i = 0; i < run.ds.frames.size(); ++i) {
      base.push_back({run.label, i, run.ds.frames[i].t, eval::euclid_error(run.ds.frames[i].label, centroid)});
    }
  }
  record("centroid", base);
  write_text(ctx, "summary.csv", eval::comparison_csv(reports), res);
  return res;
}

// ---- report ----

StageResult report_stage(const StageContext& ctx) {
  StageResult res;
  std::vector<eval::NamedReport> reports;
  for (const auto& name : {"rf", "cnn", "rcnn", "centroid"}) {
    const auto path = ctx.in / ("errors_" + std::string(name) + ".csv");
    if (!fs::exists(path)) continue;
    res.inputs.push_back(path);
    reports.push_back({name, eval::summarize(read_error_column(path))});
    write_text(ctx, "histogram_" + std::string(name) + ".csv", histogram_text(reports.back().report), res);
  }
  if (reports.empty()) throw InputError("no errors_*.csv files in " + ctx.in.string());
  write_text(ctx, "comparison.csv", eval::comparison_csv(reports), res);

  const fs::path data_dir = ctx.text("data_dir");
  const fs::path pred_dir = ctx.text("pred_dir");
  for (const auto& run : load_runs(data_dir, ctx.text("test_prefix"))) {
    std::vector<eval::ModelTrack> tracks;
    for (const auto& model : kModels) {
      const auto path = pred_dir / (model + "_" + run.label + ".csv");
      if (!fs::exists(path)) continue;
      const auto t = io::read_csv(path);
      eval::ModelTrack track{model, {}};
      for (const auto& row : t.rows) track.points.push_back({row[t.column("x")], row[t.column("y")]});
      tracks.push_back(std::move(track));
    }
    eval::render_outputs(run.ds, tracks, ctx.out / run.label);
    for (const auto* f : {"trajectory.svg", "heatmap.svg", "comparison.csv"}) {
      res.outputs.push_back(fs::path(run.label) / f);
    }
  }
  return res;
}

}  // namespace

double StageContext::real(const std::string& key) const { return io::parse_double(text(key)); }
long StageContext::integer(const std::string& key) const { return io::parse_long(text(key)); }
const std::string& StageContext::text(const std::string& key) const {
  auto it = config.find(key);
  if (it == config.end()) throw UsageError("stage '" + stage + "' has no setting '" + key + "'");
  return it->second;
}

const io::Config& default_config(const std::string& stage) {
  const auto& d = all_defaults();
  auto it = d.find(stage);
  if (it == d.end()) throw UsageError("unknown subcommand '" + stage + "'");
  return it->second;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"simulate", "ingest",  "features", "train-rf", "train-cnn",
                                                 "predict",  "trajfit", "evaluate", "report"};
  return names;
}

GridSpec parse_grid(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw UsageError("--grid expects <strips>x<nodes>, got '" + text + "'");
  try {
    return GridSpec::scaled(static_cast<int>(io::parse_long(std::string_view(text).substr(0, x))),
                            static_cast<int>(io::parse_long(std::string_view(text).substr(x + 1))));
  } catch (const Error&) {
    throw UsageError("--grid expects <strips>x<nodes>, got '" + text + "'");
  }
}

std::vector<RunData> load_runs(const fs::path& dir, const std::string& prefix) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.starts_with(prefix) && name.ends_with(".csv")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RunData> runs;
  for (const auto& f : files) runs.push_back({f.stem().string(), ingest::read_dataset(f)});
  return runs;
}

Eigen::MatrixXd forest_features(const ingest::FrameDataset& ds, const features::MinMaxParams& mm) {
  const auto table = features::aggregate_neighborhood(
      features::apply_minmax(mm, features::select_channels(features::from_dataset(ds))));
  return table.values;  // row-major to column-major copy
}

std::vector<nn::Tensor> cnn_inputs(const ingest::FrameDataset& ds, const features::ZNormParams& z) {
  const auto table = features::apply_znorm(z, features::select_channels(features::from_dataset(ds)));
  std::vector<nn::Tensor> out;
  out.reserve(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) out.push_back(features::to_grid_tensor(table, r));
  return out;
}

StageResult run_stage(const StageContext& ctx) {
  if (ctx.stage == "simulate") return simulate_stage(ctx);
  if (ctx.stage == "ingest") return ingest_stage(ctx);
  if (ctx.stage == "features") return features_stage(ctx);
  if (ctx.stage == "train-rf") return train_rf_stage(ctx);
  if (ctx.stage == "train-cnn") return train_cnn_stage(ctx);
  if (ctx.stage == "predict") return predict_stage(ctx);
  if (ctx.stage == "trajfit") return trajfit_stage(ctx);
  if (ctx.stage == "evaluate") return evaluate_stage(ctx);
  if (ctx.stage == "report") return report_stage(ctx);
  throw UsageError("unknown subcommand '" + ctx.stage + "'");
}

std::string config_hash(const StageContext& ctx) {
  std::string text = "stage=" + ctx.stage + "\nmodel=" + ctx.model + "\n" + io::config_to_text(ctx.config);
  return io::hex64(io::fnv1a(text));
}

void write_manifest(const StageContext& ctx, const StageResult& result) {
  nlohmann::ordered_json m;
  m["stage"] = ctx.stage;
  m["config_hash"] = config_hash(ctx);
  m["seed"] = ctx.seed;
  m["config"] = ctx.config;
  auto inputs = nlohmann::ordered_json::array();
  for (const auto& p : result.inputs) inputs.push_back(p.string());
  m["inputs"] = inputs;
  auto outputs = nlohmann::ordered_json::array();
  for (const auto& p : result.outputs) {
    outputs.push_back({{"path", p.generic_string()},
                       {"config_hash", m["config_hash"]},
                       {"fnv1a", io::hex64(io::fnv1a(io::read_file(ctx.out / p)))}});
  }
  m["outputs"] = outputs;
  io::write_file_atomic(ctx.out / ("manifest_" + ctx.stage + ".json"), m.dump(2) + "\n");
}

bool verify_manifest(const fs::path& manifest_path, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(io::read_file(manifest_path));
  } catch (const std::exception& e) {
    return fail(e.what());
  }
  const auto base = manifest_path.parent_path();
  const auto hash = m.at("config_hash").get<std::string>();
  for (const auto& o : m.at("outputs")) {
    const fs::path p = base / o.at("path").get<std::string>();
    if (!fs::exists(p)) return fail("missing " + p.string());
    if (o.at("config_hash").get<std::string>() != hash) return fail("config hash mismatch for " + p.string());
    if (io::hex64(io::fnv1a(io::read_file(p))) != o.at("fnv1a").get<std::string>()) {
      return fail("content changed: " + p.string());
    }
  }
  return true;
}

}  // namespace gridfloor::pipeline
