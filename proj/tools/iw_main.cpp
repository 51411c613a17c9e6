// Command-line front end: dataset synthesis, training, ablation grids,
// evaluation, statistics, mesh export, and the gradient self-check.

#include <CLI11.hpp>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <thread>

#include "iw/errors.hpp"
#include "iw/gradcheck.hpp"
#include "iw/metrics.hpp"
#include "iw/synth.hpp"
#include "iw/transnet.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitGradcheck = 5;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::uint64_t seed = 0;
  int count = 0;
  std::string out;
  double itw_fraction = 0.0;
  double itw_single_prob = 0.8;
};

int cmd_synth(const SynthArgs& a) {
  iw::synth::SynthConfig cfg;
  cfg.itw_fraction = a.itw_fraction;
  cfg.itw_single_hand_prob = a.itw_single_prob;
  const auto scenes = iw::synth::generate_dataset(a.seed, a.count, cfg);
  iw::synth::write_dataset(scenes, a.out);

  int interacting = 0;
  for (const auto& s : scenes) interacting += s.interacting ? 1 : 0;
  const double frac =
      scenes.empty() ? 0.0 : static_cast<double>(interacting) / scenes.size();
  std::cout << "scenes=" << scenes.size() << " interacting_fraction=" << fmt(frac)
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-transnet
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::string out_override;
  std::int64_t seed_override = -1;
  int epochs_override = -1;
};

iw::cli::RunConfig resolve_run_config(const TrainArgs& a) {
  const iw::cli::IniFile ini = iw::cli::IniFile::load(a.config_path);
  iw::cli::RunConfig rc = iw::cli::RunConfig::from_ini(ini);
  if (!a.out_override.empty()) rc.out_dir = a.out_override;
  if (a.seed_override >= 0) rc.seed = static_cast<std::uint64_t>(a.seed_override);
  if (a.epochs_override > 0) rc.epochs = a.epochs_override;
  if (rc.train_path.empty() || rc.heldout_path.empty())
    throw iw::ConfigError("config: data.train and data.heldout are required");
  if (rc.out_dir.empty()) throw iw::ConfigError("config: out.dir is required");
  return rc;
}

struct CellResult {
  iw::cli::RunConfig rc;
  double mrrpe = 0;
  double baseline = 0;
};

CellResult run_training(const iw::cli::RunConfig& rc,
                        std::span<const iw::synth::SceneRecord> train_scenes,
                        std::span<const iw::synth::SceneRecord> heldout) {
  fs::create_directories(rc.out_dir);
  rc.to_ini().save(fs::path(rc.out_dir) / "config.resolved.ini");

  const fs::path csv = fs::path(rc.out_dir) / "metrics.csv";
  {
    std::ofstream os(csv, std::ios::binary | std::ios::trunc);
    os << "epoch,split,mrrpe_mm,loss\n";
  }

  iw::transnet::TransNet net(rc.model, rc.seed);
  iw::transnet::TrainOptions opts;
  opts.epochs = rc.epochs;
  opts.batch_size = rc.batch;
  opts.adam = rc.adam;
  opts.seed = rc.seed;
  opts.itw_g_noise_sigma = rc.itw_g_noise;
  opts.metrics_csv = csv.string();

  const auto result = iw::transnet::train(net, train_scenes, heldout, opts);
  iw::nn::save_checkpoint(net.params(), fs::path(rc.out_dir) / "model.iwck");

  CellResult cell;
  cell.rc = rc;
  cell.mrrpe = result.final_heldout_mrrpe;
  cell.baseline = iw::transnet::predict_zero_baseline_mm(heldout);
  return cell;
}

int cmd_train(const TrainArgs& a) {
  const iw::cli::RunConfig rc = resolve_run_config(a);
  const auto train_scenes = iw::synth::read_dataset(rc.train_path);
  const auto heldout = iw::synth::read_dataset(rc.heldout_path);
  const CellResult cell = run_training(rc, train_scenes, heldout);
  std::cout << "final_heldout_mrrpe_mm=" << fmt(cell.mrrpe)
            << " predict_zero_baseline_mm=" << fmt(cell.baseline) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

int cmd_ablate(const std::string& grid_path, const std::string& out_override) {
  const iw::cli::IniFile ini = iw::cli::IniFile::load(grid_path);
  iw::cli::RunConfig base = iw::cli::RunConfig::from_ini(ini);
  if (!out_override.empty()) base.out_dir = out_override;
  if (base.train_path.empty() || base.heldout_path.empty() ||
      base.out_dir.empty())
    throw iw::ConfigError("grid config: data.train, data.heldout, out.dir");

  const auto reprs = iw::cli::split_list(
      ini.get("grid.input_repr", iw::transnet::input_repr_name(base.model.input_repr)));
  const auto heads = iw::cli::split_list(
      ini.get("grid.head", iw::transnet::head_name(base.model.head)));
  const auto weaks = iw::cli::split_list(
      ini.get("grid.weak_supervision", base.model.weak_supervision ? "1" : "0"));
  const auto seeds =
      iw::cli::split_list(ini.get("grid.seeds", std::to_string(base.seed)));

  std::vector<iw::cli::RunConfig> cells;
  for (const auto& r : reprs)
    for (const auto& h : heads)
      for (const auto& w : weaks)
        for (const auto& s : seeds) {
          iw::cli::RunConfig rc = base;
          rc.model.input_repr = iw::transnet::input_repr_from_name(r);
          rc.model.head = iw::transnet::head_from_name(h);
          rc.model.weak_supervision = w != "0";
          rc.seed = static_cast<std::uint64_t>(std::stoull(s));
          rc.out_dir = (fs::path(base.out_dir) / "cells" /
                        (r + "_" + h + "_w" + (w != "0" ? "1" : "0") + "_s" + s))
                           .string();
          cells.push_back(std::move(rc));
        }

  const auto train_scenes = iw::synth::read_dataset(base.train_path);
  const auto heldout = iw::synth::read_dataset(base.heldout_path);

  int threads = 1;
  if (const char* env = std::getenv("IW_THREADS"))
    threads = std::max(1, std::atoi(env));
  threads = std::min<int>(threads, static_cast<int>(cells.size()));

  std::vector<CellResult> results(cells.size());
  std::vector<std::string> errors(cells.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        results[i] = run_training(cells[i], train_scenes, heldout);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (size_t i = 0; i < cells.size(); ++i)
    if (!errors[i].empty())
      throw iw::Error("ablate cell " + cells[i].out_dir + ": " + errors[i]);

  fs::create_directories(base.out_dir);
  const fs::path cmp = fs::path(base.out_dir) / "comparison.csv";
  std::ofstream os(cmp, std::ios::binary | std::ios::trunc);
  os << "input_repr,head,weak_supervision,seed,heldout_mrrpe_mm,predict_zero_mm\n";
  for (const auto& r : results) {
    os << iw::transnet::input_repr_name(r.rc.model.input_repr) << ','
       << iw::transnet::head_name(r.rc.model.head) << ','
       << (r.rc.model.weak_supervision ? 1 : 0) << ',' << r.rc.seed << ','
       << fmt(r.mrrpe) << ',' << fmt(r.baseline) << '\n';
  }
  os.close();

  std::cout << "cells=" << results.size() << " comparison=" << cmp.string()
            << "\n";
  for (const auto& r : results)
    std::cout << iw::transnet::input_repr_name(r.rc.model.input_repr) << " "
              << iw::transnet::head_name(r.rc.model.head) << " weak="
              << (r.rc.model.weak_supervision ? 1 : 0) << " seed=" << r.rc.seed
              << " mrrpe_mm=" << fmt(r.mrrpe) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string dataset;
  std::string checkpoint;
  std::string config;
  bool oracle = false;
  std::string domain;  // optional render override for image inputs
  std::string csv;
};

int cmd_eval(const EvalArgs& a) {
  const auto scenes = iw::synth::read_dataset(a.dataset);

  std::optional<iw::transnet::TransNet> net;
  if (!a.oracle) {
    if (a.checkpoint.empty() || a.config.empty())
      throw iw::ConfigError(
          "eval: either --oracle or both --checkpoint and --config");
    const iw::cli::RunConfig rc =
        iw::cli::RunConfig::from_ini(iw::cli::IniFile::load(a.config));
    net.emplace(rc.model, /*seed=*/0);
    auto params = net->params();
    iw::nn::load_checkpoint(params, a.checkpoint);
  }
  std::optional<iw::synth::Domain> domain;
  if (!a.domain.empty()) domain = iw::synth::domain_from_name(a.domain);

  // Single-hand predictions follow the ground-truth path (the single-hand
  // network is exercised elsewhere); the relative translation comes from the
  // checkpoint unless --oracle.
  struct Split {
    const char* name;
    double mrrpe = 0, mpjpe = 0, mpvpe = 0;
    int count = 0, skipped = 0;
  };
  Split splits[3] = {{"all"}, {"single"}, {"interacting"}};

  std::vector<int> usable;
  for (int i = 0; i < static_cast<int>(scenes.size()); ++i)
    if (scenes[static_cast<size_t>(i)].visible_r &&
        scenes[static_cast<size_t>(i)].visible_l)
      usable.push_back(i);

  std::vector<iw::geom::Vec3> t_pred(scenes.size());
  for (int i : usable) t_pred[static_cast<size_t>(i)] = scenes[static_cast<size_t>(i)].t_gt;
  if (net) {
    constexpr int kBatch = 64;
    for (size_t start = 0; start < usable.size(); start += kBatch) {
      const size_t count = std::min<size_t>(kBatch, usable.size() - start);
      std::span<const int> idx(usable.data() + start, count);
      auto batch = iw::transnet::build_batch(scenes, idx, net->config(), domain);
      const auto out = net->forward(batch.input, batch.points);
      for (size_t i = 0; i < count; ++i) {
        const auto v = out.value();
        t_pred[static_cast<size_t>(idx[i])] = {
            v[i * static_cast<size_t>(net->config().output_dim()) + 0],
            v[i * static_cast<size_t>(net->config().output_dim()) + 1],
            v[i * static_cast<size_t>(net->config().output_dim()) + 2]};
      }
    }
  }

  for (int i = 0; i < static_cast<int>(scenes.size()); ++i) {
    const auto& s = scenes[static_cast<size_t>(i)];
    Split* targets[2] = {&splits[0], &splits[s.interacting ? 2 : 1]};
    if (!(s.visible_r && s.visible_l)) {
      for (Split* t : targets) ++t->skipped;
      continue;
    }
    const auto mesh_r = iw::synth::gt_mesh(s, iw::hand::Handedness::right);
    const auto mesh_l = iw::synth::gt_mesh(s, iw::hand::Handedness::left);
    // Ground-truth single-hand path: per-hand errors measure that path.
    const double mpjpe =
        (iw::metrics::mpjpe_mm(mesh_r.joints, mesh_r.joints) +
         iw::metrics::mpjpe_mm(mesh_l.joints, mesh_l.joints)) /
        2.0;
    const double mpvpe =
        (iw::metrics::mpvpe_mm(mesh_r.vertices, mesh_r.joints[0],
                               mesh_r.vertices, mesh_r.joints[0]) +
         iw::metrics::mpvpe_mm(mesh_l.vertices, mesh_l.joints[0],
                               mesh_l.vertices, mesh_l.joints[0])) /
        2.0;
    const double mrrpe = iw::metrics::mrrpe_mm(
        {0, 0, 0}, t_pred[static_cast<size_t>(i)], {0, 0, 0}, s.t_gt);
    for (Split* t : targets) {
      t->mrrpe += mrrpe;
      t->mpjpe += mpjpe;
      t->mpvpe += mpvpe;
      ++t->count;
    }
  }

  std::ofstream csv;
  if (!a.csv.empty()) {
    csv.open(a.csv, std::ios::binary | std::ios::trunc);
    csv << "config,split,metric,value_mm\n";
  }
  const std::string cfg_name = a.oracle ? "oracle" : a.config;
  for (const Split& sp : splits) {
    const double inv = sp.count ? 1.0 / sp.count : 0.0;
    std::cout << "split=" << sp.name << " scenes=" << sp.count
              << " skipped=" << sp.skipped
              << " mrrpe_mm=" << fmt(sp.mrrpe * inv)
              << " mpjpe_mm=" << fmt(sp.mpjpe * inv)
              << " mpvpe_mm=" << fmt(sp.mpvpe * inv) << "\n";
    if (csv.is_open()) {
      csv << cfg_name << ',' << sp.name << ",mrrpe," << fmt(sp.mrrpe * inv) << '\n';
      csv << cfg_name << ',' << sp.name << ",mpjpe," << fmt(sp.mpjpe * inv) << '\n';
      csv << cfg_name << ',' << sp.name << ",mpvpe," << fmt(sp.mpvpe * inv) << '\n';
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// analyze-scales
// ---------------------------------------------------------------------------

int cmd_analyze_scales(const std::string& dataset) {
  const auto scenes = iw::synth::read_dataset(dataset);
  std::vector<iw::synth::SceneRecord> interacting;
  for (const auto& s : scenes)
    if (s.interacting && s.visible_r && s.visible_l) interacting.push_back(s);

  const auto single = iw::metrics::scale_stats(
      interacting, iw::metrics::ScaleMode::single_crop);
  const auto uni = iw::metrics::scale_stats(
      interacting, iw::metrics::ScaleMode::two_hand_union);
  const double taus[] = {0.05, 0.1, 0.3, 0.5};
  const auto inter = iw::metrics::interaction_stats(scenes, taus);

  std::cout << "interacting_scenes=" << interacting.size() << " of "
            << scenes.size() << "\n";
  std::cout << "mode=single_crop mean_w=" << fmt(single.mean_w)
            << " mean_h=" << fmt(single.mean_h) << " hands=" << single.hands
            << "\n";
  std::cout << "mode=two_hand_union mean_w=" << fmt(uni.mean_w)
            << " mean_h=" << fmt(uni.mean_h) << " hands=" << uni.hands << "\n";
  for (size_t i = 0; i < inter.taus.size(); ++i)
    std::cout << "iou_above_" << inter.taus[i] << "=" << fmt(inter.fraction[i])
              << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// export-mesh
// ---------------------------------------------------------------------------

int cmd_export_mesh(const std::string& params_path, const std::string& out) {
  std::ifstream is(params_path);
  if (!is) throw iw::Error("export-mesh: cannot open " + params_path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw iw::ParseError(std::string("export-mesh: bad JSON: ") + e.what());
  }

  iw::hand::HandParams p;
  if (j.contains("handedness"))
    p.handedness = j["handedness"] == "left" ? iw::hand::Handedness::left
                                             : iw::hand::Handedness::right;
  if (j.contains("theta")) {
    const auto& th = j["theta"];
    if (th.size() != static_cast<size_t>(iw::hand::kBones))
      throw iw::ParseError("export-mesh: theta must have 16 rows");
    for (int k = 0; k < iw::hand::kBones; ++k) {
      const auto& row = th[static_cast<size_t>(k)];
      if (row.size() != 3) throw iw::ParseError("export-mesh: theta rows are 3-vectors");
      p.theta[static_cast<size_t>(k)] = {row[0].get<double>(),
                                         row[1].get<double>(),
                                         row[2].get<double>()};
    }
  }
  if (j.contains("beta")) {
    const auto& be = j["beta"];
    if (be.size() != 10) throw iw::ParseError("export-mesh: beta must have 10 entries");
    for (int i = 0; i < 10; ++i) p.beta[static_cast<size_t>(i)] = be[static_cast<size_t>(i)].get<double>();
  }

  const auto mesh = iw::hand::hand_forward(p);
  iw::hand::export_obj(mesh, iw::hand::hand_template(p.handedness).faces, out);
  std::cout << "vertices=" << iw::hand::kVerts
            << " faces=" << iw::hand::hand_template(p.handedness).faces.size()
            << " out=" << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

int cmd_gradcheck(int cases, std::uint64_t seed) {
  const auto report = iw::gradcheck::run_all(seed, cases);
  iw::gradcheck::print(report, std::cout);
  if (!report.all_ok()) {
    std::cout << "gradcheck: FAILED\n";
    return kExitGradcheck;
  }
  std::cout << "gradcheck: ok\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-hand 3D recovery toolkit: synthetic scenes, relative-"
               "translation training, ablations, and evaluation"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--seed", synth_args.seed, "RNG seed")->required();
  synth->add_option("--count", synth_args.count, "Number of scenes")->required();
  synth->add_option("--out", synth_args.out, "Output dataset file")->required();
  synth->add_option("--itw-fraction", synth_args.itw_fraction,
                    "Fraction of scenes in the 2-D-only domains");
  synth->add_option("--itw-single-prob", synth_args.itw_single_prob,
                    "Probability an itw scene keeps one hand out of frame");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train-transnet",
                                   "Train the relative-translation regressor");
  train->add_option("--config", train_args.config_path, "Run config file")
      ->required();
  train->add_option("--out", train_args.out_override, "Override out.dir");
  train->add_option("--seed", train_args.seed_override, "Override train.seed");
  train->add_option("--epochs", train_args.epochs_override,
                    "Override train.epochs");

  std::string grid_path, ablate_out;
  auto* ablate = app.add_subcommand("ablate", "Run a configuration grid");
  ablate->add_option("--grid", grid_path, "Grid config file")->required();
  ablate->add_option("--out", ablate_out, "Override out.dir");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate on a dataset");
  eval->add_option("--dataset", eval_args.dataset, "Dataset file")->required();
  eval->add_option("--checkpoint", eval_args.checkpoint, "Model checkpoint");
  eval->add_option("--config", eval_args.config, "Config the checkpoint was trained with");
  eval->add_flag("--oracle", eval_args.oracle,
                 "Use ground truth as the prediction");
  eval->add_option("--domain", eval_args.domain,
                   "Render domain override (mocap|itw_A|itw_B)");
  eval->add_option("--csv", eval_args.csv, "Write a metric report CSV");

  std::string scales_dataset;
  auto* scales = app.add_subcommand("analyze-scales",
                                    "Normalized hand-scale statistics");
  scales->add_option("--dataset", scales_dataset, "Dataset file")->required();

  std::string mesh_params, mesh_out;
  auto* exportm = app.add_subcommand("export-mesh", "Write a hand mesh OBJ");
  exportm->add_option("--params", mesh_params, "JSON parameter file")->required();
  exportm->add_option("--out", mesh_out, "Output OBJ path")->required();

  int gc_cases = 20;
  std::uint64_t gc_seed = 7;
  auto* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference gradient self-check");
  gradcheck->add_option("--cases", gc_cases, "Randomized cases per operation");
  gradcheck->add_option("--seed", gc_seed, "RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (train->parsed()) return cmd_train(train_args);
    if (ablate->parsed()) return cmd_ablate(grid_path, ablate_out);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (scales->parsed()) return cmd_analyze_scales(scales_dataset);
    if (exportm->parsed()) return cmd_export_mesh(mesh_params, mesh_out);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_cases, gc_seed);
  } catch (const iw::TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const iw::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const iw::InvalidConfig& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const iw::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
