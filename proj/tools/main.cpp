// Command-line front end: data generation, training, evaluation, ablations,
// and figure emission. Exit codes: 0 success, 2 usage/input error, 3 numeric
// failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rpt/checkpoint.hpp"
#include "rpt/errors.hpp"
#include "rpt/eval.hpp"
#include "rpt/plots.hpp"
#include "rpt/pseudo.hpp"
#include "rpt/synth.hpp"
#include "rpt/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
  rpt::TrainConfig train;
  std::string loss_config = "all";  // "ce" | "ce+boundary" | "all"
  std::string data;
  std::string out;
  int setting = 1;
  int fold = 0;
  int chunks = 3;
  long granularity = 512;
  std::vector<int> test_classes;  // empty = all dataset classes

  json to_json() const {
    json j;
    j["iterations"] = train.iterations;
    j["batch_size"] = train.batch_size;
    j["lr0"] = train.lr0;
    j["lr_decay"] = train.lr_decay;
    j["lr_decay_every"] = train.lr_decay_every;
    j["n_regions"] = train.n_regions;
    j["n_blocks"] = train.n_blocks;
    j["seed"] = train.seed;
    j["iters_per_epoch"] = train.iters_per_epoch;
    j["optimizer"] = train.optimizer;
    j["momentum"] = train.momentum;
    j["width"] = train.width;
    j["image_size"] = train.image_size;
    j["min_fg_pixels"] = train.min_fg_pixels;
    j["use_sf"] = train.use_sf;
    j["loss_config"] = loss_config;
    j["data"] = data;
    j["out"] = out;
    j["setting"] = setting;
    j["fold"] = fold;
    j["chunks"] = chunks;
    j["granularity"] = granularity;
    j["test_classes"] = test_classes;
    return j;
  }

  void apply_json(const json& j) {
    static const std::set<std::string> known = {
        "iterations", "batch_size", "lr0", "lr_decay", "lr_decay_every", "n_regions",
        "n_blocks", "seed", "iters_per_epoch", "optimizer", "momentum", "width",
        "image_size", "min_fg_pixels", "use_sf", "loss_config", "data", "out",
        "setting", "fold", "chunks", "granularity", "test_classes"};
    for (auto& [k, _] : j.items())
      if (!known.count(k)) throw rpt::ParameterError("RunConfig: unknown key '" + k + "'");
    auto get = [&](const char* k, auto& field) {
      if (j.contains(k)) field = j[k].get<std::decay_t<decltype(field)>>();
    };
    get("iterations", train.iterations);
    get("batch_size", train.batch_size);
    get("lr0", train.lr0);
    get("lr_decay", train.lr_decay);
    get("lr_decay_every", train.lr_decay_every);
    get("n_regions", train.n_regions);
    get("n_blocks", train.n_blocks);
    get("seed", train.seed);
    get("iters_per_epoch", train.iters_per_epoch);
    get("optimizer", train.optimizer);
    get("momentum", train.momentum);
    get("width", train.width);
    get("image_size", train.image_size);
    get("min_fg_pixels", train.min_fg_pixels);
    get("use_sf", train.use_sf);
    get("loss_config", loss_config);
    get("data", data);
    get("out", out);
    get("setting", setting);
    get("fold", fold);
    get("chunks", chunks);
    get("granularity", granularity);
    get("test_classes", test_classes);
  }

  void finalize() {
    if (const char* env = std::getenv("RPT_SEED"))
      train.seed = static_cast<uint64_t>(std::strtoull(env, nullptr, 10));
    if (loss_config == "ce")
      train.loss_flags = {false, false};
    else if (loss_config == "ce+boundary")
      train.loss_flags = {false, true};
    else if (loss_config == "all")
      train.loss_flags = {true, true};
    else
      throw rpt::ParameterError("unknown loss_config: " + loss_config);
  }
};

void dump_config(const RunConfig& rc, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "config.json") << rc.to_json().dump(2) << "\n";
}

std::set<int32_t> resolve_test_classes(const RunConfig& rc, const rpt::DatasetPool& pool) {
  if (rc.test_classes.empty()) return pool.all_classes();
  return {rc.test_classes.begin(), rc.test_classes.end()};
}

rpt::FoldSpec fold_for(const RunConfig& rc, const rpt::DatasetPool& pool, int fold_index) {
  auto folds = rpt::make_folds(pool.patients(), rc.setting, resolve_test_classes(rc, pool));
  if (fold_index < 0 || fold_index >= static_cast<int>(folds.size()))
    throw rpt::ParameterError("fold index out of range: " + std::to_string(fold_index));
  return folds[static_cast<size_t>(fold_index)];
}

void add_train_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--iterations", rc.train.iterations, "Training iterations");
  cmd->add_option("--lr0", rc.train.lr0, "Initial learning rate");
  cmd->add_option("--n-blocks", rc.train.n_blocks, "Number of BaT blocks L");
  cmd->add_option("--n-regions", rc.train.n_regions, "Regional prototype count N_f");
  cmd->add_option("--width", rc.train.width, "Encoder channels C");
  cmd->add_option("--image-size", rc.train.image_size, "Working slice resolution");
  cmd->add_option("--min-fg", rc.train.min_fg_pixels, "Min support foreground pixels");
  cmd->add_option("--iters-per-epoch", rc.train.iters_per_epoch, "Iterations per epoch");
  cmd->add_option("--seed", rc.train.seed, "RNG seed");
  cmd->add_option("--setting", rc.setting, "Supervision setting (1 or 2)");
  cmd->add_option("--fold", rc.fold, "Fold index 0..4");
  cmd->add_option("--chunks", rc.chunks, "Support chunk count for evaluation");
  cmd->add_option("--granularity", rc.granularity, "Pseudo-mask cluster granularity");
  cmd->add_option("--loss-config", rc.loss_config, "ce | ce+boundary | all");
  cmd->add_option("--test-classes", rc.test_classes, "Explicit test class ids");
  cmd->add_flag_callback("--no-sf", [&rc] { rc.train.use_sf = false; },
                         "Disable Search & Filter");
}

rpt::RptPipeline load_run(const fs::path& run_dir, RunConfig& rc) {
  fs::path cfg = run_dir / "config.json";
  fs::path ckpt = run_dir / "model.ckpt";
  if (!fs::exists(ckpt)) throw rpt::IoError("missing checkpoint: " + ckpt.string());
  if (fs::exists(cfg)) {
    std::ifstream is(cfg);
    json j = json::parse(is);
    // model geometry only; paths/fold/protocol stay as given on the command line
    for (const char* k : {"data", "out", "fold", "setting", "chunks", "iterations"})
      j.erase(k);
    rc.apply_json(j);
    rc.finalize();
  }
  rpt::RptPipeline model = rpt::make_pipeline(rc.train);
  rpt::load_checkpoint(ckpt, model.params());
  return model;
}

int cmd_make_data(const RunConfig& rc_in, int patients, int classes, int dim,
                  double lesion_prob, double intensity_shift, double contour_jitter) {
  RunConfig rc = rc_in;
  if (patients < 1) throw rpt::ParameterError("--patients must be >= 1");
  rpt::SynthParams sp;
  sp.dim_d = sp.dim_h = sp.dim_w = dim;
  sp.num_classes = classes;
  sp.lesion_prob = lesion_prob;
  sp.intensity_shift = intensity_shift;
  sp.contour_jitter = contour_jitter;
  sp.validate();

  fs::path root = rc.out;
  fs::create_directories(root);
  json manifest;
  manifest["classes"] = json::array();
  for (int k = 1; k <= classes; ++k) manifest["classes"].push_back(k);
  manifest["seed"] = rc.train.seed;
  manifest["params"] = {{"dim", dim},
                        {"lesion_prob", lesion_prob},
                        {"intensity_shift", intensity_shift},
                        {"contour_jitter", contour_jitter},
                        {"granularity", rc.granularity}};
  json plist = json::array();
  for (int p = 0; p < patients; ++p) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%03d", p);
    std::string pid = buf;
    fs::path dir = root / pid;
    fs::create_directories(dir);
    rpt::VolumeScan v =
        rpt::generate_synthetic_volume(rc.train.seed * 10007 + static_cast<uint64_t>(p), sp);
    v.patient_id = pid;
    rpt::write_rfv(dir / "volume.rfv", v);
    rpt::PseudoMaskSet pm = rpt::cluster_pseudo_masks(v, rc.granularity);
    rpt::write_pseudo_rfv(dir / "pseudo.rfv", pm);
    plist.push_back(pid);
  }
  manifest["patients"] = plist;
  std::ofstream(root / "manifest.json") << manifest.dump(2) << "\n";
  dump_config(rc, root);
  std::cout << "wrote " << patients << " patients to " << root.string() << "\n";
  return 0;
}

int cmd_train(RunConfig rc) {
  if (!fs::exists(fs::path(rc.data) / "manifest.json"))
    throw rpt::IoError("dataset manifest not found under " + rc.data);
  rpt::DatasetPool pool = rpt::DatasetPool::load(rc.data, rc.granularity);
  rpt::FoldSpec fold = fold_for(rc, pool, rc.fold);
  dump_config(rc, rc.out);
  rpt::TrainResult res = rpt::train(pool, fold, rc.train, rc.out);
  std::cout << "final loss " << res.rows.back().total << "\n"
            << "checkpoint " << res.checkpoint.string() << "\n";
  return 0;
}

int cmd_eval(RunConfig rc, const std::string& run_dir, bool all_folds) {
  rpt::RptPipeline model = load_run(run_dir, rc);
  rpt::DatasetPool pool = rpt::DatasetPool::load(rc.data, rc.granularity);
  rpt::EvalConfig ec;
  ec.chunks = rc.chunks;
  ec.image_size = rc.train.image_size;
  fs::path out = rc.out.empty() ? fs::path(run_dir) : fs::path(rc.out);
  dump_config(rc, out);
  std::vector<double> means;
  std::vector<int> fold_ids;
  if (all_folds)
    for (int f = 0; f < 5; ++f) fold_ids.push_back(f);
  else
    fold_ids.push_back(rc.fold);
  for (int f : fold_ids) {
    rpt::EvalReport rep = rpt::evaluate(model, pool, fold_for(rc, pool, f), ec);
    rep.write(out, "eval_fold" + std::to_string(f));
    means.push_back(rep.mean);
  }
  double mean = rpt::grand_mean(means);
  if (all_folds) {
    json agg;
    agg["fold_means"] = means;
    agg["grand_mean"] = mean;
    std::ofstream(out / "eval_all_folds.json") << agg.dump(2) << "\n";
  }
  std::cout.precision(2);
  std::cout << "mean Dice " << std::fixed << mean << "\n";
  return 0;
}

int cmd_ablate(RunConfig rc, const std::vector<int>& blocks, bool losses) {
  if (blocks.empty() && !losses)
    throw rpt::ParameterError("ablate: provide --blocks <list> and/or --losses");
  rpt::DatasetPool pool = rpt::DatasetPool::load(rc.data, rc.granularity);
  rpt::FoldSpec fold = fold_for(rc, pool, rc.fold);
  fs::path out = rc.out;
  dump_config(rc, out);
  if (!blocks.empty()) {
    auto rows = rpt::ablate_blocks(pool, fold, rc.train, blocks, out / "work");
    std::ofstream os(out / "blocks_ablation.csv");
    os << "n_blocks,mean_dice\n";
    for (const auto& r : rows) os << r.n_blocks << ',' << r.mean_dice << '\n';
    std::cout << "blocks ablation: " << rows.size() << " rows\n";
  }
  if (losses) {
    auto rows = rpt::ablate_losses(pool, fold, rc.train, out / "work");
    std::ofstream os(out / "losses_ablation.csv");
    os << "config,mean_dice\n";
    for (const auto& r : rows) os << r.config << ',' << r.mean_dice << '\n';
    std::cout << "losses ablation: " << rows.size() << " rows\n";
  }
  return 0;
}

std::vector<rpt::LossRow> read_loss_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw rpt::IoError("missing loss log: " + path.string());
  std::vector<rpt::LossRow> rows;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    rpt::LossRow r;
    char c;
    ls >> r.iter >> c >> r.ce >> c >> r.dice >> c >> r.boundary >> c >> r.eta >> c >>
        r.total >> c >> r.lr;
    rows.push_back(r);
  }
  return rows;
}

int cmd_plot(RunConfig rc, const std::string& run_dir) {
  fs::path run = run_dir;
  fs::path out = rc.out.empty() ? run : fs::path(rc.out);
  fs::create_directories(out);
  int emitted = 0;
  auto rows = read_loss_csv(run / "loss_log.csv");
  rpt::plot_loss_curves(rows, out / "loss_curves.png");
  ++emitted;
  if (fs::exists(run / "blocks_ablation.csv")) {
    std::ifstream is(run / "blocks_ablation.csv");
    std::string line;
    std::getline(is, line);
    std::vector<rpt::BlockAblationRow> brs;
    while (std::getline(is, line)) {
      rpt::BlockAblationRow b;
      char c;
      std::istringstream ls(line);
      ls >> b.n_blocks >> c >> b.mean_dice;
      brs.push_back(b);
    }
    if (!brs.empty()) {
      rpt::plot_block_ablation(brs, out / "dice_vs_blocks.png");
      ++emitted;
    }
  }
  // qualitative panels from evaluation episodes
  if (!rc.data.empty() && fs::exists(run / "model.ckpt")) {
    rpt::RptPipeline model = load_run(run, rc);
    rpt::DatasetPool pool = rpt::DatasetPool::load(rc.data, rc.granularity);
    rpt::FoldSpec fold = fold_for(rc, pool, rc.fold);
    rpt::SamplerConfig sc;
    sc.image_size = rc.train.image_size;
    sc.min_fg_pixels = rc.train.min_fg_pixels;
    rpt::EpisodeSampler sampler(pool, fold, rc.train.seed, rpt::SampleMode::kEval, sc);
    rpt::NoGradGuard g;
    for (long i = 0; i < 3; ++i) {
      rpt::Episode ep = sampler.draw(i);
      auto pred = model.run_episode(ep, 1);
      Eigen::MatrixXd soft(ep.query_image.rows(), ep.query_image.cols());
      const auto& v = pred.pred_full.value();
      for (long y = 0; y < soft.rows(); ++y)
        for (long x = 0; x < soft.cols(); ++x) soft(y, x) = v[y * soft.cols() + x];
      rpt::plot_triptych(ep, soft, out / ("triptych_" + std::to_string(i) + ".png"));
      ++emitted;
    }
  }
  std::cout << "emitted " << emitted << " figure files to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region-enhanced prototypical transformer for few-shot segmentation"};
  app.require_subcommand(1);

  RunConfig rc;
  rc.train.iterations = 2000;  // desk-scale default; --iterations 30000 restores full scale
  std::string config_file;
  app.add_option("--config", config_file, "RunConfig JSON file");

  auto* mk = app.add_subcommand("make-data", "Generate a synthetic RFV dataset");
  int patients = 10, classes = 2, dim = 32;
  double lesion_prob = 0.0, intensity_shift = 0.1, contour_jitter = 0.2;
  mk->add_option("--out", rc.out, "Dataset root directory")->required();
  mk->add_option("--patients", patients, "Number of patients");
  mk->add_option("--classes", classes, "Number of organ classes");
  mk->add_option("--dim", dim, "Volume edge length (>=16)");
  mk->add_option("--seed", rc.train.seed, "Generator seed");
  mk->add_option("--lesion-prob", lesion_prob, "Per-organ lesion probability");
  mk->add_option("--intensity-shift", intensity_shift, "Per-patient intensity shift stddev");
  mk->add_option("--contour-jitter", contour_jitter, "Contour noise in [0,0.45]");
  mk->add_option("--granularity", rc.granularity, "Pseudo-mask granularity");

  auto* tr = app.add_subcommand("train", "Train on one fold");
  tr->add_option("--data", rc.data, "Dataset root")->required();
  tr->add_option("--out", rc.out, "Output directory")->required();
  add_train_flags(tr, rc);

  auto* ev = app.add_subcommand("eval", "Evaluate a trained run");
  std::string run_dir, folds_arg;
  ev->add_option("--data", rc.data, "Dataset root")->required();
  ev->add_option("--run", run_dir, "Training output directory (config + checkpoint)")
      ->required();
  ev->add_option("--out", rc.out, "Report output directory");
  ev->add_option("--folds", folds_arg, "Fold index or 'all'");
  ev->add_option("--chunks", rc.chunks, "Support chunk count");

  auto* ab = app.add_subcommand("ablate", "BaT-depth / loss-term ablations");
  std::string blocks_arg;
  bool losses_flag = false;
  ab->add_option("--data", rc.data, "Dataset root")->required();
  ab->add_option("--out", rc.out, "Output directory")->required();
  ab->add_option("--blocks", blocks_arg, "Comma-separated L values, e.g. 1,2,3,4,5");
  ab->add_flag("--losses", losses_flag, "Run the three-row loss ablation");
  add_train_flags(ab, rc);

  auto* pl = app.add_subcommand("plot", "Render figures for a finished run");
  pl->add_option("--run", run_dir, "Training output directory")->required();
  pl->add_option("--data", rc.data, "Dataset root (for qualitative panels)");
  pl->add_option("--out", rc.out, "Figure output directory");
  pl->add_option("--fold", rc.fold, "Fold used for qualitative panels");
  pl->add_option("--granularity", rc.granularity, "Pseudo-mask granularity");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc_code = app.exit(e);
    return rc_code == 0 ? 0 : 2;  // usage errors map to exit code 2
  }

  try {
    if (!config_file.empty()) {
      std::ifstream is(config_file);
      if (!is) throw rpt::IoError("cannot open config: " + config_file);
      rc.apply_json(json::parse(is));
    }
    rc.finalize();
    if (mk->parsed())
      return cmd_make_data(rc, patients, classes, dim, lesion_prob, intensity_shift,
                           contour_jitter);
    if (tr->parsed()) return cmd_train(rc);
    if (ev->parsed()) {
      bool all = folds_arg == "all";
      if (!all && !folds_arg.empty()) rc.fold = std::stoi(folds_arg);
      return cmd_eval(rc, run_dir, all);
    }
    if (ab->parsed()) {
      std::vector<int> blocks;
      if (!blocks_arg.empty()) {
        std::istringstream ls(blocks_arg);
        std::string tok;
        while (std::getline(ls, tok, ',')) blocks.push_back(std::stoi(tok));
      }
      return cmd_ablate(rc, blocks, losses_flag);
    }
    if (pl->parsed()) return cmd_plot(rc, run_dir);
  } catch (const rpt::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
