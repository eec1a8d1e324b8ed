#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <variant>

#include "vseg/checkpoint.hpp"
#include "vseg/dataset.hpp"
#include "vseg/fusion.hpp"
#include "vseg/gradcheck.hpp"
#include "vseg/inference.hpp"
#include "vseg/manifest.hpp"
#include "vseg/metrics.hpp"
#include "vseg/parallel.hpp"
#include "vseg/phantom.hpp"
#include "vseg/planner.hpp"
#include "vseg/postprocess.hpp"
#include "vseg/resample.hpp"
#include "vseg/training.hpp"
#include "vseg/volume_io.hpp"

namespace fs = std::filesystem;
using namespace vseg;

namespace {

struct Global {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string config;
};

/// Collects manifest fields for one subcommand run.
class Run {
 public:
  Run(std::string subcommand, const Global& g) : t0_(std::chrono::steady_clock::now()) {
    m_.subcommand = std::move(subcommand);
    m_.config_path = g.config;
    m_.seed = g.seed;
    m_.started_utc = utc_now();
  }

  void input(const std::string& p) { m_.inputs.push_back(p); }
  void output(const std::string& p) { m_.outputs.push_back(p); }
  /// A .vseg header and its raw companion.
  void output_volume(const fs::path& p) {
    output(p.string());
    fs::path raw = p;
    raw.replace_extension(".raw");
    output(raw.string());
  }
  template <typename V>
  void param(const std::string& k, const V& v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    m_.parameters[k] = os.str();
  }
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }
  void finish(const std::string& out) {
    if (out.empty()) return;
    m_.runtime_s = elapsed();
    std::string base = out;
    while (base.size() > 1 && (base.back() == '/' || base.back() == '\\')) base.pop_back();
    m_.write(base + ".manifest.json");
  }

 private:
  RunManifest m_;
  std::chrono::steady_clock::time_point t0_;
};

struct ArchOptions {
  std::string arch = "unet2d4";
  int base_channels = 0;

  ArchSpec spec() const {
    ArchSpec s = arch_preset(arch);
    if (base_channels > 0) s.base_channels = base_channels;
    return s;
  }
};

void add_arch_options(CLI::App* sub, ArchOptions& a) {
  sub->add_option("--arch", a.arch, "Architecture")
      ->check(CLI::IsMember({"unet2d4", "unet2d5", "unet3d", "unet3d-pad"}))
      ->capture_default_str();
  sub->add_option("--base-channels", a.base_channels, "Channels of the first level (0: architecture default)");
}

fs::path image_path(const std::string& dir, const std::string& id) { return fs::path(dir) / (id + ".vseg"); }
fs::path mask_path(const std::string& dir, const std::string& id) { return fs::path(dir) / (id + "_mask.vseg"); }

std::vector<Case> load_cases(const std::string& dir, const std::vector<std::string>& ids, Run& run) {
  std::vector<Case> cases;
  for (const auto& id : ids) {
    const fs::path ip = image_path(dir, id), mp = mask_path(dir, id);
    run.input(ip.string());
    run.input(mp.string());
    Case c{id, read_as_float(ip), read_mask(mp)};
    require_same_geometry(c.image, c.mask, ("case " + id).c_str());
    cases.push_back(std::move(c));
  }
  return cases;
}

std::vector<std::string> ids_in_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("'" + dir + "' is not a directory");
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".vseg") continue;
    const std::string stem = e.path().stem().string();
    if (stem.size() >= 5 && stem.compare(stem.size() - 5, 5, "_mask") == 0) continue;
    ids.push_back(stem);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::int64_t default_train_tile(const ArchSpec& s) {
  if (s.dims == 2) return 132;
  return s.conv_padding == Padding::none ? 108 : 64;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path + "'");
  f << text;
  if (!f) throw IoError("failed writing '" + path + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vseg: U-net volume segmentation pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML file with flag values; command-line flags take precedence");
  Global g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (0: all cores); results do not depend on it")
      ->check(CLI::NonNegativeNumber);

  // phantom
  struct {
    std::string out;
    int count = 1;
    std::int64_t size = 64;
    double spacing = 2.0;
    double noise = 20.0;
    bool no_adjacent = false;
    std::string prefix = "phantom";
  } ph;
  auto* phantom = app.add_subcommand("phantom", "Generate synthetic CT phantoms with reference masks");
  phantom->add_option("--out", ph.out, "Output directory")->required();
  phantom->add_option("--count", ph.count, "Number of phantoms")->check(CLI::PositiveNumber);
  phantom->add_option("--size", ph.size, "Voxels per axis")->check(CLI::Range(32, 1024));
  phantom->add_option("--spacing-mm", ph.spacing, "Voxel spacing")->check(CLI::PositiveNumber);
  phantom->add_option("--noise-sigma", ph.noise, "Gaussian noise sigma in HU")->check(CLI::NonNegativeNumber);
  phantom->add_flag("--no-adjacent", ph.no_adjacent, "Omit the adjacent low-contrast structure");
  phantom->add_option("--prefix", ph.prefix, "Case identifier prefix");

  // split
  struct {
    std::string ids_dir, ids_file, out;
    std::vector<std::size_t> counts;
  } sp;
  auto* split = app.add_subcommand("split", "Random train/validation/test split");
  auto* ids_dir_opt = split->add_option("--ids-dir", sp.ids_dir, "Directory whose volumes define the case ids");
  split->add_option("--ids", sp.ids_file, "Text file with one case id per line")->excludes(ids_dir_opt);
  split->add_option("--counts", sp.counts, "train,validation,test counts")->required()->expected(3)->delimiter(',');
  split->add_option("--out", sp.out, "Output JSON")->required();

  // resample
  struct {
    std::string in, out;
    double spacing = 2.0;
    double slope = 1.0, intercept = 0.0;
  } rs;
  auto* resample = app.add_subcommand("resample", "Rescale and resample a volume or mask to isotropic spacing");
  resample->add_option("--in", rs.in, "Input .vseg")->required();
  resample->add_option("--out", rs.out, "Output .vseg")->required();
  resample->add_option("--spacing-mm", rs.spacing, "Target isotropic spacing")->required();
  resample->add_option("--slope", rs.slope, "Rescale slope for i16 input");
  resample->add_option("--intercept", rs.intercept, "Rescale intercept for i16 input");

  // train
  struct {
    ArchOptions arch;
    std::string loss = "ce", axis = "transversal", cases, split, out;
    std::int64_t tile = 0, batch = 4, iterations = 200, validation_interval = 50;
    double lr = 1e-3;
  } tr;
  auto* train_cmd = app.add_subcommand("train", "Train a U-net on phantom or CT cases");
  add_arch_options(train_cmd, tr.arch);
  train_cmd->add_option("--loss", tr.loss, "Loss function")->check(CLI::IsMember({"ce", "dsc"}));
  train_cmd->add_option("--axis", tr.axis, "Slice orientation for 2D networks")
      ->check(CLI::IsMember({"transversal", "coronal", "sagittal"}));
  train_cmd->add_option("--tile", tr.tile, "Input tile extent (0: architecture default)");
  train_cmd->add_option("--batch", tr.batch, "Tiles per mini-batch")->check(CLI::PositiveNumber);
  train_cmd->add_option("--iterations", tr.iterations, "Adam steps")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--validation-interval", tr.validation_interval, "Steps between validations")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--cases", tr.cases, "Directory with <id>.vseg and <id>_mask.vseg")->required();
  train_cmd->add_option("--split", tr.split, "Split JSON")->required();
  train_cmd->add_option("--out", tr.out, "Output checkpoint")->required();

  // infer
  struct {
    ArchOptions arch;
    std::string checkpoint, in, out, axis = "transversal";
    std::int64_t tile = 0;
  } inf;
  auto* infer = app.add_subcommand("infer", "Tiled inference producing a probability volume");
  add_arch_options(infer, inf.arch);
  infer->add_option("--checkpoint", inf.checkpoint, "Trained checkpoint")->required();
  infer->add_option("--in", inf.in, "Input volume")->required();
  infer->add_option("--out", inf.out, "Output probability .vseg")->required();
  infer->add_option("--axis", inf.axis, "Slice orientation for 2D networks")
      ->check(CLI::IsMember({"transversal", "coronal", "sagittal"}));
  infer->add_option("--tile", inf.tile, "Maximum output tile extent (0: default)");

  // fuse
  struct {
    std::string mode = "mean", t, c, s, checkpoint, out, prob_dir, cases, split, loss = "ce";
    std::int64_t iterations = 100, batch = 2, tile = 16;
  } fu;
  auto* fuse = app.add_subcommand("fuse", "Fuse three orthogonal probability volumes");
  fuse->add_option("--mode", fu.mode, "mean, cnn, or train (fit the fusion CNN)")
      ->check(CLI::IsMember({"mean", "cnn", "train"}));
  fuse->add_option("--transversal", fu.t, "Transversal probabilities");
  fuse->add_option("--coronal", fu.c, "Coronal probabilities");
  fuse->add_option("--sagittal", fu.s, "Sagittal probabilities");
  fuse->add_option("--checkpoint", fu.checkpoint, "Fusion CNN checkpoint (mode cnn)");
  fuse->add_option("--prob-dir", fu.prob_dir, "Directory with <id>_<axis>.vseg (mode train)");
  fuse->add_option("--cases", fu.cases, "Directory with reference masks (mode train)");
  fuse->add_option("--split", fu.split, "Split JSON; its training ids are used (mode train)");
  fuse->add_option("--loss", fu.loss, "Loss function (mode train)")->check(CLI::IsMember({"ce", "dsc"}));
  fuse->add_option("--iterations", fu.iterations, "Adam steps (mode train)")->check(CLI::NonNegativeNumber);
  fuse->add_option("--batch", fu.batch, "Tiles per mini-batch (mode train)")->check(CLI::PositiveNumber);
  fuse->add_option("--tile", fu.tile, "Output tile extent (mode train)")->check(CLI::PositiveNumber);
  fuse->add_option("--out", fu.out, "Output .vseg or checkpoint")->required();

  // postprocess
  struct {
    std::string in, out;
    double threshold = 0.5;
    bool keep_all = false;
  } pp;
  auto* post = app.add_subcommand("postprocess", "Threshold and keep the largest connected component");
  post->add_option("--in", pp.in, "Probability or mask volume")->required();
  post->add_option("--out", pp.out, "Output mask")->required();
  post->add_option("--threshold", pp.threshold, "Foreground iff p >= threshold")->check(CLI::Range(0.0, 1.0));
  post->add_flag("--keep-all-components", pp.keep_all, "Skip largest-component filtering");

  // evaluate
  struct {
    std::vector<std::string> seg, ref, ids;
    std::vector<double> runtime;
    std::string out;
  } ev;
  auto* evaluate = app.add_subcommand("evaluate", "Per-case metrics and MICCAI score");
  evaluate->add_option("--seg", ev.seg, "Segmentation mask(s)")->required();
  evaluate->add_option("--ref", ev.ref, "Reference mask(s), paired with --seg")->required();
  evaluate->add_option("--case-id", ev.ids, "Case identifiers (default: segmentation file stems)");
  evaluate->add_option("--runtime-s", ev.runtime, "Segmentation runtimes to report");
  evaluate->add_option("--out", ev.out, "Output CSV (always printed to stdout)");

  // compare
  struct {
    std::string a, b, metric = "miccai", out;
  } cp;
  auto* compare = app.add_subcommand("compare", "Wilcoxon signed-rank test between two metric CSVs");
  compare->add_option("--a", cp.a, "First method's CSV")->required();
  compare->add_option("--b", cp.b, "Second method's CSV")->required();
  compare->add_option("--metric", cp.metric, "Column to compare")
      ->check(CLI::IsMember({"voe_pct", "delta_vol_pct", "d_mean_mm", "d_max_mm", "d_rms_mm", "miccai"}));
  compare->add_option("--out", cp.out, "Output CSV");

  // plan
  struct {
    ArchOptions arch;
    bool table3 = false, csv = false;
    std::vector<std::int64_t> tile;
    std::int64_t batch = 1;
    std::int64_t budget = gpu_budget_bytes;
    std::string out;
  } pl;
  auto* plan = app.add_subcommand("plan", "Tile, padding and memory arithmetic");
  add_arch_options(plan, pl.arch);
  plan->add_flag("--table3", pl.table3, "Affordable-batch-size table for all configurations");
  plan->add_flag("--csv", pl.csv, "CSV instead of an aligned table");
  plan->add_option("--tile", pl.tile, "Output tile per axis (one value applies to every axis)")->delimiter(',');
  plan->add_option("--batch", pl.batch, "Mini-batch size")->check(CLI::PositiveNumber);
  plan->add_option("--budget-bytes", pl.budget, "Memory budget")->check(CLI::PositiveNumber);
  plan->add_option("--out", pl.out, "Also write the report to this file");

  // gradcheck
  struct {
    std::string loss = "both", out;
    int seeds = 1;
  } gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of a small U-net");
  gradcheck->add_option("--loss", gc.loss, "ce, dsc or both")->check(CLI::IsMember({"ce", "dsc", "both"}));
  gradcheck->add_option("--seeds", gc.seeds, "Number of random configurations")->check(CLI::PositiveNumber);
  gradcheck->add_option("--out", gc.out, "Output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    set_thread_count(g.threads);
    if (app.get_option("--config")->count() > 0) g.config = app.get_option("--config")->as<std::string>();

    if (phantom->parsed()) {
      Run run("phantom", g);
      fs::create_directories(ph.out);
      for (int i = 0; i < ph.count; ++i) {
        PhantomConfig cfg = phantom_config_for({ph.size, ph.size, ph.size});
        cfg.seed = g.seed + static_cast<std::uint64_t>(i);
        cfg.spacing_mm = ph.spacing;
        cfg.noise_sigma_hu = ph.noise;
        cfg.include_adjacent_structure = !ph.no_adjacent;
        auto [v, m] = generate_phantom(cfg);
        std::ostringstream id;
        id << ph.prefix << '_' << std::setw(3) << std::setfill('0') << i;
        write_volume(v, image_path(ph.out, id.str()));
        write_volume(m, mask_path(ph.out, id.str()));
        run.output_volume(image_path(ph.out, id.str()));
        run.output_volume(mask_path(ph.out, id.str()));
      }
      run.param("count", ph.count);
      run.param("size", ph.size);
      run.param("spacing_mm", ph.spacing);
      run.param("noise_sigma", ph.noise);
      run.param("adjacent", !ph.no_adjacent);
      run.finish(ph.out);
    } else if (split->parsed()) {
      Run run("split", g);
      std::vector<std::string> ids;
      if (!sp.ids_dir.empty()) {
        ids = ids_in_dir(sp.ids_dir);
        run.input(sp.ids_dir);
      } else if (!sp.ids_file.empty()) {
        std::ifstream f(sp.ids_file);
        if (!f) throw IoError("cannot open '" + sp.ids_file + "'");
        for (std::string line; std::getline(f, line);) {
          if (!line.empty()) ids.push_back(line);
        }
        run.input(sp.ids_file);
      } else {
        throw ValidationError("split needs --ids-dir or --ids");
      }
      const DatasetSplit s = split_dataset(ids, {sp.counts[0], sp.counts[1], sp.counts[2]}, g.seed);
      write_split(s, sp.out);
      run.output(sp.out);
      run.finish(sp.out);
    } else if (resample->parsed()) {
      Run run("resample", g);
      run.input(rs.in);
      const AnyImage img = read_volume(rs.in);
      if (std::holds_alternative<Mask>(img)) {
        write_volume(resample_nearest(std::get<Mask>(img), rs.spacing), rs.out);
      } else {
        Volume v = std::holds_alternative<RawVolume>(img)
                       ? hounsfield_rescale(std::get<RawVolume>(img), rs.slope, rs.intercept)
                       : std::get<Volume>(img);
        write_volume(resample_lanczos(v, rs.spacing), rs.out);
      }
      run.param("spacing_mm", rs.spacing);
      run.param("slope", rs.slope);
      run.param("intercept", rs.intercept);
      run.output_volume(rs.out);
      run.finish(rs.out);
    } else if (train_cmd->parsed()) {
      Run run("train", g);
      const ArchSpec spec = tr.arch.spec();
      const DatasetSplit s = read_split(tr.split);
      run.input(tr.split);
      const auto train_cases = load_cases(tr.cases, s.train_ids, run);
      const auto val_cases = load_cases(tr.cases, s.validation_ids, run);
      TrainConfig cfg;
      cfg.loss = parse_loss(tr.loss);
      cfg.axis = parse_axis(tr.axis);
      cfg.tile_size = tr.tile > 0 ? tr.tile : default_train_tile(spec);
      cfg.batch_size = tr.batch;
      cfg.iterations = tr.iterations;
      cfg.validation_interval = tr.validation_interval;
      cfg.adam.learning_rate = tr.lr;
      cfg.seed = g.seed + 1;
      const Network init = build_unet(spec, g.seed);
      TrainResult res = train(init, spec, train_cases, val_cases, cfg);
      save_checkpoint(tr.out, res.best);
      const std::string hist = tr.out + ".history.csv";
      res.history.write_csv(hist);
      run.output(tr.out);
      run.output(hist);
      run.param("arch", spec.fingerprint());
      run.param("loss", tr.loss);
      run.param("axis", tr.axis);
      run.param("tile", cfg.tile_size);
      run.param("batch", cfg.batch_size);
      run.param("iterations", cfg.iterations);
      run.param("validation_interval", cfg.validation_interval);
      run.param("lr", cfg.adam.learning_rate);
      run.param("best_iteration", res.history.best_iteration);
      run.finish(tr.out);
    } else if (infer->parsed()) {
      Run run("infer", g);
      const ArchSpec spec = inf.arch.spec();
      Network net = build_unet(spec, 0);
      load_checkpoint(inf.checkpoint, net);
      run.input(inf.checkpoint);
      run.input(inf.in);
      const Volume v = read_as_float(inf.in);
      const ProbVolume p = segment(net, spec, v, parse_axis(inf.axis), inf.tile);
      write_volume(p, inf.out);
      run.output_volume(inf.out);
      run.param("arch", spec.fingerprint());
      run.param("axis", inf.axis);
      run.param("tile", inf.tile);
      run.finish(inf.out);
    } else if (fuse->parsed()) {
      Run run("fuse", g);
      run.param("mode", fu.mode);
      if (fu.mode == "train") {
        if (fu.prob_dir.empty() || fu.cases.empty() || fu.split.empty()) {
          throw ValidationError("fuse --mode train needs --prob-dir, --cases and --split");
        }
        const DatasetSplit s = read_split(fu.split);
        run.input(fu.split);
        std::vector<FusionCase> cases;
        for (const auto& id : s.train_ids) {
          FusionCase fc;
          const fs::path base = fs::path(fu.prob_dir);
          for (auto [axis, slot] : {std::pair{"transversal", &fc.transversal}, std::pair{"coronal", &fc.coronal},
                                    std::pair{"sagittal", &fc.sagittal}}) {
            const fs::path p = base / (id + "_" + axis + ".vseg");
            run.input(p.string());
            *slot = read_float_volume(p);
          }
          run.input(mask_path(fu.cases, id).string());
          fc.reference = read_mask(mask_path(fu.cases, id));
          cases.push_back(std::move(fc));
        }
        FusionTrainConfig cfg;
        cfg.iterations = fu.iterations;
        cfg.batch_size = fu.batch;
        cfg.output_tile = fu.tile;
        cfg.loss = parse_loss(fu.loss);
        cfg.seed = g.seed + 1;
        Network net = build_fusion_net(g.seed);
        train_fusion(net, cases, cfg);
        save_checkpoint(fu.out, net);
        run.output(fu.out);
        run.param("iterations", cfg.iterations);
        run.param("batch", cfg.batch_size);
        run.param("tile", cfg.output_tile);
        run.param("loss", fu.loss);
      } else {
        if (fu.t.empty() || fu.c.empty() || fu.s.empty()) {
          throw ValidationError("fuse needs --transversal, --coronal and --sagittal");
        }
        for (const auto* p : {&fu.t, &fu.c, &fu.s}) run.input(*p);
        const ProbVolume pt = read_float_volume(fu.t), pc = read_float_volume(fu.c), ps = read_float_volume(fu.s);
        if (fu.mode == "mean") {
          write_volume(fuse_mean(pt, pc, ps), fu.out);
        } else {
          if (fu.checkpoint.empty()) throw ValidationError("fuse --mode cnn needs --checkpoint");
          Network net = build_fusion_net(0);
          load_checkpoint(fu.checkpoint, net);
          run.input(fu.checkpoint);
          write_volume(fuse_cnn(pt, pc, ps, net), fu.out);
        }
        run.output_volume(fu.out);
      }
      run.finish(fu.out);
    } else if (post->parsed()) {
      Run run("postprocess", g);
      run.input(pp.in);
      const AnyImage img = read_volume(pp.in);
      Mask m;
      if (std::holds_alternative<Mask>(img)) {
        m = std::get<Mask>(img);
      } else if (std::holds_alternative<Volume>(img)) {
        m = threshold(std::get<Volume>(img), pp.threshold);
      } else {
        throw ValidationError("postprocess expects a probability (f32) or mask (u8) volume");
      }
      if (!pp.keep_all) m = largest_component(m);
      write_volume(m, pp.out);
      run.output_volume(pp.out);
      run.param("threshold", pp.threshold);
      run.param("largest_component", !pp.keep_all);
      run.finish(pp.out);
    } else if (evaluate->parsed()) {
      Run run("evaluate", g);
      if (ev.seg.size() != ev.ref.size()) throw ValidationError("--seg and --ref must be given in pairs");
      if (!ev.ids.empty() && ev.ids.size() != ev.seg.size()) throw ValidationError("one --case-id per --seg");
      if (ev.runtime.size() > 1 && ev.runtime.size() != ev.seg.size()) {
        throw ValidationError("one --runtime-s per --seg (or a single value)");
      }
      std::vector<EvaluationInput> cases;
      for (std::size_t i = 0; i < ev.seg.size(); ++i) {
        run.input(ev.seg[i]);
        run.input(ev.ref[i]);
        EvaluationInput c;
        c.case_id = ev.ids.empty() ? fs::path(ev.seg[i]).stem().string() : ev.ids[i];
        c.seg = read_mask(ev.seg[i]);
        c.ref = read_mask(ev.ref[i]);
        c.runtime_s = ev.runtime.empty() ? 0.0 : ev.runtime[ev.runtime.size() == 1 ? 0 : i];
        cases.push_back(std::move(c));
      }
      const std::string csv = metrics_csv(evaluate_batch(cases));
      std::cout << csv;
      if (!ev.out.empty()) {
        write_text(ev.out, csv);
        run.output(ev.out);
      }
      run.finish(ev.out);
    } else if (compare->parsed()) {
      Run run("compare", g);
      run.input(cp.a);
      run.input(cp.b);
      const auto a = read_metrics_csv(cp.a), b = read_metrics_csv(cp.b);
      std::map<std::string, const MetricsReport*> bmap;
      for (const auto& r : b) bmap[r.case_id] = &r.report;
      if (a.size() != b.size() || bmap.size() != b.size()) {
        throw ValidationError("compare: the CSVs must list the same cases once each");
      }
      static const std::map<std::string, double MetricsReport::*> columns{
          {"voe_pct", &MetricsReport::voe_pct},     {"delta_vol_pct", &MetricsReport::delta_vol_pct},
          {"d_mean_mm", &MetricsReport::d_mean_mm}, {"d_max_mm", &MetricsReport::d_max_mm},
          {"d_rms_mm", &MetricsReport::d_rms_mm},   {"miccai", &MetricsReport::miccai}};
      const auto col = columns.at(cp.metric);
      std::vector<double> x, y;
      for (const auto& r : a) {
        const auto it = bmap.find(r.case_id);
        if (it == bmap.end()) throw ValidationError("compare: case '" + r.case_id + "' missing from --b");
        x.push_back(r.report.*col);
        y.push_back(it->second->*col);
      }
      const WilcoxonResult w = wilcoxon_signed_rank(x, y);
      std::ostringstream os;
      os << "metric,n,w_plus,p_value,exact,significant\n"
         << cp.metric << ',' << w.n << ',' << w.w_plus << ',' << std::setprecision(10) << w.p_value << ','
         << (w.exact ? 1 : 0) << ',' << (w.p_value < 0.05 ? 1 : 0) << '\n';
      std::cout << os.str();
      if (!cp.out.empty()) {
        write_text(cp.out, os.str());
        run.output(cp.out);
      }
      run.param("metric", cp.metric);
      run.finish(cp.out);
    } else if (plan->parsed()) {
      Run run("plan", g);
      std::string text;
      if (pl.table3) {
        text = format_table3(table3_report(pl.budget), pl.csv);
      } else {
        const ArchSpec spec = pl.arch.spec();
        SpatialSize tile;
        if (pl.tile.empty()) {
          tile.assign(static_cast<std::size_t>(spec.dims),
                      spec.conv_padding == Padding::none ? min_valid_input(spec) - shrinkage(spec) : spec.period());
        } else if (pl.tile.size() == 1) {
          tile.assign(static_cast<std::size_t>(spec.dims), pl.tile[0]);
        } else {
          tile.assign(pl.tile.begin(), pl.tile.end());
        }
        const SpatialSize padded = padded_input(tile, spec);
        std::ostringstream os;
        if (!pl.csv) {
          os << "arch: " << spec.fingerprint() << '\n';
          os << "receptive field: " << receptive_field(spec) << " voxels\n";
          os << "parameters: " << param_count(spec) << '\n';
          os << "tile:";
          for (auto t : tile) os << ' ' << t;
          os << "  padded:";
          for (auto t : padded) os << ' ' << t;
          os << "  ratio: " << std::fixed << std::setprecision(2) << loss_voxel_ratio(tile, spec, pl.batch) << " %\n";
          os << "memory estimate (batch " << pl.batch << "): " << memory_estimate(spec, tile, pl.batch)
             << " bytes; max batch within " << pl.budget << " bytes: " << max_batch(spec, tile, pl.budget) << "\n\n";
        }
        os << format_layer_table(layer_table(spec, padded[0]), pl.csv);
        text = os.str();
      }
      std::cout << text;
      if (!pl.out.empty()) {
        write_text(pl.out, text);
        run.output(pl.out);
      }
      run.finish(pl.out);
    } else if (gradcheck->parsed()) {
      Run run("gradcheck", g);
      std::vector<LossKind> kinds;
      if (gc.loss != "dsc") kinds.push_back(LossKind::ce);
      if (gc.loss != "ce") kinds.push_back(LossKind::dsc);
      ArchSpec spec;
      spec.dims = 2;
      spec.levels = 2;
      spec.base_channels = 2;
      const std::int64_t in = min_valid_input(spec) + 2 * spec.period();
      const std::int64_t out = output_size(in, spec);
      std::ostringstream os;
      os << "loss,seed,checked,skipped,max_rel_error,pass\n";
      bool ok = true;
      for (int k = 0; k < gc.seeds; ++k) {
        const std::uint64_t seed = g.seed + static_cast<std::uint64_t>(k);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd(0.0, 1.0);
        TensorD x(Shape{2, 1, in, in});
        for (auto& v : x.values()) v = nd(rng);
        std::vector<std::uint8_t> target(static_cast<std::size_t>(2 * out * out));
        for (auto& t : target) t = static_cast<std::uint8_t>(rng() & 1U);
        for (LossKind kind : kinds) {
          NetworkD net = build_network<double>(unet_graph(spec), seed);
          GradCheckOptions opt;
          opt.mode = Mode::train;
          opt.seed = seed;
          opt.max_per_tensor = 16;
          const GradCheckReport r = gradient_check(net, x, head_objective(kind, target), opt);
          const bool pass = r.max_rel_error < 1e-3;
          ok = ok && pass;
          os << to_string(kind) << ',' << seed << ',' << r.checked << ',' << r.skipped << ',' << std::scientific
             << std::setprecision(3) << r.max_rel_error << std::defaultfloat << ',' << (pass ? 1 : 0) << '\n';
        }
      }
      std::cout << os.str();
      if (!gc.out.empty()) {
        write_text(gc.out, os.str());
        run.output(gc.out);
      }
      run.finish(gc.out);
      if (!ok) throw ValidationError("gradient check exceeded 1e-3 relative error");
    }
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
