#include "vseg/training.hpp"

#include <fstream>
#include <iomanip>
#include <limits>

#include "vseg/metrics.hpp"
#include "vseg/postprocess.hpp"
#include "vseg/window.hpp"

namespace vseg {

void TrainConfig::validate(const ArchSpec& spec) const {
  adam.validate();
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (iterations < 0) throw ValidationError("iterations must be >= 0");
  if (validation_interval < 1) throw ValidationError("validation interval must be >= 1");
  if (spec.conv_padding == Padding::none) {
    if (!valid_input(tile_size, spec)) {
      throw ValidationError("tile size " + std::to_string(tile_size) + " is not a valid input for " + spec.fingerprint());
    }
  } else if (tile_size < spec.period() || tile_size % spec.period() != 0) {
    throw ValidationError("tile size must be a multiple of " + std::to_string(spec.period()));
  }
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << "iteration,loss,val_dice\n" << std::setprecision(9);
  std::size_t v = 0;
  for (std::size_t i = 0; i < loss.size(); ++i) {
    const auto it = static_cast<std::int64_t>(i + 1);
    f << it << ',' << loss[i] << ',';
    if (v < validation.size() && validation[v].iteration == it) f << validation[v++].mean_dice;
    f << '\n';
  }
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

std::int64_t training_output_size(std::int64_t tile_size, const ArchSpec& spec) {
  return spec.conv_padding == Padding::none ? output_size(tile_size, spec) : tile_size;
}

Minibatch sample_minibatch(const std::vector<Case>& cases, const ArchSpec& spec, std::int64_t tile_size,
                           std::int64_t batch, SliceAxis axis, std::mt19937_64& rng) {
  if (cases.empty()) throw ValidationError("no training cases");
  if (batch < 1) throw ValidationError("batch size must be >= 1");
  const std::int64_t out = training_output_size(tile_size, spec);
  const std::int64_t margin = (tile_size - out) / 2;
  const int dims = spec.dims;
  const int fixed = dims == 2 ? axis_index(axis) : -1;

  std::array<std::int64_t, 3> in_size{}, out_size{};
  for (int a = 0; a < 3; ++a) {
    in_size[static_cast<std::size_t>(a)] = a == fixed ? 1 : tile_size;
    out_size[static_cast<std::size_t>(a)] = a == fixed ? 1 : out;
  }
  Shape ishape{batch, 1};
  for (int i = 0; i < dims; ++i) ishape.push_back(tile_size);
  Minibatch mb{Tensor(ishape), {}};
  const std::int64_t in_vox = in_size[0] * in_size[1] * in_size[2];
  const std::int64_t out_vox = out_size[0] * out_size[1] * out_size[2];
  mb.target.resize(static_cast<std::size_t>(batch * out_vox));

  std::uniform_int_distribution<std::size_t> pick_case(0, cases.size() - 1);
  for (std::int64_t b = 0; b < batch; ++b) {
    const Case& c = cases[pick_case(rng)];
    require_same_geometry(c.image, c.mask, "training case");
    std::array<std::int64_t, 3> ostart{}, istart{};
    for (int a = 0; a < 3; ++a) {
      const auto ua = static_cast<std::size_t>(a);
      const std::int64_t n = c.image.shape[ua];
      if (n < out_size[ua]) {
        throw ValidationError("case '" + c.id + "' is smaller than the output tile (" + std::to_string(out) + ")");
      }
      std::uniform_int_distribution<std::int64_t> pos(0, n - out_size[ua]);
      ostart[ua] = pos(rng);
      istart[ua] = a == fixed ? ostart[ua] : ostart[ua] - margin;
    }
    gather_window(c.image.data.data(), c.image.shape, istart, in_size, Padding::reflect,
                  mb.input.data() + b * in_vox);
    gather_window(c.mask.data.data(), c.mask.shape, ostart, out_size, Padding::none,
                  mb.target.data() + b * out_vox);
  }
  return mb;
}

double validation_dice(const Network& net, const ArchSpec& spec, const std::vector<Case>& cases, SliceAxis axis,
                       std::int64_t inference_tile) {
  if (cases.empty()) throw ValidationError("no validation cases");
  double sum = 0.0;
  for (const Case& c : cases) {
    const ProbVolume p = segment(net, spec, c.image, axis, inference_tile);
    sum += dice(threshold(p, 0.5), c.mask);
  }
  return sum / static_cast<double>(cases.size());
}

TrainResult train(const Network& init, const ArchSpec& spec, const std::vector<Case>& train_cases,
                  const std::vector<Case>& val_cases, const TrainConfig& cfg) {
  cfg.validate(spec);
  if (init.fingerprint() != spec.fingerprint()) throw ValidationError("network does not match the training spec");
  TrainResult res{init, {}};
  if (cfg.iterations == 0) return res;
  if (train_cases.empty() || val_cases.empty()) {
    throw ValidationError("training needs at least one training and one validation case");
  }
  Network net = init;
  AdamState<float> adam;
  std::mt19937_64 rng(cfg.seed);
  double best = -std::numeric_limits<double>::infinity();
  for (std::int64_t it = 1; it <= cfg.iterations; ++it) {
    const Minibatch mb = sample_minibatch(train_cases, spec, cfg.tile_size, cfg.batch_size, cfg.axis, rng);
    ForwardState<float> st;
    const Tensor& out = net.forward(mb.input, {Mode::train, std::nullopt}, st);
    auto [value, grad] = head_loss<float>(cfg.loss, out, mb.target);
    const NetworkGradients<float> g = net.backward(st, grad);
    net.commit_batch_statistics(st);
    adam_step(net.parameters(), g.params, adam, cfg.adam);
    res.history.loss.push_back(value);
    if (it % cfg.validation_interval == 0 || it == cfg.iterations) {
      const double d = validation_dice(net, spec, val_cases, cfg.axis, cfg.inference_tile);
      res.history.validation.push_back({it, d});
      if (d > best) {
        best = d;
        res.best = net;
        res.history.best_iteration = it;
      }
    }
  }
  return res;
}

}  // namespace vseg
