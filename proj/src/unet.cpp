#include "vseg/unet.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace vseg {

namespace {

std::string padding_name(Padding p) {
  switch (p) {
    case Padding::none: return "none";
    case Padding::zero: return "zero";
    case Padding::reflect: return "reflect";
  }
  return "?";
}

std::string size_string(const SpatialSize& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

}  // namespace

void ArchSpec::validate() const {
  if (dims != 2 && dims != 3) throw ValidationError("arch dims must be 2 or 3");
  if (levels < 1 || levels > 8) throw ValidationError("arch levels must be in [1, 8]");
  if (base_channels < 1) throw ValidationError("base_channels must be >= 1");
  if (classes != 2) throw ValidationError("only 2-class heads are supported");
  if (in_channels < 1) throw ValidationError("in_channels must be >= 1");
  if (conv_padding == Padding::reflect) throw ValidationError("arch conv_padding must be none or zero");
}

std::string ArchSpec::fingerprint() const {
  std::ostringstream os;
  os << "unet dims=" << dims << " levels=" << levels << " base=" << base_channels
     << " scheme=" << (scheme == FilterScheme::standard ? "standard" : "cicek_doubling")
     << " padding=" << padding_name(conv_padding) << " classes=" << classes << " in=" << in_channels;
  return os.str();
}

ArchSpec arch_preset(const std::string& name) {
  ArchSpec s;
  s.id = name;
  if (name == "unet2d4") {
    s.dims = 2;
    s.levels = 4;
    s.base_channels = 64;
  } else if (name == "unet2d5") {
    s.dims = 2;
    s.levels = 5;
    s.base_channels = 64;
  } else if (name == "unet3d" || name == "unet3d-pad") {
    s.dims = 3;
    s.levels = 4;
    s.base_channels = 16;
    s.scheme = FilterScheme::cicek_doubling;
    if (name == "unet3d-pad") s.conv_padding = Padding::zero;
  } else if (name == "unet3d-naive") {
    s.dims = 3;
    s.levels = 4;
    s.base_channels = 64;
  } else {
    throw ValidationError("unknown architecture '" + name + "'");
  }
  return s;
}

std::vector<std::string> arch_preset_names() { return {"unet2d4", "unet2d5", "unet3d", "unet3d-pad", "unet3d-naive"}; }

GraphDesc unet_graph(const ArchSpec& spec) {
  spec.validate();
  GraphDesc g;
  g.spatial_dims = spec.dims;
  g.in_channels = spec.in_channels;
  g.fingerprint = spec.fingerprint();
  auto& L = g.layers;
  int cur = -1;
  int ch = spec.in_channels;
  auto add = [&](LayerDesc d) {
    L.push_back(std::move(d));
    return static_cast<int>(L.size()) - 1;
  };
  auto block = [&](const std::string& prefix, int c1, int c2) {
    const int outs[2] = {c1, c2};
    for (int i = 0; i < 2; ++i) {
      const std::string k = std::to_string(i + 1);
      cur = add({OpKind::conv, prefix + ".conv" + k, cur, -1, ch, outs[i], 3, spec.conv_padding});
      ch = outs[i];
      cur = add({OpKind::batchnorm, prefix + ".bn" + k, cur, -1, ch, ch, 1, Padding::none});
      cur = add({OpKind::relu, prefix + ".relu" + k, cur, -1, ch, ch, 1, Padding::none});
    }
  };
  const bool doubling = spec.scheme == FilterScheme::cicek_doubling;
  auto n = [&](int level) { return spec.base_channels << (level - 1); };

  std::vector<int> skips;
  for (int l = 1; l < spec.levels; ++l) {
    block("enc" + std::to_string(l), n(l), doubling ? 2 * n(l) : n(l));
    skips.push_back(cur);
    cur = add({OpKind::maxpool, "pool" + std::to_string(l), cur, -1, ch, ch, 2, Padding::none});
  }
  block(spec.levels > 1 ? "bottom" : "enc1", n(spec.levels), doubling ? 2 * n(spec.levels) : n(spec.levels));
  for (int l = spec.levels - 1; l >= 1; --l) {
    const std::string lv = std::to_string(l);
    const int skip = skips[static_cast<std::size_t>(l - 1)];
    const int skip_ch = L[static_cast<std::size_t>(skip)].out_channels;
    const int up_ch = doubling ? ch : ch / 2;
    cur = add({OpKind::upconv, "up" + lv, cur, -1, ch, up_ch, 2, Padding::none});
    cur = add({OpKind::concat_crop, "dec" + lv + ".concat", cur, skip, skip_ch + up_ch, skip_ch + up_ch, 1,
               Padding::none});
    ch = skip_ch + up_ch;
    block("dec" + lv, doubling ? 2 * n(l) : n(l), doubling ? 2 * n(l) : n(l));
  }
  cur = add({OpKind::conv, "head.conv", cur, -1, ch, spec.classes, 1, Padding::none});
  add({OpKind::softmax, "head.softmax", cur, -1, spec.classes, spec.classes, 1, Padding::none});
  return g;
}

template <typename T>
BasicNetwork<T> build_network(const GraphDesc& g, std::uint64_t seed) {
  BasicNetwork<T> net(g.spatial_dims, g.in_channels, g.fingerprint);
  for (const auto& d : g.layers) {
    switch (d.kind) {
      case OpKind::conv: net.add_conv(d.name, d.input, d.in_channels, d.out_channels, d.kernel, d.padding); break;
      case OpKind::batchnorm: net.add_batchnorm(d.name, d.input, d.out_channels); break;
      case OpKind::relu: net.add_relu(d.name, d.input); break;
      case OpKind::maxpool: net.add_maxpool(d.name, d.input); break;
      case OpKind::upconv: net.add_upconv(d.name, d.input, d.in_channels, d.out_channels); break;
      case OpKind::concat_crop: net.add_concat_crop(d.name, d.skip, d.input); break;
      case OpKind::softmax: net.add_softmax(d.name, d.input); break;
    }
  }
  net.initialize(seed);
  return net;
}

template BasicNetwork<float> build_network<float>(const GraphDesc&, std::uint64_t);
template BasicNetwork<double> build_network<double>(const GraphDesc&, std::uint64_t);

Network build_unet(const ArchSpec& spec, std::uint64_t seed) { return build_network<float>(unet_graph(spec), seed); }

std::vector<SpatialSize> simulate_sizes(const GraphDesc& g, const SpatialSize& input, Padding conv_padding_override,
                                        bool use_override) {
  if (input.empty()) throw ValidationError("empty input size");
  for (auto v : input) {
    if (v < 1) throw ValidationError("input extent must be positive");
  }
  std::vector<SpatialSize> out(g.layers.size());
  auto size_of = [&](int node) -> const SpatialSize& {
    return node < 0 ? input : out[static_cast<std::size_t>(node)];
  };
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerDesc& d = g.layers[i];
    SpatialSize s = size_of(d.input);
    switch (d.kind) {
      case OpKind::conv: {
        const Padding p = (use_override && d.kernel > 1) ? conv_padding_override : d.padding;
        if (p == Padding::none) {
          for (auto& v : s) {
            v -= d.kernel - 1;
            if (v < 1) throw ValidationError(d.name + ": extent becomes non-positive");
          }
        }
        break;
      }
      case OpKind::maxpool:
        for (auto& v : s) {
          if (v % 2 != 0) throw ValidationError(d.name + ": odd extent " + std::to_string(v) + " before pooling");
          v /= 2;
        }
        break;
      case OpKind::upconv:
        for (auto& v : s) v *= 2;
        break;
      case OpKind::concat_crop: {
        const SpatialSize& k = size_of(d.skip);
        for (std::size_t a = 0; a < s.size(); ++a) {
          const std::int64_t diff = k[a] - s[a];
          if (diff < 0) throw ValidationError(d.name + ": skip smaller than upsampled path");
          if (diff % 2 != 0) throw ValidationError(d.name + ": odd crop difference");
        }
        break;
      }
      default: break;
    }
    out[i] = std::move(s);
  }
  return out;
}

std::int64_t output_size(std::int64_t input, const ArchSpec& spec) {
  const GraphDesc g = unet_graph(spec);
  return simulate_sizes(g, {input}).back()[0];
}

bool valid_input(std::int64_t input, const ArchSpec& spec) {
  if (input < 1) return false;
  try {
    output_size(input, spec);
    return true;
  } catch (const ValidationError&) {
    return false;
  }
}

std::int64_t min_valid_input(const ArchSpec& spec) {
  const GraphDesc g = unet_graph(spec);
  for (std::int64_t s = 1; s < 1'000'000; ++s) {
    try {
      simulate_sizes(g, {s});
      return s;
    } catch (const ValidationError&) {
    }
  }
  throw ValidationError("no valid input size for " + spec.fingerprint());
}

std::int64_t shrinkage(const ArchSpec& spec) {
  const std::int64_t m = min_valid_input(spec);
  return m - output_size(m, spec);
}

namespace {

struct Interval {
  std::int64_t lo = 1;
  std::int64_t hi = 0;
  bool empty() const { return lo > hi; }
  void hull(Interval o) {
    if (o.empty()) return;
    if (empty()) {
      *this = o;
      return;
    }
    lo = std::min(lo, o.lo);
    hi = std::max(hi, o.hi);
  }
};

template <typename Layers>
int seed_node_of(const Layers& layers) {
  int i = static_cast<int>(layers.size()) - 1;
  while (i >= 0 && layers[static_cast<std::size_t>(i)].kind == OpKind::softmax) --i;
  if (i < 0) throw ValidationError("graph has no node before the softmax");
  return i;
}

}  // namespace

std::int64_t receptive_field(const GraphDesc& g, std::int64_t probe_size, std::int64_t phases) {
  const auto sizes = simulate_sizes(g, {probe_size});
  const int seed = seed_node_of(g.layers);
  const std::int64_t out = sizes[static_cast<std::size_t>(seed)][0];
  if (out < phases) throw ValidationError("probe input too small to contain the footprint");
  const std::int64_t c = (out - phases) / 2;
  std::int64_t best = 0;
  for (std::int64_t t = 0; t < phases; ++t) {
    std::vector<Interval> iv(g.layers.size());
    Interval input;
    iv[static_cast<std::size_t>(seed)] = {c + t, c + t};
    auto route = [&](int node, Interval v) {
      if (node < 0) {
        input.hull(v);
      } else {
        iv[static_cast<std::size_t>(node)].hull(v);
      }
    };
    auto in_size = [&](int node) { return node < 0 ? probe_size : sizes[static_cast<std::size_t>(node)][0]; };
    for (int i = seed; i >= 0; --i) {
      const Interval v = iv[static_cast<std::size_t>(i)];
      if (v.empty()) continue;
      const LayerDesc& d = g.layers[static_cast<std::size_t>(i)];
      switch (d.kind) {
        case OpKind::conv:
          if (d.padding == Padding::none) {
            route(d.input, {v.lo, v.hi + d.kernel - 1});
          } else {
            const std::int64_t h = (d.kernel - 1) / 2;
            route(d.input, {std::max<std::int64_t>(0, v.lo - h), std::min(in_size(d.input) - 1, v.hi + h)});
          }
          break;
        case OpKind::maxpool: route(d.input, {2 * v.lo, 2 * v.hi + 1}); break;
        case OpKind::upconv: route(d.input, {v.lo / 2, v.hi / 2}); break;
        case OpKind::concat_crop: {
          const std::int64_t off = (in_size(d.skip) - in_size(d.input)) / 2;
          route(d.input, v);
          route(d.skip, {v.lo + off, v.hi + off});
          break;
        }
        default: route(d.input, v); break;
      }
    }
    if (input.lo <= 0 || input.hi >= probe_size - 1) {
      throw ValidationError("probe input too small to contain the footprint");
    }
    best = std::max(best, input.hi - input.lo + 1);
  }
  return best;
}

std::int64_t default_probe_size(const ArchSpec& spec) {
  const std::int64_t p = spec.period();
  if (spec.conv_padding == Padding::none) return min_valid_input(spec) + 4 * p;
  return 32 * p;
}

std::int64_t receptive_field(const ArchSpec& spec) {
  return receptive_field(unet_graph(spec), default_probe_size(spec), spec.period());
}

SpatialSize empirical_footprint(const Network& net, std::int64_t probe_size, std::int64_t phases) {
  NetworkD probe = net.cast<double>();
  for (auto& n : probe.nodes()) {
    if (n.kind == OpKind::conv || n.kind == OpKind::upconv) {
      for (auto& w : n.weight.values()) w = std::abs(w) + 1e-3;
    } else if (n.kind == OpKind::batchnorm) {
      n.gamma.fill(1.0);
      n.beta.fill(0.0);
      n.running_mean.fill(0.0);
      n.running_var.fill(1.0);
    }
  }
  const int dims = probe.spatial_dims();
  const int seed = seed_node_of(probe.nodes());

  // Extents along different axes are independent, so each axis is probed with
  // the probe size along that axis and the smallest usable size elsewhere.
  GraphDesc g;
  for (const auto& n : probe.nodes()) {
    g.layers.push_back({n.kind, n.name, n.input, n.skip, n.in_channels, n.out_channels, n.kernel, n.padding});
  }
  std::int64_t other = probe_size;
  for (std::int64_t s = 1; s < probe_size; ++s) {
    try {
      simulate_sizes(g, {s});
    } catch (const ValidationError&) {
      continue;
    }
    other = s;
    break;
  }

  SpatialSize result(static_cast<std::size_t>(dims), 0);
  for (int axis = 0; axis < dims; ++axis) {
    Shape shape{1, probe.in_channels()};
    for (int a = 0; a < dims; ++a) shape.push_back(a == axis ? probe_size : other);
    TensorD x(shape, 1.0);
    ForwardState<double> st;
    probe.forward(x, {Mode::infer, std::nullopt}, st);
    const TensorD& y = st.outputs[static_cast<std::size_t>(seed)];
    const Layout ly = y.layout();
    const int off = 3 - dims;
    const std::int64_t out_len = ly.s[static_cast<std::size_t>(off + axis)];
    if (out_len < phases) throw ValidationError("probe input too small to contain the footprint");
    const std::int64_t c = (out_len - phases) / 2;
    for (std::int64_t t = 0; t < phases; ++t) {
      std::array<std::int64_t, 3> pos{};
      for (int a = 0; a < 3; ++a) pos[static_cast<std::size_t>(a)] = ly.s[static_cast<std::size_t>(a)] / 2;
      pos[static_cast<std::size_t>(off + axis)] = c + t;
      TensorD g(y.shape());
      g[static_cast<std::size_t>((pos[0] * ly.s[1] + pos[1]) * ly.s[2] + pos[2])] = 1.0;
      BackwardOptions bo;
      bo.from_node = seed;
      bo.need_input_grad = true;
      bo.pool_spread = true;
      const TensorD dx = probe.backward(st, g, bo).input;
      const Layout lx = dx.layout();
      std::int64_t lo = probe_size, hi = -1;
      const std::int64_t plane = lx.spatial();
      for (std::int64_t ch = 0; ch < lx.c; ++ch) {
        for (std::int64_t z = 0; z < lx.s[0]; ++z) {
          for (std::int64_t yy = 0; yy < lx.s[1]; ++yy) {
            for (std::int64_t xx = 0; xx < lx.s[2]; ++xx) {
              const double v = dx[static_cast<std::size_t>(ch * plane + (z * lx.s[1] + yy) * lx.s[2] + xx)];
              if (v == 0.0) continue;
              const std::int64_t coord = std::array<std::int64_t, 3>{z, yy, xx}[static_cast<std::size_t>(off + axis)];
              lo = std::min(lo, coord);
              hi = std::max(hi, coord);
            }
          }
        }
      }
      if (hi < 0) throw ValidationError("footprint probe produced no gradient");
      if (lo <= 0 || hi >= probe_size - 1) throw ValidationError("probe input too small to contain the footprint");
      result[static_cast<std::size_t>(axis)] = std::max(result[static_cast<std::size_t>(axis)], hi - lo + 1);
    }
  }
  return result;
}

SpatialSize empirical_footprint(const ArchSpec& spec, const Network& net) {
  return empirical_footprint(net, default_probe_size(spec), spec.period());
}

std::int64_t param_count(const GraphDesc& g) {
  std::int64_t total = 0;
  for (const auto& d : g.layers) {
    std::int64_t k = 1;
    for (int a = 0; a < g.spatial_dims; ++a) k *= d.kernel;
    switch (d.kind) {
      case OpKind::conv:
      case OpKind::upconv: total += k * d.in_channels * d.out_channels + d.out_channels; break;
      case OpKind::batchnorm: total += 2 * static_cast<std::int64_t>(d.out_channels); break;
      default: break;
    }
  }
  return total;
}

std::int64_t param_count(const ArchSpec& spec) { return param_count(unet_graph(spec)); }

std::vector<LayerRow> layer_table(const ArchSpec& spec, std::int64_t reference_input) {
  const GraphDesc g = unet_graph(spec);
  const auto sizes = simulate_sizes(g, SpatialSize(static_cast<std::size_t>(spec.dims), reference_input));
  std::vector<LayerRow> rows;
  rows.push_back({"input", "input", 1, spec.in_channels, spec.in_channels,
                  SpatialSize(static_cast<std::size_t>(spec.dims), reference_input)});
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const auto& d = g.layers[i];
    rows.push_back({d.name, to_string(d.kind), d.kernel, d.in_channels, d.out_channels, sizes[i]});
  }
  return rows;
}

std::string format_layer_table(const std::vector<LayerRow>& rows, bool csv) {
  std::ostringstream os;
  if (csv) {
    os << "name,kind,kernel,in_channels,out_channels,size\n";
    for (const auto& r : rows) {
      os << r.name << ',' << r.kind << ',' << r.kernel << ',' << r.in_channels << ',' << r.out_channels << ','
         << size_string(r.size) << '\n';
    }
    return os.str();
  }
  os << std::left << std::setw(16) << "name" << std::setw(13) << "kind" << std::right << std::setw(7) << "kernel"
     << std::setw(8) << "c_in" << std::setw(8) << "c_out" << "  size\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(16) << r.name << std::setw(13) << r.kind << std::right << std::setw(7) << r.kernel
       << std::setw(8) << r.in_channels << std::setw(8) << r.out_channels << "  " << size_string(r.size) << '\n';
  }
  return os.str();
}

}  // namespace vseg
