#include "vseg/network.hpp"

#include <cmath>
#include <random>

namespace vseg {

std::string to_string(OpKind k) {
  switch (k) {
    case OpKind::conv: return "conv";
    case OpKind::batchnorm: return "batchnorm";
    case OpKind::relu: return "relu";
    case OpKind::maxpool: return "maxpool";
    case OpKind::upconv: return "upconv";
    case OpKind::concat_crop: return "concat_crop";
    case OpKind::softmax: return "softmax";
  }
  return "?";
}

namespace {

template <typename T>
void accumulate(BasicTensor<T>& into, BasicTensor<T>&& g) {
  if (into.empty()) {
    into = std::move(g);
    return;
  }
  if (into.shape() != g.shape()) throw ValidationError("gradient shape mismatch during backward");
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += g[i];
}

}  // namespace

template <typename T>
BasicNetwork<T>::BasicNetwork(int spatial_dims, int in_channels, std::string fingerprint)
    : spatial_dims_(spatial_dims), in_channels_(in_channels), fingerprint_(std::move(fingerprint)) {
  if (spatial_dims < 1 || spatial_dims > 3) throw ValidationError("network needs 1-3 spatial dims");
  if (in_channels < 1) throw ValidationError("network needs at least one input channel");
}

template <typename T>
int BasicNetwork<T>::push(Node<T> n) {
  const int id = static_cast<int>(nodes_.size());
  if (n.input >= id || n.skip >= id) throw ValidationError("node '" + n.name + "' references a later node");
  nodes_.push_back(std::move(n));
  return id;
}

template <typename T>
Shape BasicNetwork<T>::kernel_shape(int a, int b, int k) const {
  Shape s{a, b};
  for (int i = 0; i < spatial_dims_; ++i) s.push_back(k);
  return s;
}

template <typename T>
int BasicNetwork<T>::add_conv(const std::string& name, int input, int cin, int cout, int kernel, Padding padding) {
  Node<T> n;
  n.kind = OpKind::conv;
  n.name = name;
  n.input = input;
  n.in_channels = cin;
  n.out_channels = cout;
  n.kernel = kernel;
  n.padding = padding;
  n.weight = BasicTensor<T>(kernel_shape(cout, cin, kernel));
  n.bias = BasicTensor<T>(Shape{cout});
  return push(std::move(n));
}

template <typename T>
int BasicNetwork<T>::add_batchnorm(const std::string& name, int input, int channels) {
  Node<T> n;
  n.kind = OpKind::batchnorm;
  n.name = name;
  n.input = input;
  n.in_channels = n.out_channels = channels;
  n.gamma = BasicTensor<T>(Shape{channels}, T{1});
  n.beta = BasicTensor<T>(Shape{channels});
  n.running_mean = BasicTensor<T>(Shape{channels});
  n.running_var = BasicTensor<T>(Shape{channels}, T{1});
  return push(std::move(n));
}

template <typename T>
int BasicNetwork<T>::add_relu(const std::string& name, int input) {
  Node<T> n;
  n.kind = OpKind::relu;
  n.name = name;
  n.input = input;
  const int c = input < 0 ? in_channels_ : nodes_.at(static_cast<std::size_t>(input)).out_channels;
  n.in_channels = n.out_channels = c;
  return push(std::move(n));
}

template <typename T>
int BasicNetwork<T>::add_maxpool(const std::string& name, int input) {
  Node<T> n;
  n.kind = OpKind::maxpool;
  n.name = name;
  n.input = input;
  n.kernel = 2;
  const int c = input < 0 ? in_channels_ : nodes_.at(static_cast<std::size_t>(input)).out_channels;
  n.in_channels = n.out_channels = c;
  return push(std::move(n));
}

template <typename T>
int BasicNetwork<T>::add_upconv(const std::string& name, int input, int cin, int cout) {
  Node<T> n;
  n.kind = OpKind::upconv;
  n.name = name;
  n.input = input;
  n.in_channels = cin;
  n.out_channels = cout;
  n.kernel = 2;
  n.weight = BasicTensor<T>(kernel_shape(cin, cout, 2));
  n.bias = BasicTensor<T>(Shape{cout});
  return push(std::move(n));
}

template <typename T>
int BasicNetwork<T>::add_concat_crop(const std::string& name, int skip, int up) {
  Node<T> n;
  n.kind = OpKind::concat_crop;
  n.name = name;
  n.input = up;
  n.skip = skip;
  const int cs = skip < 0 ? in_channels_ : nodes_.at(static_cast<std::size_t>(skip)).out_channels;
  const int cu = up < 0 ? in_channels_ : nodes_.at(static_cast<std::size_t>(up)).out_channels;
  n.in_channels = cs + cu;
  n.out_channels = cs + cu;
  return push(std::move(n));
}

template <typename T>
int BasicNetwork<T>::add_softmax(const std::string& name, int input) {
  Node<T> n;
  n.kind = OpKind::softmax;
  n.name = name;
  n.input = input;
  const int c = input < 0 ? in_channels_ : nodes_.at(static_cast<std::size_t>(input)).out_channels;
  n.in_channels = n.out_channels = c;
  return push(std::move(n));
}

template <typename T>
void BasicNetwork<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& n : nodes_) {
    if (n.kind == OpKind::conv || n.kind == OpKind::upconv) {
      double fan_in = n.in_channels;
      if (n.kind == OpKind::conv) fan_in *= std::pow(static_cast<double>(n.kernel), spatial_dims_);
      const double bound = std::sqrt(6.0 / fan_in);
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& w : n.weight.values()) w = static_cast<T>(dist(rng));
      n.bias.fill(T{0});
    } else if (n.kind == OpKind::batchnorm) {
      n.gamma.fill(T{1});
      n.beta.fill(T{0});
      n.running_mean.fill(T{0});
      n.running_var.fill(T{1});
    }
  }
}

template <typename T>
const BasicTensor<T>& BasicNetwork<T>::forward(const BasicTensor<T>& x, const ForwardOptions& opt,
                                               ForwardState<T>& st) const {
  const Layout L = x.layout();
  if (L.spatial_dims != spatial_dims_) {
    throw ValidationError("network expects " + std::to_string(spatial_dims_) + " spatial dims, got input " +
                          shape_string(x.shape()));
  }
  if (L.c != in_channels_) throw ValidationError("network input channel mismatch");
  if (nodes_.empty()) throw ValidationError("empty network");
  st.mode = opt.mode;
  st.input = x;
  st.outputs.assign(nodes_.size(), {});
  st.bn.assign(nodes_.size(), {});
  st.argmax.assign(nodes_.size(), {});
  st.padding.assign(nodes_.size(), Padding::none);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node<T>& n = nodes_[i];
    const BasicTensor<T>& in = st.output_of(n.input);
    switch (n.kind) {
      case OpKind::conv: {
        Padding p = n.padding;
        if (opt.conv_padding && n.kernel > 1) p = *opt.conv_padding;
        st.padding[i] = p;
        st.outputs[i] = conv_forward(in, n.weight, n.bias, p);
        break;
      }
      case OpKind::batchnorm:
        st.outputs[i] = batchnorm_forward(in, n.gamma, n.beta, n.running_mean, n.running_var, opt.mode, &st.bn[i]);
        break;
      case OpKind::relu: st.outputs[i] = relu_forward(in); break;
      case OpKind::maxpool: {
        auto r = maxpool_forward(in);
        st.outputs[i] = std::move(r.y);
        st.argmax[i] = std::move(r.argmax);
        break;
      }
      case OpKind::upconv: st.outputs[i] = upconv_forward(in, n.weight, n.bias); break;
      case OpKind::concat_crop: st.outputs[i] = concat_crop(st.output_of(n.skip), in); break;
      case OpKind::softmax: st.outputs[i] = softmax_channels(in); break;
    }
  }
  return st.outputs.back();
}

template <typename T>
BasicTensor<T> BasicNetwork<T>::predict(const BasicTensor<T>& x, const ForwardOptions& opt) const {
  // Same evaluation as forward(), but each activation is released after its
  // last consumer so peak memory stays near the widest level.
  const Layout L = x.layout();
  if (L.spatial_dims != spatial_dims_ || L.c != in_channels_) {
    throw ValidationError("network input shape " + shape_string(x.shape()) + " does not match the network");
  }
  if (nodes_.empty()) throw ValidationError("empty network");
  std::vector<int> last_use(nodes_.size(), -1);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].input >= 0) last_use[static_cast<std::size_t>(nodes_[i].input)] = static_cast<int>(i);
    if (nodes_[i].skip >= 0) last_use[static_cast<std::size_t>(nodes_[i].skip)] = static_cast<int>(i);
  }
  std::vector<BasicTensor<T>> out(nodes_.size());
  auto in_of = [&](int node) -> const BasicTensor<T>& { return node < 0 ? x : out[static_cast<std::size_t>(node)]; };
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node<T>& n = nodes_[i];
    const BasicTensor<T>& in = in_of(n.input);
    switch (n.kind) {
      case OpKind::conv: {
        Padding p = n.padding;
        if (opt.conv_padding && n.kernel > 1) p = *opt.conv_padding;
        out[i] = conv_forward(in, n.weight, n.bias, p);
        break;
      }
      case OpKind::batchnorm:
        out[i] = batchnorm_forward(in, n.gamma, n.beta, n.running_mean, n.running_var, opt.mode,
                                   static_cast<BatchNormCache<T>*>(nullptr));
        break;
      case OpKind::relu: out[i] = relu_forward(in); break;
      case OpKind::maxpool: out[i] = std::move(maxpool_forward(in).y); break;
      case OpKind::upconv: out[i] = upconv_forward(in, n.weight, n.bias); break;
      case OpKind::concat_crop: out[i] = concat_crop(in_of(n.skip), in); break;
      case OpKind::softmax: out[i] = softmax_channels(in); break;
    }
    for (int src : {n.input, n.skip}) {
      if (src >= 0 && last_use[static_cast<std::size_t>(src)] == static_cast<int>(i)) {
        out[static_cast<std::size_t>(src)] = BasicTensor<T>();
      }
    }
  }
  return std::move(out.back());
}

template <typename T>
NetworkGradients<T> BasicNetwork<T>::backward(const ForwardState<T>& st, const BasicTensor<T>& seed,
                                              const BackwardOptions& opt) const {
  const int last = opt.from_node < 0 ? static_cast<int>(nodes_.size()) - 1 : opt.from_node;
  if (last >= static_cast<int>(st.outputs.size())) throw ValidationError("backward: no forward state for node");
  if (seed.shape() != st.outputs[static_cast<std::size_t>(last)].shape()) {
    throw ValidationError("backward: seed gradient shape " + shape_string(seed.shape()) + " does not match output " +
                          shape_string(st.outputs[static_cast<std::size_t>(last)].shape()));
  }
  std::vector<BasicTensor<T>> g(nodes_.size());
  BasicTensor<T> g_input;
  g[static_cast<std::size_t>(last)] = seed;

  // Per-node parameter gradients, flattened into parameters() order at the end.
  std::vector<BasicTensor<T>> gw(nodes_.size()), gb(nodes_.size());

  auto route = [&](int target, BasicTensor<T>&& grad) {
    if (target < 0) {
      if (opt.need_input_grad) accumulate(g_input, std::move(grad));
    } else {
      accumulate(g[static_cast<std::size_t>(target)], std::move(grad));
    }
  };
  auto wants = [&](int target) { return target >= 0 || opt.need_input_grad; };

  for (int i = last; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    if (g[ui].empty()) continue;
    const Node<T>& n = nodes_[ui];
    const BasicTensor<T>& in = st.output_of(n.input);
    BasicTensor<T> dy = std::move(g[ui]);
    switch (n.kind) {
      case OpKind::conv: {
        auto r = conv_backward(in, n.weight, st.padding[ui], dy, wants(n.input));
        gw[ui] = std::move(r.dw);
        gb[ui] = std::move(r.db);
        if (wants(n.input)) route(n.input, std::move(r.dx));
        break;
      }
      case OpKind::batchnorm: {
        auto r = batchnorm_backward(in, n.gamma, st.bn[ui], dy);
        gw[ui] = std::move(r.dgamma);
        gb[ui] = std::move(r.dbeta);
        route(n.input, std::move(r.dx));
        break;
      }
      case OpKind::relu: route(n.input, relu_backward(st.outputs[ui], dy)); break;
      case OpKind::maxpool:
        route(n.input, maxpool_backward(in.shape(), st.argmax[ui], dy, opt.pool_spread));
        break;
      case OpKind::upconv: {
        auto r = upconv_backward(in, n.weight, dy, wants(n.input));
        gw[ui] = std::move(r.dw);
        gb[ui] = std::move(r.db);
        if (wants(n.input)) route(n.input, std::move(r.dx));
        break;
      }
      case OpKind::concat_crop: {
        auto r = concat_crop_backward(st.output_of(n.skip).shape(), in.shape(), dy);
        route(n.skip, std::move(r.dskip));
        route(n.input, std::move(r.dup));
        break;
      }
      case OpKind::softmax: route(n.input, softmax_backward(st.outputs[ui], dy)); break;
    }
  }

  NetworkGradients<T> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node<T>& n = nodes_[i];
    if (n.kind == OpKind::conv || n.kind == OpKind::upconv) {
      out.params.push_back(gw[i].empty() ? BasicTensor<T>(n.weight.shape()) : std::move(gw[i]));
      out.params.push_back(gb[i].empty() ? BasicTensor<T>(n.bias.shape()) : std::move(gb[i]));
    } else if (n.kind == OpKind::batchnorm) {
      out.params.push_back(gw[i].empty() ? BasicTensor<T>(n.gamma.shape()) : std::move(gw[i]));
      out.params.push_back(gb[i].empty() ? BasicTensor<T>(n.beta.shape()) : std::move(gb[i]));
    }
  }
  if (opt.need_input_grad) out.input = g_input.empty() ? BasicTensor<T>(st.input.shape()) : std::move(g_input);
  return out;
}

template <typename T>
void BasicNetwork<T>::commit_batch_statistics(const ForwardState<T>& st) {
  if (st.mode != Mode::train) return;
  for (std::size_t i = 0; i < nodes_.size() && i < st.bn.size(); ++i) {
    if (nodes_[i].kind == OpKind::batchnorm) {
      batchnorm_update_running(nodes_[i].running_mean, nodes_[i].running_var, st.bn[i]);
    }
  }
}

template <typename T>
std::vector<BasicTensor<T>*> BasicNetwork<T>::parameters() {
  std::vector<BasicTensor<T>*> p;
  for (auto& n : nodes_) {
    if (n.kind == OpKind::conv || n.kind == OpKind::upconv) {
      p.push_back(&n.weight);
      p.push_back(&n.bias);
    } else if (n.kind == OpKind::batchnorm) {
      p.push_back(&n.gamma);
      p.push_back(&n.beta);
    }
  }
  return p;
}

template <typename T>
std::vector<const BasicTensor<T>*> BasicNetwork<T>::parameters() const {
  std::vector<const BasicTensor<T>*> p;
  for (auto* t : const_cast<BasicNetwork*>(this)->parameters()) p.push_back(t);
  return p;
}

template <typename T>
std::vector<NamedTensor<T>> BasicNetwork<T>::state_tensors() {
  std::vector<NamedTensor<T>> out;
  for (auto& n : nodes_) {
    if (n.kind == OpKind::conv || n.kind == OpKind::upconv) {
      out.push_back({n.name + ".weight", &n.weight});
      out.push_back({n.name + ".bias", &n.bias});
    } else if (n.kind == OpKind::batchnorm) {
      out.push_back({n.name + ".gamma", &n.gamma});
      out.push_back({n.name + ".beta", &n.beta});
      out.push_back({n.name + ".running_mean", &n.running_mean});
      out.push_back({n.name + ".running_var", &n.running_var});
    }
  }
  return out;
}

template <typename T>
std::int64_t BasicNetwork<T>::parameter_count() const {
  std::int64_t c = 0;
  for (const auto* p : parameters()) c += static_cast<std::int64_t>(p->size());
  return c;
}

template class BasicNetwork<float>;
template class BasicNetwork<double>;

}  // namespace vseg
