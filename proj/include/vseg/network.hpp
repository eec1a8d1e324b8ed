#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vseg/layers.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

enum class OpKind { conv, batchnorm, relu, maxpool, upconv, concat_crop, softmax };

std::string to_string(OpKind k);

/// One operation of a network graph. `input` and `skip` index earlier nodes;
/// -1 denotes the network input.
template <typename T>
struct Node {
  OpKind kind = OpKind::relu;
  std::string name;
  int input = -1;
  int skip = -1;  // concat_crop only
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;  // per spatial axis (conv); 2 for upconv and maxpool
  Padding padding = Padding::none;

  BasicTensor<T> weight;  // conv (Cout, Cin, k...) or upconv (Cin, Cout, 2...)
  BasicTensor<T> bias;
  BasicTensor<T> gamma;  // batchnorm
  BasicTensor<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
};

struct ForwardOptions {
  Mode mode = Mode::infer;
  /// Overrides the padding of every spatial (kernel > 1) convolution.
  std::optional<Padding> conv_padding;
};

struct BackwardOptions {
  /// Node whose output receives the seed gradient; -1 selects the last node.
  int from_node = -1;
  bool need_input_grad = false;
  /// Max-pool gradients reach every window element (footprint probing).
  bool pool_spread = false;
};

/// Activations and caches retained by a forward pass for the backward pass.
template <typename T>
struct ForwardState {
  Mode mode = Mode::infer;
  BasicTensor<T> input;
  std::vector<BasicTensor<T>> outputs;
  std::vector<BatchNormCache<T>> bn;
  std::vector<std::vector<std::uint8_t>> argmax;
  std::vector<Padding> padding;

  const BasicTensor<T>& output() const { return outputs.back(); }
  const BasicTensor<T>& output_of(int node) const { return node < 0 ? input : outputs[static_cast<std::size_t>(node)]; }
};

template <typename T>
struct NetworkGradients {
  std::vector<BasicTensor<T>> params;  // same order as BasicNetwork::parameters()
  BasicTensor<T> input;                // only with need_input_grad
};

/// Parameter or buffer with a stable name, for checkpoints.
template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T>* tensor;
};

/// Directed acyclic graph of layer operations evaluated in insertion order.
///
/// Forward passes are const and keep no state inside the network, so one
/// network can serve concurrent inference. Batch-norm running statistics
/// change only through commit_batch_statistics.
template <typename T>
class BasicNetwork {
 public:
  BasicNetwork() = default;
  BasicNetwork(int spatial_dims, int in_channels, std::string fingerprint);

  int spatial_dims() const { return spatial_dims_; }
  int in_channels() const { return in_channels_; }
  const std::string& fingerprint() const { return fingerprint_; }
  const std::vector<Node<T>>& nodes() const { return nodes_; }
  std::vector<Node<T>>& nodes() { return nodes_; }

  int add_conv(const std::string& name, int input, int cin, int cout, int kernel, Padding padding);
  int add_batchnorm(const std::string& name, int input, int channels);
  int add_relu(const std::string& name, int input);
  int add_maxpool(const std::string& name, int input);
  int add_upconv(const std::string& name, int input, int cin, int cout);
  int add_concat_crop(const std::string& name, int skip, int up);
  int add_softmax(const std::string& name, int input);

  /// He-uniform weights (bound sqrt(6 / fan_in)), zero biases, unit gamma,
  /// zero beta, running statistics (0, 1).
  void initialize(std::uint64_t seed);

  const BasicTensor<T>& forward(const BasicTensor<T>& x, const ForwardOptions& opt, ForwardState<T>& st) const;
  BasicTensor<T> predict(const BasicTensor<T>& x, const ForwardOptions& opt = {}) const;

  NetworkGradients<T> backward(const ForwardState<T>& st, const BasicTensor<T>& seed,
                               const BackwardOptions& opt = {}) const;

  /// Folds the batch statistics of a train-mode pass into the running stats.
  void commit_batch_statistics(const ForwardState<T>& st);

  std::vector<BasicTensor<T>*> parameters();
  std::vector<const BasicTensor<T>*> parameters() const;
  /// Parameters plus batch-norm running statistics.
  std::vector<NamedTensor<T>> state_tensors();
  std::int64_t parameter_count() const;

  template <typename U>
  BasicNetwork<U> cast() const {
    BasicNetwork<U> out(spatial_dims_, in_channels_, fingerprint_);
    for (const auto& n : nodes_) {
      Node<U> m;
      m.kind = n.kind;
      m.name = n.name;
      m.input = n.input;
      m.skip = n.skip;
      m.in_channels = n.in_channels;
      m.out_channels = n.out_channels;
      m.kernel = n.kernel;
      m.padding = n.padding;
      m.weight = n.weight.template cast<U>();
      m.bias = n.bias.template cast<U>();
      m.gamma = n.gamma.template cast<U>();
      m.beta = n.beta.template cast<U>();
      m.running_mean = n.running_mean.template cast<U>();
      m.running_var = n.running_var.template cast<U>();
      out.nodes().push_back(std::move(m));
    }
    return out;
  }

 private:
  int push(Node<T> n);
  Shape kernel_shape(int a, int b, int k) const;

  int spatial_dims_ = 2;
  int in_channels_ = 1;
  std::string fingerprint_;
  std::vector<Node<T>> nodes_;
};

using Network = BasicNetwork<float>;
using NetworkD = BasicNetwork<double>;

}  // namespace vseg
