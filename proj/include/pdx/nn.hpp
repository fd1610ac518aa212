#pragma once
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pdx/rng.hpp"
#include "pdx/signal.hpp"

namespace pdx {

template <typename T>
struct Tensor {
  std::vector<size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> s) : shape(std::move(s)) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    data.assign(n, T(0));
  }
  size_t numel() const { return data.size(); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
};

enum class LayerKind { conv1d, conv2d, maxpool1d, maxpool2d, relu, gap, linear, residual_block };

std::string to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  size_t out_channels = 0;  // conv/linear/residual
  size_t kh = 1, kw = 1;    // kernel (kh fixed at 1 for 1d kinds)
  size_t sh = 1, sw = 1;    // stride
  size_t ph = 0, pw = 0;    // zero padding
};

struct NetworkSpec {
  std::string name;
  std::vector<size_t> input_shape;  // (C, L) for 1d nets, (C, H, W) for 2d nets
  std::vector<LayerSpec> layers;
  size_t n_classes = 4;

  bool is_2d() const { return input_shape.size() == 3; }
  std::string to_json() const;
  static NetworkSpec from_json(const std::string& text);
};

// per-layer output shapes (without the batch dimension); throws ShapeError
// naming the offending layer
std::vector<std::vector<size_t>> infer_shapes(const NetworkSpec& spec);

// the ten standard architectures by name, e.g. "CNN1D(341@100)", "CNN2D(3x3@1)",
// "ResNet18(341@100)", "ResNet34(3x3@1)"
NetworkSpec make_network(const std::string& name, size_t in_channels);
std::vector<std::string> catalog_names();

template <typename T>
class LayerBase;

// Feed-forward network with exact backpropagation.  Instantiated for float
// (production) and double (finite-difference shadow checks).
template <typename T>
class Net {
 public:
  explicit Net(NetworkSpec spec);
  ~Net();
  Net(Net&&) noexcept;
  Net& operator=(Net&&) noexcept;

  const NetworkSpec& spec() const { return spec_; }

  void init_params(RngSeed seed);  // Kaiming-uniform weights, zero biases
  std::vector<Tensor<T>*> params();
  std::vector<Tensor<T>*> grads();
  void zero_grads();

  // x is (N, C, L) or (N, C, H, W); returns logits (N, n_classes)
  Tensor<T> forward(const Tensor<T>& x, bool keep_cache = false);

  // forward + mean cross-entropy + full backward; gradients accumulate
  double loss_and_backward(const Tensor<T>& x, const std::vector<int>& labels);

  // activation maps feeding GAP and the logit gradient arriving there, for one
  // sample; both shaped (C, spatial...)
  struct CamPair {
    Tensor<T> activation;
    Tensor<T> gradient;
    std::vector<size_t> map_shape;  // (L) or (H, W)
  };
  CamPair cam_maps(const Tensor<T>& x_single, int class_index);

  // logits saved by the last loss_and_backward call (for training accuracy)
  const Tensor<T>& last_logits() const { return last_logits_; }

 private:
  NetworkSpec spec_;
  std::vector<std::unique_ptr<LayerBase<T>>> layers_;
  Tensor<T> last_logits_;
};

extern template class Net<float>;
extern template class Net<double>;

std::vector<double> softmax(const std::vector<double>& logits);

// ---- training -------------------------------------------------------------

struct TrainConfig {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  int epochs = 60;
  int batch = 64;
  double stop_at_train_acc = 2.0;  // > 1 disables early stopping
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
};

// contiguous sample store: data holds count blocks of prod(sample_shape) floats
struct SampleSet {
  std::vector<size_t> sample_shape;  // (C, L) or (C, H, W)
  std::vector<float> data;
  std::vector<int> labels;

  size_t count() const { return labels.size(); }
  size_t sample_size() const;
  const float* sample(size_t i) const { return data.data() + i * sample_size(); }
  void validate() const;
};

struct NetworkState {
  NetworkSpec spec;
  std::vector<Tensor<float>> params;
  TrainConfig hp;
  uint64_t seed = 0;
  int epochs_run = 0;
  std::vector<EpochRecord> log;
};

NetworkState train(const NetworkSpec& spec, const SampleSet& train_set, const TrainConfig& hp,
                   RngSeed seed);

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::vector<int>> confusion;  // rows: true label, cols: raw predicted
};

// label_map (optional) sends each predicted class index to the label space of
// the evaluation set, e.g. collapsing both cylinder severities onto one fault
EvalResult evaluate(const NetworkState& state, const SampleSet& eval_set,
                    const std::vector<int>* label_map = nullptr);

Net<float> restore(const NetworkState& state);
NetworkState snapshot(Net<float>& net);  // with empty hp/log

void save_checkpoint(const std::string& path, const NetworkState& state);
NetworkState load_checkpoint(const std::string& path);
void save_training_log(const std::string& path, const std::vector<EpochRecord>& log);

}  // namespace pdx
