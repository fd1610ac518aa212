#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include <json.hpp>

#include "pdx/errors.hpp"
#include "pdx/nn.hpp"

namespace pdx {

size_t SampleSet::sample_size() const {
  size_t n = 1;
  for (size_t d : sample_shape) n *= d;
  return n;
}

void SampleSet::validate() const {
  if (sample_shape.empty() || labels.empty())
    throw ValidationError("SampleSet: empty shape or labels");
  if (data.size() != count() * sample_size())
    throw ValidationError("SampleSet: data size disagrees with count * sample size");
  for (float v : data)
    if (!std::isfinite(v)) throw ValidationError("SampleSet: non-finite sample value");
}

namespace {

Tensor<float> gather_batch(const SampleSet& set, const std::vector<size_t>& order, size_t begin,
                           size_t end) {
  size_t ss = set.sample_size();
  std::vector<size_t> shape = {end - begin};
  shape.insert(shape.end(), set.sample_shape.begin(), set.sample_shape.end());
  Tensor<float> batch(shape);
  for (size_t i = begin; i < end; ++i)
    std::memcpy(batch.ptr() + (i - begin) * ss, set.sample(order[i]), ss * sizeof(float));
  return batch;
}

}  // namespace

NetworkState train(const NetworkSpec& spec, const SampleSet& train_set, const TrainConfig& hp,
                   RngSeed seed) {
  train_set.validate();
  if (hp.batch <= 0 || hp.epochs <= 0 || !(hp.lr > 0.0))
    throw ArgumentError("train: batch, epochs and lr must be positive");
  if (train_set.sample_shape != spec.input_shape)
    throw ShapeError("train: dataset sample shape does not match network " + spec.name);

  Net<float> net(spec);
  net.init_params(RngSeed{seed.seed});
  auto params = net.params();
  auto grads = net.grads();
  std::vector<std::vector<float>> m(params.size()), v(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    m[i].assign(params[i]->numel(), 0.0f);
    v[i].assign(params[i]->numel(), 0.0f);
  }

  NetworkState state;
  state.spec = spec;
  state.hp = hp;
  state.seed = seed.seed;

  size_t n = train_set.count();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(derive_seed(seed.seed, "shuffle"), static_cast<uint64_t>(epoch)));
    for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double loss_sum = 0.0;
    size_t correct = 0;
    for (size_t begin = 0; begin < n; begin += static_cast<size_t>(hp.batch)) {
      size_t end = std::min(n, begin + static_cast<size_t>(hp.batch));
      auto batch = gather_batch(train_set, order, begin, end);
      std::vector<int> labels(end - begin);
      for (size_t i = begin; i < end; ++i) labels[i - begin] = train_set.labels[order[i]];

      net.zero_grads();
      double loss = net.loss_and_backward(batch, labels);
      if (!std::isfinite(loss))
        throw TrainingError("training diverged at epoch " + std::to_string(epoch));
      loss_sum += loss * static_cast<double>(end - begin);

      const auto& logits = net.last_logits();
      size_t K = spec.n_classes;
      for (size_t b = 0; b < end - begin; ++b) {
        size_t arg = 0;
        for (size_t k = 1; k < K; ++k)
          if (logits.data[b * K + k] > logits.data[b * K + arg]) arg = k;
        if (static_cast<int>(arg) == labels[b]) ++correct;
      }

      ++step;
      double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(step));
      double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(step));
      for (size_t pi = 0; pi < params.size(); ++pi) {
        float* p = params[pi]->ptr();
        const float* g = grads[pi]->ptr();
        float* mi = m[pi].data();
        float* vi = v[pi].data();
        for (size_t j = 0; j < params[pi]->numel(); ++j) {
          mi[j] = static_cast<float>(hp.beta1 * mi[j] + (1.0 - hp.beta1) * g[j]);
          vi[j] = static_cast<float>(hp.beta2 * vi[j] + (1.0 - hp.beta2) * g[j] * g[j]);
          double mh = mi[j] / bc1, vh = vi[j] / bc2;
          p[j] -= static_cast<float>(hp.lr * mh / (std::sqrt(vh) + hp.adam_eps));
        }
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(n);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    state.log.push_back(rec);
    state.epochs_run = epoch + 1;
    if (rec.train_acc >= hp.stop_at_train_acc) break;
  }

  for (auto* p : net.params()) state.params.push_back(*p);
  return state;
}

Net<float> restore(const NetworkState& state) {
  Net<float> net(state.spec);
  auto params = net.params();
  if (params.size() != state.params.size())
    throw ValidationError("restore: parameter count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i]->numel() != state.params[i].numel())
      throw ValidationError("restore: parameter shape mismatch");
    params[i]->data = state.params[i].data;
  }
  return net;
}

NetworkState snapshot(Net<float>& net) {
  NetworkState state;
  state.spec = net.spec();
  for (auto* p : net.params()) state.params.push_back(*p);
  return state;
}

EvalResult evaluate(const NetworkState& state, const SampleSet& eval_set,
                    const std::vector<int>* label_map) {
  eval_set.validate();
  if (eval_set.sample_shape != state.spec.input_shape)
    throw ShapeError("evaluate: dataset sample shape does not match network " + state.spec.name);
  if (label_map && label_map->size() != state.spec.n_classes)
    throw ArgumentError("evaluate: label map must cover every class");

  Net<float> net = restore(state);
  size_t K = state.spec.n_classes;
  int max_label = static_cast<int>(K) - 1;
  for (int lb : eval_set.labels) max_label = std::max(max_label, lb);

  EvalResult res;
  res.confusion.assign(static_cast<size_t>(max_label) + 1, std::vector<int>(K, 0));
  std::vector<size_t> order(eval_set.count());
  std::iota(order.begin(), order.end(), 0);
  size_t correct = 0;
  for (size_t begin = 0; begin < eval_set.count(); begin += 64) {
    size_t end = std::min(eval_set.count(), begin + 64);
    auto batch = gather_batch(eval_set, order, begin, end);
    auto logits = net.forward(batch);
    for (size_t b = 0; b < end - begin; ++b) {
      size_t arg = 0;
      for (size_t k = 1; k < K; ++k)
        if (logits.data[b * K + k] > logits.data[b * K + arg]) arg = k;
      int truth = eval_set.labels[begin + b];
      if (truth < 0) throw ArgumentError("evaluate: negative label");
      res.confusion[static_cast<size_t>(truth)][arg] += 1;
      int mapped = label_map ? (*label_map)[arg] : static_cast<int>(arg);
      if (mapped == truth) ++correct;
    }
  }
  res.accuracy = static_cast<double>(correct) / static_cast<double>(eval_set.count());
  return res;
}

// ---- persistence ----------------------------------------------------------

namespace {

void put_u32(std::FILE* f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  std::fwrite(b, 1, 4, f);
}

uint32_t get_u32(std::FILE* f, const std::string& path) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) {
    std::fclose(f);
    throw IoError("truncated checkpoint: " + path);
  }
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const NetworkState& state) {
  nlohmann::json j;
  j["spec"] = nlohmann::json::parse(state.spec.to_json());
  j["hp"] = {{"lr", state.hp.lr},       {"beta1", state.hp.beta1},
             {"beta2", state.hp.beta2}, {"adam_eps", state.hp.adam_eps},
             {"epochs", state.hp.epochs}, {"batch", state.hp.batch},
             {"stop_at_train_acc", state.hp.stop_at_train_acc}};
  j["seed"] = state.seed;
  j["epochs_run"] = state.epochs_run;
  j["log"] = nlohmann::json::array();
  for (const auto& r : state.log)
    j["log"].push_back({{"epoch", r.epoch}, {"loss", r.loss}, {"train_acc", r.train_acc}});
  std::string meta = j.dump();

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open for writing: " + path);
  std::fwrite("NNCK", 1, 4, f);
  put_u32(f, static_cast<uint32_t>(meta.size()));
  std::fwrite(meta.data(), 1, meta.size(), f);
  for (const auto& t : state.params)
    for (float x : t.data) {
      uint32_t bits;
      std::memcpy(&bits, &x, 4);
      put_u32(f, bits);
    }
  if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

NetworkState load_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open: " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "NNCK", 4) != 0) {
    std::fclose(f);
    throw IoError("not a checkpoint file: " + path);
  }
  uint32_t meta_len = get_u32(f, path);
  std::string meta(meta_len, '\0');
  if (std::fread(meta.data(), 1, meta_len, f) != meta_len) {
    std::fclose(f);
    throw IoError("truncated checkpoint: " + path);
  }

  NetworkState state;
  try {
    nlohmann::json j = nlohmann::json::parse(meta);
    state.spec = NetworkSpec::from_json(j.at("spec").dump());
    const auto& h = j.at("hp");
    state.hp.lr = h.at("lr").get<double>();
    state.hp.beta1 = h.at("beta1").get<double>();
    state.hp.beta2 = h.at("beta2").get<double>();
    state.hp.adam_eps = h.at("adam_eps").get<double>();
    state.hp.epochs = h.at("epochs").get<int>();
    state.hp.batch = h.at("batch").get<int>();
    state.hp.stop_at_train_acc = h.at("stop_at_train_acc").get<double>();
    state.seed = j.at("seed").get<uint64_t>();
    state.epochs_run = j.at("epochs_run").get<int>();
    for (const auto& r : j.at("log")) {
      EpochRecord rec;
      rec.epoch = r.at("epoch").get<int>();
      rec.loss = r.at("loss").get<double>();
      rec.train_acc = r.at("train_acc").get<double>();
      state.log.push_back(rec);
    }
  } catch (const nlohmann::json::exception& e) {
    std::fclose(f);
    throw IoError(std::string("bad checkpoint metadata: ") + e.what());
  }

  Net<float> probe(state.spec);
  for (auto* p : probe.params()) {
    Tensor<float> t(p->shape);
    for (auto& x : t.data) {
      uint32_t bits = get_u32(f, path);
      std::memcpy(&x, &bits, 4);
    }
    state.params.push_back(std::move(t));
  }
  unsigned char extra;
  if (std::fread(&extra, 1, 1, f) == 1) {
    std::fclose(f);
    throw IoError("checkpoint has trailing bytes: " + path);
  }
  std::fclose(f);
  return state;
}

void save_training_log(const std::string& path, const std::vector<EpochRecord>& log) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open for writing: " + path);
  std::fprintf(f, "epoch,loss,train_acc\n");
  for (const auto& r : log) std::fprintf(f, "%d,%.17g,%.17g\n", r.epoch, r.loss, r.train_acc);
  if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

}  // namespace pdx
