#include "pdx/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <utility>

#include "pdx/errors.hpp"
#include "pdx/hash.hpp"
#include "pdx/rng.hpp"
#include "pdx/wavedecomp.hpp"

namespace pdx {

using nlohmann::json;

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::uncalibrated_p: return "uncalibrated-p";
    case DatasetKind::calibrated_p: return "calibrated-p";
    case DatasetKind::flow_q: return "flow-q";
  }
  return "?";
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::pressure_time: return "pressure-time";
    case Modality::pressure_sst: return "pressure-sst";
    case Modality::flow_time: return "flow-time";
    case Modality::flow_sst: return "flow-sst";
  }
  return "?";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "uncalibrated-p") return DatasetKind::uncalibrated_p;
  if (s == "calibrated-p") return DatasetKind::calibrated_p;
  if (s == "flow-q") return DatasetKind::flow_q;
  throw ArgumentError("unknown dataset kind: " + s);
}

Modality modality_from_string(const std::string& s) {
  if (s == "pressure-time") return Modality::pressure_time;
  if (s == "pressure-sst") return Modality::pressure_sst;
  if (s == "flow-time") return Modality::flow_time;
  if (s == "flow-sst") return Modality::flow_sst;
  throw ArgumentError("unknown modality: " + s);
}

bool is_sst(Modality m) { return m == Modality::pressure_sst || m == Modality::flow_sst; }
bool is_flow(Modality m) { return m == Modality::flow_time || m == Modality::flow_sst; }

PipelineParams perturb_params(const PipelineParams& p, double frac, RngSeed seed) {
  if (frac < 0.0) throw ArgumentError("perturb_params: frac must not be negative");
  Rng rng(seed.seed);
  PipelineParams out = p;
  for (auto& seg : out.segments) {
    seg.wave_speed *= 1.0 + rng.uniform(-frac, frac);
    seg.diameter *= 1.0 + rng.uniform(-frac, frac);
  }
  return out;
}

void ExperimentConfig::validate() const {
  plant_params.validate();
  prior_params.validate();
  if (calibrated) calibrated->validate();
  pump.validate();
  if (plant_params.to_json() == prior_params.to_json())
    throw ArgumentError("experiment: prior must differ from the plant");
  if (train_faults.size() != 4) throw ArgumentError("experiment: four training fault states");
  const HealthState want[4] = {HealthState::H, HealthState::S, HealthState::C1, HealthState::C2};
  for (size_t i = 0; i < 4; ++i) {
    if (train_faults[i].label != want[i])
      throw ArgumentError("experiment: training faults must be H, S, C1, C2 in order");
    train_faults[i].validate();
  }
  if (plant_fault.label != HealthState::C)
    throw ArgumentError("experiment: plant fault must be labeled C");
  plant_fault.validate();
  if (train_per_class <= 0 || plant_windows_time <= 0 || plant_windows_sst <= 0)
    throw ArgumentError("experiment: dataset sizes must be positive");
  // the settling analysis wants >= 0.3 s of discarded start-up transient
  if (washout_revs < 5) throw ArgumentError("experiment: washout_revs must be at least 5");
  if (!(sample_rate > 0.0)) throw ArgumentError("experiment: sample_rate must be positive");
  if (sensor_noise_frac < 0.0 || augment_noise_frac < 0.0)
    throw ArgumentError("experiment: noise fractions must not be negative");
  if (!(pressure_scale_ref > 0.0 && flow_scale_ref > 0.0))
    throw ArgumentError("experiment: reference scales must be positive");
  sst.validate(sample_rate);
  if (n_runs < 1) throw ArgumentError("experiment: n_runs must be at least 1");
  if (collapse_pressure.size() != 4 || collapse_flow.size() != 4)
    throw ArgumentError("experiment: label collapse maps need one entry per training class");
  if (hp.epochs <= 0 || hp.batch <= 0 || !(hp.lr > 0.0))
    throw ArgumentError("experiment: bad training hyperparameters");
}

ExperimentConfig ExperimentConfig::secret_plant(uint64_t seed) {
  ExperimentConfig cfg;
  cfg.plant_params = PipelineParams::default_plant();
  cfg.prior_params = perturb_params(cfg.plant_params, 0.08, {derive_seed(seed, "prior")});
  cfg.train_faults = {default_fault(HealthState::H), default_fault(HealthState::S),
                      default_fault(HealthState::C1), default_fault(HealthState::C2)};
  cfg.plant_fault = plant_cylinder_fault();
  cfg.sst.wavelet = Wavelet::morse;
  // the Morse envelope at the band floor must fit twice into a two-revolution
  // window; 50 Hz leaves margin while keeping every shaft-rate sideband of the
  // pumping harmonics inside the image
  cfg.sst.freq_min = 50.0;
  cfg.architectures = catalog_names();
  cfg.kinds = {DatasetKind::uncalibrated_p, DatasetKind::calibrated_p, DatasetKind::flow_q};
  cfg.base_seed = seed;
  cfg.hp.epochs = 60;
  cfg.hp.batch = 64;
  cfg.hp.lr = 1e-3;
  cfg.hp.stop_at_train_acc = 1.0;  // the plateau, not a fixed epoch count
  return cfg;
}

namespace {

json fault_to_json(const FaultSpec& f) {
  return json{{"label", to_string(f.label)},
              {"dip_depth", f.dip_depth},
              {"dip_width", f.dip_width},
              {"dip_phases", f.dip_phases}};
}

FaultSpec fault_from_json(const json& j) {
  FaultSpec f;
  f.label = health_state_from_string(j.at("label").get<std::string>());
  f.dip_depth = j.at("dip_depth").get<double>();
  f.dip_width = j.at("dip_width").get<double>();
  f.dip_phases = j.at("dip_phases").get<std::vector<double>>();
  return f;
}

json sst_to_json(const SSTConfig& c) {
  return json{{"wavelet", c.wavelet == Wavelet::morse ? "morse" : "analytic_morlet"},
              {"morse_beta", c.morse_beta},
              {"morse_gamma", c.morse_gamma},
              {"voices_per_octave", c.voices_per_octave},
              {"freq_min", c.freq_min},
              {"freq_max", c.freq_max},
              {"epsilon", c.epsilon}};
}

SSTConfig sst_from_json(const json& j, SSTConfig c) {
  if (j.contains("wavelet")) {
    auto w = j.at("wavelet").get<std::string>();
    if (w == "morse") c.wavelet = Wavelet::morse;
    else if (w == "analytic_morlet") c.wavelet = Wavelet::analytic_morlet;
    else throw ArgumentError("unknown wavelet: " + w);
  }
  if (j.contains("morse_beta")) c.morse_beta = j.at("morse_beta").get<double>();
  if (j.contains("morse_gamma")) c.morse_gamma = j.at("morse_gamma").get<double>();
  if (j.contains("voices_per_octave")) c.voices_per_octave = j.at("voices_per_octave").get<int>();
  if (j.contains("freq_min")) c.freq_min = j.at("freq_min").get<double>();
  if (j.contains("freq_max")) c.freq_max = j.at("freq_max").get<double>();
  if (j.contains("epsilon")) c.epsilon = j.at("epsilon").get<double>();
  return c;
}

}  // namespace

std::string ExperimentConfig::to_json() const {
  json j;
  j["plant_params"] = json::parse(plant_params.to_json());
  j["prior_params"] = json::parse(prior_params.to_json());
  if (calibrated) j["calibrated"] = json::parse(calibrated->to_json());
  j["pump"] = {{"n_pistons", pump.n_pistons},
               {"speed", pump.speed},
               {"piston_area", pump.piston_area},
               {"pitch_radius", pump.pitch_radius},
               {"swash_angle", pump.swash_angle},
               {"backflow_gain", pump.backflow_gain},
               {"backflow_width", pump.backflow_width}};
  json faults = json::array();
  for (const auto& f : train_faults) faults.push_back(fault_to_json(f));
  j["train_faults"] = faults;
  j["plant_fault"] = fault_to_json(plant_fault);
  j["modality"] = to_string(modality);
  j["train_per_class"] = train_per_class;
  j["plant_windows_time"] = plant_windows_time;
  j["plant_windows_sst"] = plant_windows_sst;
  j["washout_revs"] = washout_revs;
  j["sample_rate"] = sample_rate;
  j["sensor_noise_frac"] = sensor_noise_frac;
  j["augment_noise_frac"] = augment_noise_frac;
  j["augment_cyclic_shift"] = augment_cyclic_shift;
  j["pressure_scale_ref"] = pressure_scale_ref;
  j["flow_scale_ref"] = flow_scale_ref;
  j["sst"] = sst_to_json(sst);
  j["architectures"] = architectures;
  json kk = json::array();
  for (auto k : kinds) kk.push_back(to_string(k));
  j["kinds"] = kk;
  j["n_runs"] = n_runs;
  j["base_seed"] = base_seed;
  j["hp"] = {{"lr", hp.lr},
             {"beta1", hp.beta1},
             {"beta2", hp.beta2},
             {"adam_eps", hp.adam_eps},
             {"epochs", hp.epochs},
             {"batch", hp.batch},
             {"stop_at_train_acc", hp.stop_at_train_acc}};
  j["collapse_pressure"] = collapse_pressure;
  j["collapse_flow"] = collapse_flow;
  return j.dump(2);
}

// Partial files are welcome: parsing starts from the default secret-plant
// study (seeded by base_seed if given) and overrides whatever keys appear.
ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("experiment config: ") + e.what());
  }
  try {
    ExperimentConfig cfg = secret_plant(j.value("base_seed", uint64_t{0}));
    if (j.contains("plant_params"))
      cfg.plant_params = PipelineParams::from_json(j.at("plant_params").dump());
    if (j.contains("prior_params"))
      cfg.prior_params = PipelineParams::from_json(j.at("prior_params").dump());
    if (j.contains("calibrated"))
      cfg.calibrated = PipelineParams::from_json(j.at("calibrated").dump());
    if (j.contains("pump")) {
      const auto& p = j.at("pump");
      if (p.contains("n_pistons")) cfg.pump.n_pistons = p.at("n_pistons").get<int>();
      if (p.contains("speed")) cfg.pump.speed = p.at("speed").get<double>();
      if (p.contains("piston_area")) cfg.pump.piston_area = p.at("piston_area").get<double>();
      if (p.contains("pitch_radius")) cfg.pump.pitch_radius = p.at("pitch_radius").get<double>();
      if (p.contains("swash_angle")) cfg.pump.swash_angle = p.at("swash_angle").get<double>();
      if (p.contains("backflow_gain")) cfg.pump.backflow_gain = p.at("backflow_gain").get<double>();
      if (p.contains("backflow_width"))
        cfg.pump.backflow_width = p.at("backflow_width").get<double>();
    }
    if (j.contains("train_faults")) {
      cfg.train_faults.clear();
      for (const auto& f : j.at("train_faults")) cfg.train_faults.push_back(fault_from_json(f));
    }
    if (j.contains("plant_fault")) cfg.plant_fault = fault_from_json(j.at("plant_fault"));
    if (j.contains("modality"))
      cfg.modality = modality_from_string(j.at("modality").get<std::string>());
    if (j.contains("train_per_class")) cfg.train_per_class = j.at("train_per_class").get<int>();
    if (j.contains("plant_windows_time"))
      cfg.plant_windows_time = j.at("plant_windows_time").get<int>();
    if (j.contains("plant_windows_sst")) cfg.plant_windows_sst = j.at("plant_windows_sst").get<int>();
    if (j.contains("washout_revs")) cfg.washout_revs = j.at("washout_revs").get<int>();
    if (j.contains("sample_rate")) cfg.sample_rate = j.at("sample_rate").get<double>();
    if (j.contains("sensor_noise_frac"))
      cfg.sensor_noise_frac = j.at("sensor_noise_frac").get<double>();
    if (j.contains("augment_noise_frac"))
      cfg.augment_noise_frac = j.at("augment_noise_frac").get<double>();
    if (j.contains("augment_cyclic_shift"))
      cfg.augment_cyclic_shift = j.at("augment_cyclic_shift").get<bool>();
    if (j.contains("pressure_scale_ref"))
      cfg.pressure_scale_ref = j.at("pressure_scale_ref").get<double>();
    if (j.contains("flow_scale_ref")) cfg.flow_scale_ref = j.at("flow_scale_ref").get<double>();
    if (j.contains("sst")) cfg.sst = sst_from_json(j.at("sst"), cfg.sst);
    if (j.contains("architectures"))
      cfg.architectures = j.at("architectures").get<std::vector<std::string>>();
    if (j.contains("kinds")) {
      cfg.kinds.clear();
      for (const auto& k : j.at("kinds"))
        cfg.kinds.push_back(dataset_kind_from_string(k.get<std::string>()));
    }
    if (j.contains("n_runs")) cfg.n_runs = j.at("n_runs").get<int>();
    if (j.contains("base_seed")) cfg.base_seed = j.at("base_seed").get<uint64_t>();
    if (j.contains("hp")) {
      const auto& h = j.at("hp");
      if (h.contains("lr")) cfg.hp.lr = h.at("lr").get<double>();
      if (h.contains("beta1")) cfg.hp.beta1 = h.at("beta1").get<double>();
      if (h.contains("beta2")) cfg.hp.beta2 = h.at("beta2").get<double>();
      if (h.contains("adam_eps")) cfg.hp.adam_eps = h.at("adam_eps").get<double>();
      if (h.contains("epochs")) cfg.hp.epochs = h.at("epochs").get<int>();
      if (h.contains("batch")) cfg.hp.batch = h.at("batch").get<int>();
      if (h.contains("stop_at_train_acc"))
        cfg.hp.stop_at_train_acc = h.at("stop_at_train_acc").get<double>();
    }
    if (j.contains("collapse_pressure"))
      cfg.collapse_pressure = j.at("collapse_pressure").get<std::vector<int>>();
    if (j.contains("collapse_flow"))
      cfg.collapse_flow = j.at("collapse_flow").get<std::vector<int>>();
    return cfg;
  } catch (const json::exception& e) {
    throw IoError(std::string("experiment config: ") + e.what());
  }
}

void LabeledDataset::validate() const {
  samples.validate();
  if (provenance.size() != samples.count())
    throw ShapeError("dataset: provenance must cover every sample");
  size_t dims = samples.sample_shape.size();
  if (is_sst(modality)) {
    if (dims != 3 || samples.sample_shape[1] != 256 || samples.sample_shape[2] != 256)
      throw ShapeError("dataset: sst samples must be (C, 256, 256)");
  } else if (dims != 2) {
    throw ShapeError("dataset: time samples must be (C, W)");
  }
  if (is_flow(modality) && samples.sample_shape[0] != 1)
    throw ShapeError("dataset: flow samples carry a single channel");
  int max_label = role == "plant-test" ? 2 : 3;
  for (int l : samples.labels)
    if (l < 0 || l > max_label) throw RangeError("dataset: label out of range for " + role);
}

namespace {

int samples_per_rev(const ExperimentConfig& cfg) {
  return static_cast<int>(std::llround(cfg.sample_rate * 60.0 / cfg.pump.speed));
}

int window_revs(Modality m) { return is_sst(m) ? 2 : 1; }

std::vector<double> slice(const std::vector<double>& v, size_t i0, size_t n) {
  return std::vector<double>(v.begin() + static_cast<long>(i0),
                             v.begin() + static_cast<long>(i0 + n));
}

void remove_mean(std::vector<double>& w) {
  double m = mean(w);
  for (double& v : w) v -= m;
}

Spectrogram window_spectrogram(std::vector<double> w, double fs, const SSTConfig& sst) {
  remove_mean(w);
  Signal s;
  s.samples = std::move(w);
  s.sample_rate = fs;
  s.unit = "";
  return synchrosqueeze(cwt(s, sst), sst);
}

void push_time_sample(SampleSet& set, const std::vector<std::vector<double>>& channels,
                      double scale_ref) {
  for (const auto& ch : channels) {
    double m = mean(ch);
    for (double v : ch) set.data.push_back(static_cast<float>((v - m) / scale_ref));
  }
}

void push_sst_sample(SampleSet& set, const std::vector<std::vector<double>>& channels, double fs,
                     const SSTConfig& sst, double pump_freq, double scale_k) {
  std::vector<SpectroImage> imgs;
  imgs.reserve(channels.size());
  for (const auto& ch : channels)
    imgs.push_back(postprocess_spectrogram(window_spectrogram(ch, fs, sst), pump_freq, scale_k));
  SpectroImage stacked = imgs.size() == 1 ? imgs.front() : stack_images(imgs);
  set.data.insert(set.data.end(), stacked.pixels.begin(), stacked.pixels.end());
}

// the per-dataset exponential compression constant, derived from the
// un-augmented seed (or leading) windows of every class
double dataset_scale_k(const std::vector<std::vector<std::vector<double>>>& class_channels,
                       double fs, const SSTConfig& sst) {
  std::vector<Spectrogram> grams;
  for (const auto& channels : class_channels)
    for (const auto& ch : channels) grams.push_back(window_spectrogram(ch, fs, sst));
  std::vector<const Spectrogram*> refs;
  refs.reserve(grams.size());
  for (const auto& g : grams) refs.push_back(&g);
  return suggest_scale_k(refs);
}

uint64_t dataset_fingerprint(const LabeledDataset& d, const std::string& cfg_json) {
  Fnv64 h;
  h.update_str(cfg_json);
  h.update_str(d.role);
  h.update_str(to_string(d.modality));
  h.update_pod(d.seed);
  h.update_vec(d.samples.sample_shape);
  h.update_vec(d.samples.labels);
  h.update_vec(d.samples.data);
  for (const auto& p : d.provenance) {
    h.update_str(p.source);
    h.update_pod(p.state);
    h.update_pod(p.shift);
    h.update_pod(p.window);
  }
  return h.digest();
}

}  // namespace

LabeledDataset build_training_dataset(const ExperimentConfig& cfg, DatasetKind kind,
                                      RngSeed seed) {
  cfg.validate();
  const Modality m = cfg.modality;
  if (is_flow(m) != (kind == DatasetKind::flow_q))
    throw ArgumentError("dataset: " + to_string(kind) + " cannot produce " + to_string(m));
  const PipelineParams* line = nullptr;
  if (kind == DatasetKind::uncalibrated_p) line = &cfg.prior_params;
  if (kind == DatasetKind::calibrated_p) {
    if (!cfg.calibrated)
      throw DependencyError("dataset: calibrated-p needs a calibration result first");
    line = &*cfg.calibrated;
  }

  const double fs = cfg.sample_rate;
  const int rev = samples_per_rev(cfg);
  const int wrevs = window_revs(m);
  const int W = rev * wrevs;

  // one settled seed window per class; the line response needs washout, the
  // pump source is periodic from the start
  std::vector<std::vector<std::vector<double>>> seeds;  // [class][channel][W]
  for (const auto& f : cfg.train_faults) {
    std::vector<std::vector<double>> channels;
    if (kind == DatasetKind::flow_q) {
      auto src = generate_source(cfg.pump, f, fs, wrevs);
      channels.push_back(slice(src.signal.samples, 0, W));
    } else {
      int n_revs = cfg.washout_revs + wrevs;
      auto src = generate_source(cfg.pump, f, fs, n_revs);
      auto meas = simulate_sensors(*line, src.signal, n_revs * rev / fs, line->sensors);
      for (const auto& c : meas.channels)
        channels.push_back(slice(c.samples, static_cast<size_t>(cfg.washout_revs) * rev, W));
    }
    seeds.push_back(std::move(channels));
  }
  const size_t C = seeds.front().size();

  // augmentation noise level, referenced to the estimated sensor noise on the
  // healthy ripple
  std::vector<double> sigma(C);
  for (size_t c = 0; c < C; ++c) {
    auto w = seeds[0][c];
    remove_mean(w);
    sigma[c] = cfg.augment_noise_frac * cfg.sensor_noise_frac * rms(w);
  }

  double scale_k = 0.0;
  if (is_sst(m)) scale_k = dataset_scale_k(seeds, fs, cfg.sst);

  LabeledDataset d;
  d.modality = m;
  d.role = "train-" + to_string(kind);
  d.seed = seed.seed;
  d.samples.sample_shape = is_sst(m)
                               ? std::vector<size_t>{C, 256, 256}
                               : std::vector<size_t>{C, static_cast<size_t>(W)};

  Rng rng(derive_seed(seed.seed, "augment"));
  const double scale_ref = is_flow(m) ? cfg.flow_scale_ref : cfg.pressure_scale_ref;
  std::vector<std::vector<double>> aug(C, std::vector<double>(W));
  for (size_t cls = 0; cls < seeds.size(); ++cls) {
    for (int i = 0; i < cfg.train_per_class; ++i) {
      int shift = cfg.augment_cyclic_shift ? static_cast<int>(rng.below(W)) : 0;
      for (size_t c = 0; c < C; ++c)
        for (int j = 0; j < W; ++j)
          aug[c][j] = seeds[cls][c][(j + shift) % W] + sigma[c] * rng.normal();
      if (is_sst(m))
        push_sst_sample(d.samples, aug, fs, cfg.sst, cfg.pump.pumping_freq(), scale_k);
      else
        push_time_sample(d.samples, aug, scale_ref);
      d.samples.labels.push_back(static_cast<int>(cls));
      d.provenance.push_back({"twin", cfg.train_faults[cls].label, shift, -1});
    }
  }

  d.fingerprint = dataset_fingerprint(d, cfg.to_json());
  d.validate();
  return d;
}

LabeledDataset build_plant_test_set(const ExperimentConfig& cfg, Modality modality,
                                    RngSeed seed) {
  cfg.validate();
  const double fs = cfg.sample_rate;
  const int rev = samples_per_rev(cfg);
  const int wrevs = window_revs(modality);
  const int W = rev * wrevs;
  const int n_win = is_sst(modality) ? cfg.plant_windows_sst : cfg.plant_windows_time;
  // flow estimates lose a causal margin at both ends, so simulate one spare
  // revolution for that modality
  const int n_revs = cfg.washout_revs + n_win * wrevs + (is_flow(modality) ? 1 : 0);
  const double duration = n_revs * rev / fs;
  const size_t settled = static_cast<size_t>(cfg.washout_revs) * rev;

  struct PlantClass {
    HealthState state;
    FaultSpec fault;
  };
  const PlantClass classes[3] = {{HealthState::H, cfg.train_faults[0]},
                                 {HealthState::S, cfg.train_faults[1]},
                                 {HealthState::C, cfg.plant_fault}};

  std::vector<MultiChannelSignal> records;
  for (const auto& pc : classes) {
    auto src = generate_source(cfg.pump, pc.fault, fs, n_revs);
    records.push_back(
        simulate_sensors(cfg.plant_params, src.signal, duration, cfg.plant_params.sensors));
  }
  const size_t C_sens = records.front().channels.size();

  // sensor noise referenced to the healthy ripple, same level on every class
  // (it is a property of the instrumentation, not of the pump's health)
  std::vector<double> sigma(C_sens);
  for (size_t c = 0; c < C_sens; ++c) {
    auto w = slice(records[0].channels[c].samples, settled,
                   records[0].channels[c].size() - settled);
    remove_mean(w);
    sigma[c] = cfg.sensor_noise_frac * rms(w);
  }
  Rng noise(derive_seed(seed.seed, "plant-noise"));
  for (auto& rec : records)
    for (size_t c = 0; c < C_sens; ++c)
      for (double& v : rec.channels[c].samples) v += sigma[c] * noise.normal();

  // per-class window source: sensor channels directly, or the virtual-sensor
  // flow estimate reconstructed from them through the calibrated twin
  std::vector<std::vector<std::vector<double>>> wsrc(3);  // [class][channel][samples]
  if (is_flow(modality)) {
    if (!cfg.calibrated)
      throw DependencyError("dataset: the flow test set needs a calibration result first");
    for (size_t k = 0; k < 3; ++k) {
      InverseProblem prob;
      prob.params = *cfg.calibrated;
      for (size_t c = 0; c < C_sens; ++c)
        prob.sensor_pressures.push_back({cfg.calibrated->sensors[c], records[k].channels[c]});
      prob.t0 = settled / fs;
      prob.t1 = duration;
      auto q = estimate_flow_wave_decomposition(prob);
      if (q.size() < static_cast<size_t>(n_win) * W)
        throw ShapeError("dataset: flow estimate shorter than the requested windows");
      wsrc[k].push_back(std::move(q.samples));
    }
  } else {
    for (size_t k = 0; k < 3; ++k)
      for (size_t c = 0; c < C_sens; ++c)
        wsrc[k].push_back(slice(records[k].channels[c].samples, settled,
                                static_cast<size_t>(n_win) * W));
  }
  const size_t C = wsrc.front().size();

  double scale_k = 0.0;
  if (is_sst(modality)) {
    std::vector<std::vector<std::vector<double>>> leading(3);
    for (size_t k = 0; k < 3; ++k)
      for (size_t c = 0; c < C; ++c) leading[k].push_back(slice(wsrc[k][c], 0, W));
    scale_k = dataset_scale_k(leading, fs, cfg.sst);
  }

  LabeledDataset d;
  d.modality = modality;
  d.role = "plant-test";
  d.seed = seed.seed;
  d.samples.sample_shape = is_sst(modality)
                               ? std::vector<size_t>{C, 256, 256}
                               : std::vector<size_t>{C, static_cast<size_t>(W)};

  const double scale_ref = is_flow(modality) ? cfg.flow_scale_ref : cfg.pressure_scale_ref;
  std::vector<std::vector<double>> win(C);
  for (size_t k = 0; k < 3; ++k) {
    for (int w = 0; w < n_win; ++w) {
      for (size_t c = 0; c < C; ++c) win[c] = slice(wsrc[k][c], static_cast<size_t>(w) * W, W);
      if (is_sst(modality))
        push_sst_sample(d.samples, win, fs, cfg.sst, cfg.pump.pumping_freq(), scale_k);
      else
        push_time_sample(d.samples, win, scale_ref);
      d.samples.labels.push_back(static_cast<int>(k));
      d.provenance.push_back({"plant", classes[k].state, 0, w});
    }
  }

  d.fingerprint = dataset_fingerprint(d, cfg.to_json());
  d.validate();
  return d;
}

}  // namespace pdx
