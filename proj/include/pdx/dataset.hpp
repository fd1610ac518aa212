#pragma once
#include <optional>
#include <string>
#include <vector>

#include "pdx/moc.hpp"
#include "pdx/nn.hpp"
#include "pdx/pump.hpp"
#include "pdx/signal.hpp"
#include "pdx/tfr.hpp"

namespace pdx {

// Training data comes from the twin in one of three flavors: sensor pressures
// simulated through the uncalibrated prior line, the same through the
// calibrated line, or the pump-outlet flow ripple straight from the source
// model (no line in between).
enum class DatasetKind { uncalibrated_p, calibrated_p, flow_q };

// What a classifier consumes: raw windows or synchrosqueezed images, of
// either the sensor pressures or the (estimated) outlet flow.
enum class Modality { pressure_time, pressure_sst, flow_time, flow_sst };

std::string to_string(DatasetKind k);
std::string to_string(Modality m);
DatasetKind dataset_kind_from_string(const std::string& s);
Modality modality_from_string(const std::string& s);

bool is_sst(Modality m);
bool is_flow(Modality m);

// Everything the secret-plant study needs in one place.  The plant parameters
// are the ground truth being diagnosed; nothing downstream of calibration may
// read them.  The prior plays the role of an uncalibrated first-principles
// model of the same line.
struct ExperimentConfig {
  PipelineParams plant_params;
  PipelineParams prior_params;
  std::optional<PipelineParams> calibrated;  // produced by the calibration stage
  PumpGeometry pump;
  std::vector<FaultSpec> train_faults;  // H, S, C1, C2 in that order
  FaultSpec plant_fault;                // the plant's cylinder severity

  Modality modality = Modality::pressure_time;  // of the training sets
  int train_per_class = 1000;
  int plant_windows_time = 160;  // one-revolution windows per plant class
  int plant_windows_sst = 80;    // two-revolution windows per plant class
  int washout_revs = 6;          // start-up transient discarded before any window
  double sample_rate = 51200.0;

  // Plant sensors carry white noise at this fraction of the healthy ripple
  // RMS; augmentation adds noise at augment_noise_frac of that estimated
  // sensor noise on top of random cyclic shifts.
  double sensor_noise_frac = 0.01;
  double augment_noise_frac = 0.15;
  bool augment_cyclic_shift = true;

  // Leakage faults shrink the ripple, so amplitude is a class feature that
  // normalization must not erase: windows are only mean-removed and divided
  // by these fixed reference scales (never z-scored per window).
  double pressure_scale_ref = 2.0e4;  // Pa per unit input
  double flow_scale_ref = 1.0e-5;     // m^3/s per unit input

  SSTConfig sst;  // spectrogram analysis settings (Morse wavelet)

  std::vector<std::string> architectures;
  std::vector<DatasetKind> kinds;
  int n_runs = 10;
  int n_workers = 1;  // worker-pool bound for the experiment grid
  uint64_t base_seed = 0;
  TrainConfig hp;

  // evaluation label maps, predicted training class -> plant label space
  // (H, S, C); the severity that does not count as the plant's cylinder
  // fault maps to a sentinel that matches nothing
  std::vector<int> collapse_pressure = {0, 1, 2, 5};
  std::vector<int> collapse_flow = {0, 1, 5, 2};

  void validate() const;
  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);

  // the default study: truth plant, a mildly wrong prior, full-size datasets
  static ExperimentConfig secret_plant(uint64_t seed);
};

// multiplicative +-frac perturbation of wave speeds and diameters, the
// "first-principles model built from drawings" stand-in
PipelineParams perturb_params(const PipelineParams& p, double frac, RngSeed seed);

struct SampleProvenance {
  std::string source;  // "twin" or "plant"
  HealthState state = HealthState::H;
  int shift = 0;    // cyclic-shift augmentation, samples
  int window = -1;  // ordinal of the plant window; -1 for augmented twin samples
};

struct LabeledDataset {
  Modality modality = Modality::pressure_time;
  std::string role;  // "train-<kind>" or "plant-test"
  uint64_t seed = 0;
  SampleSet samples;
  std::vector<SampleProvenance> provenance;
  uint64_t fingerprint = 0;  // hash of config, seed, labels, and content

  void validate() const;
};

// Per class: one settled seed window from the twin, expanded to
// train_per_class samples by cyclic shifts and additive noise.  Labels are
// H=0, S=1, C1=2, C2=3.  Deterministic for a fixed seed.
LabeledDataset build_training_dataset(const ExperimentConfig& cfg, DatasetKind kind, RngSeed seed);

// Consecutive windows of the noisy plant response for H, S, and the plant's
// cylinder fault (labels 0, 1, 2).  Flow modalities first reconstruct the
// outlet flow from the plant pressures with the calibrated-twin virtual
// sensor, then window the estimate.
LabeledDataset build_plant_test_set(const ExperimentConfig& cfg, Modality modality, RngSeed seed);

}  // namespace pdx
