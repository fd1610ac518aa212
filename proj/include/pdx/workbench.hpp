#pragma once
#include <string>
#include <utility>
#include <vector>

#include "pdx/dataset.hpp"

namespace pdx {

// ---- reports --------------------------------------------------------------

// One training run of one grid cell.  `confusion` keeps the raw network
// classes as columns (rows are the plant labels H, S, C); the label-collapse
// rule is applied to the accuracy only, so nothing is lost in the report.
struct RunResult {
  int run = 0;
  uint64_t dataset_seed = 0;
  uint64_t net_seed = 0;
  bool ok = false;
  double accuracy = 0.0;
  int epochs_run = 0;
  std::vector<std::vector<int>> confusion;
  uint64_t train_fingerprint = 0;
  uint64_t checkpoint_hash = 0;
  std::string error;  // failure note when !ok; the run is kept in the report
};

// Grad-CAM attribution for one sampled plant window, at feature resolution
// (the input-resolution upsampling is re-derived by the exporters).
struct ClassCam {
  int label = 0;      // plant truth class of the sampled window
  int window = 0;     // window index within the class
  int predicted = 0;  // raw argmax class of the trained network
  std::vector<size_t> shape;
  std::vector<float> values;
};

// One (architecture, dataset kind) cell of the accuracy grid.
struct CellReport {
  std::string architecture;
  DatasetKind kind = DatasetKind::uncalibrated_p;
  Modality modality = Modality::pressure_time;
  std::vector<RunResult> runs;
  double mean_accuracy = 0.0;  // over successful runs
  double std_accuracy = 0.0;   // population std over successful runs
  int n_failed = 0;
  std::vector<ClassCam> cams;  // from run 0, one sampled window per class
};

struct PlantSetRecord {
  Modality modality = Modality::pressure_time;
  uint64_t seed = 0;
  uint64_t fingerprint = 0;
  size_t count = 0;
  std::string error;  // non-empty when the build failed
};

// The zero-shot experiment report.  `report_hash` is the FNV-1a digest of the
// canonical JSON with the hash field left out, so replayed experiments can be
// compared byte-for-byte.
struct RunReport {
  std::string config_json;
  std::string environment;
  std::string calibration_ref;  // digest of the calibrated line, or "none"
  std::vector<std::pair<std::string, uint64_t>> seed_manifest;
  std::vector<PlantSetRecord> plant_sets;
  std::vector<CellReport> cells;
  uint64_t report_hash = 0;

  std::string to_json() const;
  static RunReport from_json(const std::string& text);
};

// In-domain control: train and test on plant windows (stratified 8:2 split),
// one cell per architecture on its natural pressure modality.
struct ControlCell {
  std::string architecture;
  Modality modality = Modality::pressure_time;
  std::vector<RunResult> runs;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  int n_failed = 0;
};

struct ControlReport {
  std::string config_json;
  std::vector<std::pair<std::string, uint64_t>> seed_manifest;
  std::vector<ControlCell> cells;
  uint64_t report_hash = 0;

  std::string to_json() const;
};

// ---- operations -----------------------------------------------------------

// Throws ArgumentError unless every sample of a training set is twin-made or,
// at most, healthy plant data; fault-labeled plant samples must never be
// trained on.
void assert_zero_shot(const LabeledDataset& training);

// CI-scale profile: 200 samples per class, 20 epochs, 3 runs.
void apply_quick_profile(ExperimentConfig& cfg);

// The full grid: for every architecture x dataset kind x run, build the twin
// training set, train from scratch, and evaluate on the plant test set of the
// matching modality with the kind's label-collapse rule.  Plant test sets are
// built once per modality (the rig is fixed; runs vary data augmentation and
// initialization).  Stage failures are recorded per run and the report is
// still emitted.  Jobs run on a bounded worker pool (cfg.n_workers) and the
// merge is keyed, so the report is identical for any pool size.
RunReport run_experiment(const ExperimentConfig& cfg);

ControlReport run_in_domain_control(const ExperimentConfig& cfg);

// Artifact export: report.json always; with results also the accuracy grid
// CSV (architecture rows, dataset-kind columns), pressure/flow overlay CSVs,
// per-class spectrogram images, and Grad-CAM CSVs.  The manifest lists every
// written file with its content digest; an empty report yields a manifest
// with only the metadata file.
struct FileManifest {
  std::vector<std::pair<std::string, std::string>> entries;  // path -> digest
  std::string to_json() const;
};

FileManifest emit_plots(const RunReport& report, const std::string& out_dir);

}  // namespace pdx
