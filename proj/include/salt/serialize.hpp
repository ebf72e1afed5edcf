#pragma once

#include <string>

#include "salt/trainer.hpp"

namespace salt {

// Versioned model document: classifier, source subspace, per-member target
// subspaces and alignment maps. Matrices are stored flat, row-major.
struct ModelDocument {
  Mode mode = Mode::A5_Alternating;
  SoftmaxClassifier classifier;
  std::optional<Subspace> Zs;
  std::vector<EnsembleMember> members;
};

void save_model(const ModelDocument& doc, const std::string& path);
ModelDocument load_model(const std::string& path);

/// Report text (config echo, per-iteration metrics, final accuracies).
/// Wall-clock time is intentionally excluded so files are byte-stable.
std::string report_to_json(const RunReport& report);
void save_report_json(const RunReport& report, const std::string& path);

// Loaded view of a serialized report; the model itself lives in the model
// document, not here.
struct LoadedReport {
  std::string mode;
  std::vector<IterationRecord> iterations;
  double final_source_accuracy = 0.0;
  std::optional<double> final_target_accuracy;
};

LoadedReport load_report_json(const std::string& path);

/// One row per iteration: iter,primary_total,aux_total,phi_drift,phi_step,
/// src_acc,tgt_acc.
std::string report_to_csv(const RunReport& report);
void save_report_csv(const RunReport& report, const std::string& path);
LoadedReport load_report_csv(const std::string& path);

/// TrainConfig from a JSON file whose keys mirror the config field names.
/// Missing keys keep the value already in `config`.
void apply_config_json(const std::string& path, TrainConfig& config);

}  // namespace salt
