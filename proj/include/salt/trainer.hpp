#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "salt/dataset.hpp"
#include "salt/losses.hpp"
#include "salt/model.hpp"
#include "salt/subspace.hpp"

namespace salt {

enum class Mode {
  A1_NoAdapt,      // source-only classifier, target untouched in training
  A2_PrimaryOnly,  // primary losses with identity alignment
  A3_Independent,  // closed-form alignment, frozen; train classifier only
  A4_Joint,        // one classifier step and one alignment step per inner step
  A5_Alternating,  // the full alternating procedure
};

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& name);

struct TrainConfig {
  Index subspace_dim = 0;  // 0 selects default_subspace_dim(n, D)
  LossWeights weights;
  int n_iter = 10;
  int t1 = 100;
  int t2 = 100;
  Index batch_size = 512;
  double split_fraction = 0.8;
  std::uint64_t seed = 0;
  int ensemble_size = 1;
  double early_stop_tol = 0.0;  // on ||dPhi||_F; 0 disables
  Mode mode = Mode::A5_Alternating;
  int warmup_steps = 2000;
  double sgd_learning_rate = 1e-4;
  double sgd_momentum = 0.9;
  double adam_learning_rate = 1e-3;
  // Test hook: every ensemble member sees the same (non-resampled) target
  // split, so their trajectories must coincide.
  bool identical_bootstraps = false;

  void validate() const;
};

// One target subspace with its alignment map; plain training has one member,
// the bootstrap ensemble has k.
struct EnsembleMember {
  Subspace Zt;
  AlignmentMap phi;
};

struct IterationRecord {
  int iter = 0;  // 1-based
  LossValue primary;
  LossValue auxiliary;
  double phi_drift = 0.0;  // ||Phi_t - Phi_init||_F, mean over members
  double phi_step = 0.0;   // ||Phi_t - Phi_{t-1}||_F, mean over members
  double source_accuracy = 0.0;
  std::optional<double> target_accuracy;  // absent when labels missing or A1
};

struct RunReport {
  Mode mode = Mode::A5_Alternating;
  TrainConfig config;
  std::vector<IterationRecord> iterations;
  SoftmaxClassifier classifier;
  std::optional<Subspace> Zs;  // absent for A1/A2
  std::vector<EnsembleMember> members;
  std::vector<AlignmentMap> phi_init;  // one per member
  double final_source_accuracy = 0.0;
  std::optional<double> final_target_accuracy;
  double wall_seconds = 0.0;  // not serialized; reports stay byte-stable
};

struct Splits {
  FeatureDataset source_train;
  FeatureDataset source_val;
  FeatureDataset target_train;
  FeatureDataset target_val;
};

struct InitResult {
  SoftmaxClassifier classifier;
  Subspace Zs;
  Subspace Zt;
  AlignmentMap phi_init;
  Splits splits;
};

// Phase-boundary observer used by the frozen-parameter audits. `begin` marks
// block entry, otherwise exit; state references are valid only inside the
// callback.
struct TrainHooks {
  enum class Phase { Primary, Auxiliary };
  std::function<void(int iter, Phase phase, bool begin,
                     const SoftmaxClassifier& clf,
                     const std::vector<EnsembleMember>& members)>
      on_phase;
  std::function<void(int iter, int step, double primary_total)> on_primary_step;
};

/// Initialization phase: 80/20 splits, classifier warm-up with identity
/// alignment, subspace fits on the train splits, Phi_init = Zt^T Zs.
InitResult initialize(const FeatureDataset& source, const FeatureDataset& target,
                      const TrainConfig& config);

/// Runs the configured mode for n_iter outer iterations and reports
/// per-iteration metrics plus the final model.
RunReport train(const FeatureDataset& source, const FeatureDataset& target,
                const TrainConfig& config, const TrainHooks* hooks = nullptr);

/// Bootstrap-ensemble variant; k = 1 is exactly train().
RunReport train_ensemble(const FeatureDataset& source,
                         const FeatureDataset& target, const TrainConfig& config,
                         const TrainHooks* hooks = nullptr);

/// Majority vote over the members' aligned predictions. Ties go to the
/// class with the highest summed softmax probability, then lowest index.
std::vector<int> predict(const SoftmaxClassifier& clf,
                         const std::vector<EnsembleMember>& members,
                         const Subspace& Zs, const Matrix& Xt);

struct PhiDynamics {
  std::vector<double> drift_from_init;
  std::vector<double> successive_step;
};

/// The logged Phi sequences of a completed run.
PhiDynamics phi_dynamics(const RunReport& report);

}  // namespace salt
