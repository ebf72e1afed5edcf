#include "salt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <utility>

#include "salt/error.hpp"
#include "salt/rng.hpp"

namespace salt {

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::A1_NoAdapt: return "A1";
    case Mode::A2_PrimaryOnly: return "A2";
    case Mode::A3_Independent: return "A3";
    case Mode::A4_Joint: return "A4";
    case Mode::A5_Alternating: return "A5";
  }
  throw ConfigError("unknown mode value");
}

Mode mode_from_name(const std::string& name) {
  if (name == "A1") return Mode::A1_NoAdapt;
  if (name == "A2") return Mode::A2_PrimaryOnly;
  if (name == "A3") return Mode::A3_Independent;
  if (name == "A4") return Mode::A4_Joint;
  if (name == "A5") return Mode::A5_Alternating;
  throw ConfigError("unknown mode '" + name + "' (expected A1..A5)");
}

void TrainConfig::validate() const {
  weights.validate();
  if (subspace_dim < 0) throw ConfigError("subspace_dim must be >= 0");
  if (n_iter < 1) throw ConfigError("n_iter must be >= 1");
  if (t1 < 1) throw ConfigError("t1 must be >= 1");
  if (t2 < 1) throw ConfigError("t2 must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(split_fraction > 0.0 && split_fraction < 1.0))
    throw ConfigError("split_fraction must lie in (0, 1)");
  if (ensemble_size < 1) throw ConfigError("ensemble_size must be >= 1");
  if (ensemble_size > 1 && mode != Mode::A5_Alternating)
    throw ConfigError("the bootstrap ensemble requires the alternating mode");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
  if (!(sgd_learning_rate > 0.0)) throw ConfigError("sgd_learning_rate must be > 0");
  if (!(adam_learning_rate > 0.0)) throw ConfigError("adam_learning_rate must be > 0");
  if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0))
    throw ConfigError("sgd_momentum must lie in [0, 1)");
  if (early_stop_tol < 0.0) throw ConfigError("early_stop_tol must be >= 0");
}

namespace {

// rng substream ids hung off config.seed; disjoint by construction
constexpr std::uint64_t kStreamClassifier = 10;
constexpr std::uint64_t kStreamSplit = 11;
constexpr std::uint64_t kStreamWarmupSource = 12;
constexpr std::uint64_t kStreamWarmupTarget = 13;
constexpr std::uint64_t kStreamPrimarySource = 14;
constexpr std::uint64_t kStreamPrimaryTarget = 15;
constexpr std::uint64_t kStreamAuxTarget = 16;
constexpr std::uint64_t kStreamBootstrapBase = 32;

// Endless seeded mini-batch stream: shuffles once per epoch with a
// continuing engine, yields contiguous slices, last slice may be short.
class BatchCycler {
 public:
  BatchCycler(Index n, Index batch_size, std::uint64_t seed)
      : n_(n), batch_(std::min(batch_size, n)), rng_(seed) {
    reshuffle();
  }

  std::vector<Index> next() {
    if (pos_ >= n_) reshuffle();
    const Index stop = std::min(n_, pos_ + batch_);
    std::vector<Index> out(order_.begin() + pos_, order_.begin() + stop);
    pos_ = stop;
    return out;
  }

 private:
  void reshuffle() {
    order_.resize(static_cast<std::size_t>(n_));
    std::iota(order_.begin(), order_.end(), Index{0});
    rng_.shuffle(order_);
    pos_ = 0;
  }

  Index n_;
  Index batch_;
  rng::Engine rng_;
  std::vector<Index> order_;
  Index pos_ = 0;
};

Matrix rows_of(const Matrix& X, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Index>(i)) = X.row(rows[i]);
  return out;
}

std::vector<int> labels_of(const std::vector<int>& y,
                           const std::vector<Index>& rows) {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out[i] = y[static_cast<std::size_t>(rows[i])];
  return out;
}

// Primary objective over any number of aligned target views: the entropy
// and balance terms sum over views, the cross entropy appears once.
LossValue primary_loss_joint(const SoftmaxClassifier& clf, const Matrix& Xs,
                             const std::vector<int>& ys,
                             const std::vector<Matrix>& aligned,
                             const LossWeights& w) {
  LossValue v;
  const double ce = cross_entropy(predict_probs(clf, Xs), ys);
  double ent = 0.0, cb = 0.0;
  for (const Matrix& A : aligned) {
    if (A.rows() == 0) continue;
    const Matrix P = predict_probs(clf, A);
    ent += conditional_entropy(P);
    cb += class_balance(P);
  }
  v.components["ce"] = ce;
  v.components["cond_entropy"] = ent;
  v.components["class_balance"] = cb;
  v.total = ce + w.lambda_c * ent + w.lambda_cb * cb;
  return v;
}

ThetaGrad primary_grad_joint(const SoftmaxClassifier& clf, const Matrix& Xs,
                             const std::vector<int>& ys,
                             const std::vector<Matrix>& aligned,
                             const LossWeights& w) {
  ThetaGrad g = grad_primary_wrt_theta(clf, Xs, ys,
                                       Matrix(0, clf.feature_dim()), w);
  for (const Matrix& A : aligned) {
    if (A.rows() == 0) continue;
    const Matrix P = predict_probs(clf, A);
    const Matrix dlogits =
        detail::target_regularizer_logit_grad(P, w.lambda_c, w.lambda_cb);
    g.weights.noalias() += A.transpose() * dlogits;
    g.bias += dlogits.colwise().sum().transpose();
  }
  return g;
}

struct ThetaOptimizer {
  SgdMomentumState weights_state;
  SgdMomentumState bias_state;

  ThetaOptimizer(const TrainConfig& cfg, Index D, Index C)
      : weights_state(cfg.sgd_learning_rate, cfg.sgd_momentum, D, C),
        bias_state(cfg.sgd_learning_rate, cfg.sgd_momentum, C, 1) {}

  void step(SoftmaxClassifier& clf, const ThetaGrad& g) {
    sgd_momentum_step(weights_state, clf.weights, g.weights);
    Matrix b = clf.bias;
    sgd_momentum_step(bias_state, b, Matrix(g.bias));
    clf.bias = b;
  }
};

void warmup_classifier(SoftmaxClassifier& clf, const FeatureDataset& src_train,
                       const FeatureDataset* tgt_train,
                       const TrainConfig& cfg) {
  if (cfg.warmup_steps <= 0) return;
  ThetaOptimizer opt(cfg, clf.feature_dim(), clf.class_count());
  BatchCycler src(src_train.size(), cfg.batch_size,
                  rng::substream(cfg.seed, kStreamWarmupSource));
  std::optional<BatchCycler> tgt;
  if (tgt_train)
    tgt.emplace(tgt_train->size(), cfg.batch_size,
                rng::substream(cfg.seed, kStreamWarmupTarget));
  const Matrix& Xs = src_train.features();
  const std::vector<int>& ys = src_train.labels();
  for (int step = 0; step < cfg.warmup_steps; ++step) {
    const std::vector<Index> sb = src.next();
    std::vector<Matrix> aligned;
    if (tgt_train) aligned.push_back(rows_of(tgt_train->features(), tgt->next()));
    const ThetaGrad g = primary_grad_joint(clf, rows_of(Xs, sb),
                                           labels_of(ys, sb), aligned,
                                           cfg.weights);
    opt.step(clf, g);
  }
}

LossValue mean_loss(const std::vector<LossValue>& values) {
  LossValue out;
  if (values.empty()) return out;
  for (const LossValue& v : values) {
    out.total += v.total;
    for (const auto& [key, value] : v.components) out.components[key] += value;
  }
  const double k = static_cast<double>(values.size());
  out.total /= k;
  for (auto& [key, value] : out.components) value /= k;
  return out;
}

void check_pair(const FeatureDataset& source, const FeatureDataset& target) {
  if (!source.has_labels())
    throw ConfigError("source dataset must be labeled");
  if (source.class_count() < 2)
    throw DomainError("source dataset needs at least two classes");
  if (source.dim() != target.dim())
    throw DimensionError("source and target feature dimensions differ");
}

// Source-only path with the same parameter-update budget as the adaptive
// modes; never touches target features.
RunReport run_source_only(const FeatureDataset& source,
                          const FeatureDataset& target,
                          const TrainConfig& cfg, const TrainHooks* hooks) {
  check_pair(source, target);
  const FeatureDataset s_train =
      split(source, cfg.split_fraction, rng::substream(cfg.seed, kStreamSplit))
          .first;
  SoftmaxClassifier clf = make_classifier(
      source.dim(), source.class_count(),
      rng::substream(cfg.seed, kStreamClassifier));
  warmup_classifier(clf, s_train, nullptr, cfg);

  ThetaOptimizer opt(cfg, source.dim(), source.class_count());
  BatchCycler src(s_train.size(), cfg.batch_size,
                  rng::substream(cfg.seed, kStreamPrimarySource));
  const Matrix& Xs = s_train.features();
  const std::vector<int>& ys = s_train.labels();
  const std::vector<EnsembleMember> no_members;

  RunReport report;
  report.mode = cfg.mode;
  report.config = cfg;
  for (int iter = 1; iter <= cfg.n_iter; ++iter) {
    if (hooks && hooks->on_phase)
      hooks->on_phase(iter, TrainHooks::Phase::Primary, true, clf, no_members);
    for (int step = 1; step <= cfg.t1; ++step) {
      const std::vector<Index> sb = src.next();
      const Matrix Xb = rows_of(Xs, sb);
      const std::vector<int> yb = labels_of(ys, sb);
      opt.step(clf, primary_grad_joint(clf, Xb, yb, {}, cfg.weights));
      if (hooks && hooks->on_primary_step)
        hooks->on_primary_step(
            iter, step, primary_loss_joint(clf, Xb, yb, {}, cfg.weights).total);
    }
    if (hooks && hooks->on_phase)
      hooks->on_phase(iter, TrainHooks::Phase::Primary, false, clf, no_members);

    IterationRecord rec;
    rec.iter = iter;
    rec.primary = primary_loss_joint(clf, Xs, ys, {}, cfg.weights);
    rec.source_accuracy =
        accuracy(predict_classes(clf, source.features()), source.labels());
    report.iterations.push_back(std::move(rec));
  }
  report.classifier = std::move(clf);
  report.final_source_accuracy = report.iterations.back().source_accuracy;
  return report;
}

RunReport run_adaptive(const FeatureDataset& source,
                       const FeatureDataset& target, const TrainConfig& cfg,
                       const TrainHooks* hooks) {
  InitResult init = initialize(source, target, cfg);
  SoftmaxClassifier clf = std::move(init.classifier);
  const Subspace Zs = std::move(init.Zs);
  const Index d = Zs.dim();
  const bool aligned_mode = cfg.mode != Mode::A2_PrimaryOnly;
  const bool tune_phi = cfg.mode == Mode::A4_Joint ||
                        cfg.mode == Mode::A5_Alternating;

  std::vector<EnsembleMember> members;
  if (aligned_mode) {
    if (cfg.ensemble_size > 1) {
      for (int m = 0; m < cfg.ensemble_size; ++m) {
        FeatureDataset boot =
            cfg.identical_bootstraps
                ? init.splits.target_train
                : bootstrap(init.splits.target_train,
                            rng::substream(cfg.seed, kStreamBootstrapBase +
                                                          static_cast<std::uint64_t>(m)));
        Subspace Zt_m = fit_subspace(boot.features(), d);
        AlignmentMap phi_m = closed_form_alignment(Zt_m, Zs);
        members.push_back({std::move(Zt_m), std::move(phi_m)});
      }
    } else {
      members.push_back({std::move(init.Zt), init.phi_init});
    }
  }

  RunReport report;
  report.mode = cfg.mode;
  report.config = cfg;
  for (const EnsembleMember& m : members) report.phi_init.push_back(m.phi);

  ThetaOptimizer theta_opt(cfg, source.dim(), source.class_count());
  std::vector<AdamState> phi_opt;
  for (std::size_t i = 0; i < members.size(); ++i)
    phi_opt.emplace_back(cfg.adam_learning_rate, d, d);

  const FeatureDataset& s_train = init.splits.source_train;
  const FeatureDataset& t_train = init.splits.target_train;
  const FeatureDataset& t_val = init.splits.target_val;
  BatchCycler src_cyc(s_train.size(), cfg.batch_size,
                      rng::substream(cfg.seed, kStreamPrimarySource));
  BatchCycler tgt_cyc(t_train.size(), cfg.batch_size,
                      rng::substream(cfg.seed, kStreamPrimaryTarget));
  BatchCycler val_cyc(t_val.size(), cfg.batch_size,
                      rng::substream(cfg.seed, kStreamAuxTarget));

  const Matrix& Xs_tr = s_train.features();
  const std::vector<int>& ys_tr = s_train.labels();
  const Matrix& Xt_tr = t_train.features();
  const Matrix& Xt_val = t_val.features();

  auto aligned_views = [&](const Matrix& Xt) {
    std::vector<Matrix> views;
    if (!aligned_mode) {
      views.push_back(Xt);
    } else {
      views.reserve(members.size());
      for (const EnsembleMember& m : members)
        views.push_back(align_features(Xt, m.Zt, m.phi, Zs));
    }
    return views;
  };

  std::vector<Matrix> prev_phi;
  for (const EnsembleMember& m : members) prev_phi.push_back(m.phi.phi);

  for (int iter = 1; iter <= cfg.n_iter; ++iter) {
    if (hooks && hooks->on_phase)
      hooks->on_phase(iter, TrainHooks::Phase::Primary, true, clf, members);
    for (int step = 1; step <= cfg.t1; ++step) {
      const std::vector<Index> sb = src_cyc.next();
      const std::vector<Index> tb = tgt_cyc.next();
      const Matrix Xb = rows_of(Xs_tr, sb);
      const std::vector<int> yb = labels_of(ys_tr, sb);
      const Matrix Tb = rows_of(Xt_tr, tb);
      const std::vector<Matrix> views = aligned_views(Tb);
      theta_opt.step(clf, primary_grad_joint(clf, Xb, yb, views, cfg.weights));
      if (hooks && hooks->on_primary_step)
        hooks->on_primary_step(
            iter, step,
            primary_loss_joint(clf, Xb, yb, views, cfg.weights).total);
      if (cfg.mode == Mode::A4_Joint) {
        for (std::size_t i = 0; i < members.size(); ++i) {
          const Matrix g = grad_auxiliary_wrt_phi(
              members[i].phi, members[i].Zt, Zs, clf, Tb, cfg.weights);
          adam_step(phi_opt[i], members[i].phi.phi, g);
        }
      }
    }
    if (hooks && hooks->on_phase)
      hooks->on_phase(iter, TrainHooks::Phase::Primary, false, clf, members);

    if (cfg.mode == Mode::A5_Alternating) {
      if (hooks && hooks->on_phase)
        hooks->on_phase(iter, TrainHooks::Phase::Auxiliary, true, clf, members);
      for (int step = 1; step <= cfg.t2; ++step) {
        const Matrix Vb = rows_of(Xt_val, val_cyc.next());
        for (std::size_t i = 0; i < members.size(); ++i) {
          const Matrix g = grad_auxiliary_wrt_phi(
              members[i].phi, members[i].Zt, Zs, clf, Vb, cfg.weights);
          adam_step(phi_opt[i], members[i].phi.phi, g);
        }
      }
      if (hooks && hooks->on_phase)
        hooks->on_phase(iter, TrainHooks::Phase::Auxiliary, false, clf,
                        members);
    }

    IterationRecord rec;
    rec.iter = iter;
    rec.primary =
        primary_loss_joint(clf, Xs_tr, ys_tr, aligned_views(Xt_tr), cfg.weights);
    if (aligned_mode) {
      const Matrix& aux_data =
          cfg.mode == Mode::A4_Joint ? Xt_tr : Xt_val;
      std::vector<LossValue> per_member;
      for (const EnsembleMember& m : members)
        per_member.push_back(
            auxiliary_loss(m.phi, m.Zt, Zs, clf, aux_data, cfg.weights));
      rec.auxiliary = mean_loss(per_member);

      double drift = 0.0, step_norm = 0.0;
      for (std::size_t i = 0; i < members.size(); ++i) {
        drift += (members[i].phi.phi - report.phi_init[i].phi).norm();
        step_norm += (members[i].phi.phi - prev_phi[i]).norm();
        prev_phi[i] = members[i].phi.phi;
      }
      rec.phi_drift = drift / static_cast<double>(members.size());
      rec.phi_step = step_norm / static_cast<double>(members.size());
    }
    rec.source_accuracy =
        accuracy(predict_classes(clf, source.features()), source.labels());
    if (target.has_labels()) {
      const std::vector<int> pred =
          aligned_mode ? predict(clf, members, Zs, target.features())
                       : predict_classes(clf, target.features());
      rec.target_accuracy = accuracy(pred, target.labels());
    }
    report.iterations.push_back(std::move(rec));

    if (cfg.early_stop_tol > 0.0 && tune_phi &&
        report.iterations.back().phi_step < cfg.early_stop_tol)
      break;
  }

  report.classifier = std::move(clf);
  if (aligned_mode) {
    report.Zs = Zs;
    report.members = std::move(members);
  } else {
    report.phi_init.clear();
  }
  report.final_source_accuracy = report.iterations.back().source_accuracy;
  report.final_target_accuracy = report.iterations.back().target_accuracy;
  return report;
}

RunReport run_impl(const FeatureDataset& source, const FeatureDataset& target,
                   const TrainConfig& cfg, const TrainHooks* hooks) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  RunReport report = cfg.mode == Mode::A1_NoAdapt
                         ? run_source_only(source, target, cfg, hooks)
                         : run_adaptive(source, target, cfg, hooks);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

}  // namespace

InitResult initialize(const FeatureDataset& source, const FeatureDataset& target,
                      const TrainConfig& config) {
  config.validate();
  check_pair(source, target);
  const std::uint64_t split_seed = rng::substream(config.seed, kStreamSplit);
  auto [s_train, s_val] = split(source, config.split_fraction, split_seed);
  auto [t_train, t_val] = split(target, config.split_fraction, split_seed);

  Index d = config.subspace_dim;
  if (d == 0)
    d = default_subspace_dim(std::min(s_train.size(), t_train.size()),
                             source.dim());

  SoftmaxClassifier clf = make_classifier(
      source.dim(), source.class_count(),
      rng::substream(config.seed, kStreamClassifier));
  warmup_classifier(clf, s_train, &t_train, config);

  Subspace Zs = fit_subspace(s_train.features(), d);
  Subspace Zt = fit_subspace(t_train.features(), d);
  AlignmentMap phi0 = closed_form_alignment(Zt, Zs);
  return InitResult{std::move(clf), std::move(Zs), std::move(Zt),
                    std::move(phi0),
                    Splits{std::move(s_train), std::move(s_val),
                           std::move(t_train), std::move(t_val)}};
}

RunReport train(const FeatureDataset& source, const FeatureDataset& target,
                const TrainConfig& config, const TrainHooks* hooks) {
  return run_impl(source, target, config, hooks);
}

RunReport train_ensemble(const FeatureDataset& source,
                         const FeatureDataset& target, const TrainConfig& config,
                         const TrainHooks* hooks) {
  return run_impl(source, target, config, hooks);
}

std::vector<int> predict(const SoftmaxClassifier& clf,
                         const std::vector<EnsembleMember>& members,
                         const Subspace& Zs, const Matrix& Xt) {
  if (members.empty())
    throw DimensionError("prediction needs at least one ensemble member");
  const Index n = Xt.rows();
  const Index C = clf.class_count();
  Matrix votes = Matrix::Zero(n, C);
  Matrix prob_sum = Matrix::Zero(n, C);
  for (const EnsembleMember& m : members) {
    const Matrix A = align_features(Xt, m.Zt, m.phi, Zs);
    const Matrix P = predict_probs(clf, A);
    prob_sum += P;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      for (Index c = 1; c < C; ++c)
        if (P(i, c) > P(i, best)) best = c;
      votes(i, best) += 1.0;
    }
  }
  std::vector<int> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double max_votes = votes.row(i).maxCoeff();
    Index best = -1;
    double best_prob = -1.0;
    for (Index c = 0; c < C; ++c) {
      if (votes(i, c) == max_votes && prob_sum(i, c) > best_prob) {
        best = c;
        best_prob = prob_sum(i, c);
      }
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

PhiDynamics phi_dynamics(const RunReport& report) {
  if (report.iterations.empty())
    throw EmptyRunError("report holds no completed iterations");
  PhiDynamics dyn;
  dyn.drift_from_init.reserve(report.iterations.size());
  dyn.successive_step.reserve(report.iterations.size());
  for (const IterationRecord& rec : report.iterations) {
    dyn.drift_from_init.push_back(rec.phi_drift);
    dyn.successive_step.push_back(rec.phi_step);
  }
  return dyn;
}

}  // namespace salt
