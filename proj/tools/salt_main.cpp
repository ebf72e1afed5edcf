#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "salt/dataset.hpp"
#include "salt/error.hpp"
#include "salt/rng.hpp"
#include "salt/serialize.hpp"
#include "salt/trainer.hpp"

namespace {

using namespace salt;

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string fmt4(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", x);
  return buf;
}

bool header_has_label(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string suffix = ",label";
  return line.size() > suffix.size() &&
         line.compare(line.size() - suffix.size(), suffix.size(), suffix) == 0;
}

FeatureDataset load_auto(const std::string& path, const std::string& tag) {
  return load_csv(path, header_has_label(path), tag);
}

// Aligned ensemble prediction when the run produced members, otherwise the
// raw classifier.
std::vector<int> predictions_for(const SoftmaxClassifier& clf,
                                 const std::vector<EnsembleMember>& members,
                                 const std::optional<Subspace>& Zs,
                                 const Matrix& X) {
  if (!members.empty()) return predict(clf, members, *Zs, X);
  return predict_classes(clf, X);
}

double eval_accuracy(const RunReport& report, const FeatureDataset& test) {
  if (!test.has_labels())
    throw ConfigError("evaluation data has no label column");
  const std::vector<int> pred = predictions_for(
      report.classifier, report.members, report.Zs, test.features());
  return accuracy(pred, test.labels());
}

struct ConfigFlags {
  std::string config_path;
  std::string mode = "A5";
  TrainConfig values;

  CLI::Option* opt_mode = nullptr;
  CLI::Option* opt_subspace_dim = nullptr;
  CLI::Option* opt_lambda_c = nullptr;
  CLI::Option* opt_lambda_cb = nullptr;
  CLI::Option* opt_gamma_c = nullptr;
  CLI::Option* opt_gamma_cb = nullptr;
  CLI::Option* opt_n_iter = nullptr;
  CLI::Option* opt_t1 = nullptr;
  CLI::Option* opt_t2 = nullptr;
  CLI::Option* opt_batch_size = nullptr;
  CLI::Option* opt_split_fraction = nullptr;
  CLI::Option* opt_seed = nullptr;
  CLI::Option* opt_ensemble = nullptr;
  CLI::Option* opt_early_stop = nullptr;
  CLI::Option* opt_warmup = nullptr;
  CLI::Option* opt_sgd_lr = nullptr;
  CLI::Option* opt_sgd_momentum = nullptr;
  CLI::Option* opt_adam_lr = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path,
                    "JSON config file; flags override its values");
    opt_mode = cmd->add_option("--mode", mode, "training mode A1..A5");
    opt_subspace_dim = cmd->add_option("--subspace-dim", values.subspace_dim,
                                       "subspace dimension d (0 = auto)");
    opt_lambda_c = cmd->add_option("--lambda-c", values.weights.lambda_c,
                                   "target entropy weight, classifier loss");
    opt_lambda_cb = cmd->add_option("--lambda-cb", values.weights.lambda_cb,
                                    "class balance weight, classifier loss");
    opt_gamma_c = cmd->add_option("--gamma-c", values.weights.gamma_c,
                                  "target entropy weight, alignment loss");
    opt_gamma_cb = cmd->add_option("--gamma-cb", values.weights.gamma_cb,
                                   "class balance weight, alignment loss");
    opt_n_iter = cmd->add_option("--n-iter", values.n_iter, "outer iterations");
    opt_t1 = cmd->add_option("--t1", values.t1, "classifier steps per iteration");
    opt_t2 = cmd->add_option("--t2", values.t2, "alignment steps per iteration");
    opt_batch_size = cmd->add_option("--batch-size", values.batch_size, "mini-batch size");
    opt_split_fraction = cmd->add_option("--split-fraction", values.split_fraction,
                                         "train fraction of each domain");
    opt_seed = cmd->add_option("--seed", values.seed, "training seed");
    opt_ensemble = cmd->add_option("--ensemble-size", values.ensemble_size,
                                   "bootstrap subspace count (A5 only)");
    opt_early_stop = cmd->add_option("--early-stop-tol", values.early_stop_tol,
                                     "stop when the alignment step norm falls below");
    opt_warmup = cmd->add_option("--warmup-steps", values.warmup_steps,
                                 "classifier warm-up steps");
    opt_sgd_lr = cmd->add_option("--sgd-lr", values.sgd_learning_rate,
                                 "classifier learning rate");
    opt_sgd_momentum = cmd->add_option("--sgd-momentum", values.sgd_momentum,
                                       "classifier momentum");
    opt_adam_lr = cmd->add_option("--adam-lr", values.adam_learning_rate,
                                  "alignment learning rate");
  }

  // defaults < config file < explicit flags
  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config_path.empty()) apply_config_json(config_path, cfg);
    if (opt_mode->count()) cfg.mode = mode_from_name(mode);
    if (opt_subspace_dim->count()) cfg.subspace_dim = values.subspace_dim;
    if (opt_lambda_c->count()) cfg.weights.lambda_c = values.weights.lambda_c;
    if (opt_lambda_cb->count()) cfg.weights.lambda_cb = values.weights.lambda_cb;
    if (opt_gamma_c->count()) cfg.weights.gamma_c = values.weights.gamma_c;
    if (opt_gamma_cb->count()) cfg.weights.gamma_cb = values.weights.gamma_cb;
    if (opt_n_iter->count()) cfg.n_iter = values.n_iter;
    if (opt_t1->count()) cfg.t1 = values.t1;
    if (opt_t2->count()) cfg.t2 = values.t2;
    if (opt_batch_size->count()) cfg.batch_size = values.batch_size;
    if (opt_split_fraction->count()) cfg.split_fraction = values.split_fraction;
    if (opt_seed->count()) cfg.seed = values.seed;
    if (opt_ensemble->count()) cfg.ensemble_size = values.ensemble_size;
    if (opt_early_stop->count()) cfg.early_stop_tol = values.early_stop_tol;
    if (opt_warmup->count()) cfg.warmup_steps = values.warmup_steps;
    if (opt_sgd_lr->count()) cfg.sgd_learning_rate = values.sgd_learning_rate;
    if (opt_sgd_momentum->count()) cfg.sgd_momentum = values.sgd_momentum;
    if (opt_adam_lr->count()) cfg.adam_learning_rate = values.adam_learning_rate;
    cfg.validate();
    return cfg;
  }
};

void write_report(const RunReport& report, const std::string& path,
                  const std::string& format) {
  if (format == "json")
    save_report_json(report, path);
  else if (format == "csv")
    save_report_csv(report, path);
  else
    throw ConfigError("unknown report format '" + format + "'");
}

// ---- synth ----------------------------------------------------------------

int cmd_synth(const ShiftSpec& spec, const std::string& out_dir,
              double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test fraction must lie in (0, 1)");
  ShiftPair pair = generate_shift_pair(spec);
  auto [pool, test] =
      split(pair.target, 1.0 - test_fraction, rng::substream(spec.seed, 9));

  const std::string src_path = out_dir + "/source.csv";
  const std::string tgt_path = out_dir + "/target.csv";
  const std::string test_path = out_dir + "/target_test.csv";
  save_csv(pair.source, src_path);
  save_csv(pool, tgt_path);
  save_csv(test, test_path);

  std::cout << "source rows " << pair.source.size() << " dim "
            << pair.source.dim() << " classes " << pair.source.class_count()
            << "\n";
  std::cout << "target rows " << pool.size() << " test rows " << test.size()
            << "\n";
  std::cout << "shift magnitude " << fmt4(pair.shift_magnitude()) << "\n";
  std::cout << "wrote " << src_path << " " << tgt_path << " " << test_path
            << "\n";
  return 0;
}

// ---- adapt ----------------------------------------------------------------

int cmd_adapt(const std::string& source_path, const std::string& target_path,
              const ConfigFlags& flags, const std::string& report_path,
              const std::string& format, const std::string& model_path) {
  const TrainConfig cfg = flags.resolve();
  const FeatureDataset source = load_auto(source_path, "source");
  const FeatureDataset target = load_auto(target_path, "target");

  const RunReport report = cfg.ensemble_size > 1
                               ? train_ensemble(source, target, cfg)
                               : train(source, target, cfg);

  if (!report_path.empty()) write_report(report, report_path, format);
  if (!model_path.empty()) {
    ModelDocument doc{report.mode, report.classifier, report.Zs, report.members};
    save_model(doc, model_path);
  }

  std::cout << "mode " << mode_name(report.mode) << " iterations "
            << report.iterations.size() << "\n";
  std::cout << "final source accuracy " << fmt4(report.final_source_accuracy)
            << "\n";
  if (report.final_target_accuracy)
    std::cout << "final target accuracy " << fmt4(*report.final_target_accuracy)
              << "\n";
  if (!report.iterations.empty() && !report.members.empty()) {
    const IterationRecord& first = report.iterations.front();
    const IterationRecord& last = report.iterations.back();
    std::cout << "phi drift " << fmt4(first.phi_drift) << " -> "
              << fmt4(last.phi_drift) << "\n";
    std::cout << "phi step " << fmt4(first.phi_step) << " -> "
              << fmt4(last.phi_step) << "\n";
  }
  std::cout << "wall seconds " << fmt4(report.wall_seconds) << "\n";
  return 0;
}

// ---- ablate ----------------------------------------------------------------

int cmd_ablate(const std::string& source_path, const std::string& target_path,
               const std::string& test_path, const ConfigFlags& flags,
               const std::string& out_path) {
  TrainConfig base = flags.resolve();
  const FeatureDataset source = load_auto(source_path, "source");
  const FeatureDataset target = load_auto(target_path, "target");
  std::optional<FeatureDataset> test;
  if (!test_path.empty()) test = load_auto(test_path, "test");
  const FeatureDataset& eval_set = test ? *test : target;
  if (!eval_set.has_labels())
    throw ConfigError("ablation needs labels on the evaluation data");

  std::ostringstream table;
  table << "mode,target_accuracy\n";
  for (Mode mode : {Mode::A1_NoAdapt, Mode::A2_PrimaryOnly,
                    Mode::A3_Independent, Mode::A4_Joint,
                    Mode::A5_Alternating}) {
    TrainConfig cfg = base;
    cfg.mode = mode;
    const RunReport report = train(source, target, cfg);
    table << mode_name(mode) << ',' << fmt(eval_accuracy(report, eval_set))
          << '\n';
  }
  std::cout << table.str();
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + out_path);
    out << table.str();
  }
  return 0;
}

// ---- sweeps ----------------------------------------------------------------

int cmd_sweep_target_size(const std::string& source_path,
                          const std::string& target_path,
                          const std::string& test_path,
                          std::vector<double> fractions,
                          const ConfigFlags& flags,
                          const std::string& out_path) {
  TrainConfig cfg = flags.resolve();
  cfg.mode = Mode::A5_Alternating;
  if (fractions.empty()) throw ConfigError("no fractions given");
  std::set<double> seen(fractions.begin(), fractions.end());
  if (seen.size() != fractions.size())
    throw ConfigError("duplicate fractions given");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0))
      throw ConfigError("fractions must lie in (0, 1]");
  std::sort(fractions.rbegin(), fractions.rend());

  const FeatureDataset source = load_auto(source_path, "source");
  const FeatureDataset target = load_auto(target_path, "target");
  const FeatureDataset test = load_auto(test_path, "test");

  std::ostringstream table;
  table << "fraction,target_rows,target_accuracy\n";
  for (double f : fractions) {
    const FeatureDataset part =
        f < 1.0 ? subsample(target, f, rng::substream(cfg.seed, 48)) : target;
    const RunReport report = train(source, part, cfg);
    table << fmt4(f) << ',' << part.size() << ','
          << fmt(eval_accuracy(report, test)) << '\n';
  }
  std::cout << table.str();
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + out_path);
    out << table.str();
  }
  return 0;
}

int cmd_sweep_ensemble(const std::string& source_path,
                       const std::string& target_path,
                       const std::string& test_path,
                       const std::vector<int>& ks, const ConfigFlags& flags,
                       const std::string& out_path) {
  TrainConfig cfg = flags.resolve();
  cfg.mode = Mode::A5_Alternating;
  if (ks.empty()) throw ConfigError("no ensemble sizes given");
  std::set<int> seen(ks.begin(), ks.end());
  if (seen.size() != ks.size())
    throw ConfigError("duplicate ensemble sizes given");
  for (int k : ks)
    if (k < 1) throw ConfigError("ensemble sizes must be >= 1");

  const FeatureDataset source = load_auto(source_path, "source");
  const FeatureDataset target = load_auto(target_path, "target");
  std::optional<FeatureDataset> test;
  if (!test_path.empty()) test = load_auto(test_path, "test");
  const FeatureDataset& eval_set = test ? *test : target;

  std::ostringstream table;
  table << "k,target_accuracy\n";
  for (int k : ks) {
    TrainConfig run_cfg = cfg;
    run_cfg.ensemble_size = k;
    const RunReport report = train_ensemble(source, target, run_cfg);
    table << k << ',' << fmt(eval_accuracy(report, eval_set)) << '\n';
  }
  std::cout << table.str();
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + out_path);
    out << table.str();
  }
  return 0;
}

// ---- eval ------------------------------------------------------------------

int cmd_eval(const std::string& model_path, const std::string& test_path) {
  const ModelDocument doc = load_model(model_path);
  const FeatureDataset test = load_auto(test_path, "test");
  if (!test.has_labels()) throw ConfigError("test CSV needs a label column");
  if (test.dim() != doc.classifier.feature_dim())
    throw SchemaError("test dimension " + std::to_string(test.dim()) +
                      " does not match model dimension " +
                      std::to_string(doc.classifier.feature_dim()));
  const Index C = doc.classifier.class_count();
  for (int y : test.labels())
    if (y >= C)
      throw SchemaError("test label " + std::to_string(y) +
                        " outside the model's " + std::to_string(C) +
                        " classes");

  const std::vector<int> pred =
      predictions_for(doc.classifier, doc.members, doc.Zs, test.features());
  std::cout << "accuracy " << fmt(accuracy(pred, test.labels())) << "\n";

  std::vector<std::vector<long>> confusion(
      static_cast<std::size_t>(C), std::vector<long>(static_cast<std::size_t>(C), 0));
  for (std::size_t i = 0; i < pred.size(); ++i)
    ++confusion[static_cast<std::size_t>(test.labels()[i])]
               [static_cast<std::size_t>(pred[i])];
  std::cout << "confusion rows=true cols=predicted\n";
  for (Index r = 0; r < C; ++r) {
    for (Index c = 0; c < C; ++c) {
      if (c) std::cout << ' ';
      std::cout << confusion[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subspace-aligned training for unsupervised domain adaptation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic shifted pair");
  ShiftSpec spec;
  std::string out_dir = ".";
  double test_fraction = 0.2;
  synth->add_option("--classes", spec.class_count, "number of classes");
  synth->add_option("--dim", spec.ambient_dim, "ambient feature dimension");
  synth->add_option("--intrinsic-dim", spec.intrinsic_dim, "data plane dimension");
  synth->add_option("--samples-per-class", spec.samples_per_class, "rows per class");
  synth->add_option("--angle", spec.rotation_angle_degrees, "rotation angle, degrees");
  synth->add_option("--translation", spec.translation_magnitude, "translation length");
  synth->add_option("--noise", spec.noise_sigma, "isotropic noise sigma");
  synth->add_option("--seed", spec.seed, "generator seed");
  synth->add_option("--out-dir", out_dir, "output directory");
  synth->add_option("--test-fraction", test_fraction, "held-out share of the target");

  // adapt
  auto* adapt = app.add_subcommand("adapt", "train on a source/target pair");
  std::string a_source, a_target, a_report, a_model, a_format = "json";
  adapt->add_option("--source", a_source, "labeled source CSV")->required();
  adapt->add_option("--target", a_target, "target CSV")->required();
  adapt->add_option("--report", a_report, "write the run report here");
  adapt->add_option("--format", a_format, "report format: json or csv");
  adapt->add_option("--model", a_model, "write the trained model here");
  ConfigFlags adapt_flags;
  adapt_flags.attach(adapt);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "compare modes A1..A5");
  std::string b_source, b_target, b_test, b_out;
  ablate->add_option("--source", b_source, "labeled source CSV")->required();
  ablate->add_option("--target", b_target, "target CSV")->required();
  ablate->add_option("--test", b_test, "labeled evaluation CSV (default: target)");
  ablate->add_option("--output", b_out, "also write the table here");
  ConfigFlags ablate_flags;
  ablate_flags.attach(ablate);

  // sweep-target-size
  auto* sweep_n = app.add_subcommand("sweep-target-size",
                                     "accuracy vs target training size");
  std::string n_source, n_target, n_test, n_out;
  std::vector<double> fractions;
  sweep_n->add_option("--source", n_source, "labeled source CSV")->required();
  sweep_n->add_option("--target", n_target, "target CSV")->required();
  sweep_n->add_option("--test", n_test, "labeled test CSV")->required();
  sweep_n->add_option("--fractions", fractions, "target data fractions")
      ->required()
      ->delimiter(',');
  sweep_n->add_option("--output", n_out, "also write the table here");
  ConfigFlags sweep_n_flags;
  sweep_n_flags.attach(sweep_n);

  // sweep-ensemble
  auto* sweep_k = app.add_subcommand("sweep-ensemble",
                                     "accuracy vs bootstrap subspace count");
  std::string k_source, k_target, k_test, k_out;
  std::vector<int> ks;
  sweep_k->add_option("--source", k_source, "labeled source CSV")->required();
  sweep_k->add_option("--target", k_target, "target CSV")->required();
  sweep_k->add_option("--test", k_test, "labeled evaluation CSV (default: target)");
  sweep_k->add_option("--ks", ks, "ensemble sizes")->required()->delimiter(',');
  sweep_k->add_option("--output", k_out, "also write the table here");
  ConfigFlags sweep_k_flags;
  sweep_k_flags.attach(sweep_k);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a saved model on a test CSV");
  std::string e_model, e_test;
  eval->add_option("--model", e_model, "model JSON from adapt")->required();
  eval->add_option("--test", e_test, "labeled test CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(spec, out_dir, test_fraction);
    if (adapt->parsed())
      return cmd_adapt(a_source, a_target, adapt_flags, a_report, a_format,
                       a_model);
    if (ablate->parsed())
      return cmd_ablate(b_source, b_target, b_test, ablate_flags, b_out);
    if (sweep_n->parsed())
      return cmd_sweep_target_size(n_source, n_target, n_test, fractions,
                                   sweep_n_flags, n_out);
    if (sweep_k->parsed())
      return cmd_sweep_ensemble(k_source, k_target, k_test, ks, sweep_k_flags,
                                k_out);
    if (eval->parsed()) return cmd_eval(e_model, e_test);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no subcommand\n";
  return 1;
}
