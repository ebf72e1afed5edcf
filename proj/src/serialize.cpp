#include "salt/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "salt/error.hpp"

namespace salt {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

json flat(const Matrix& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  return json(out);
}

json flat(const Vector& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Matrix unflat(const json& arr, Index rows, Index cols, const std::string& what) {
  if (!arr.is_array() ||
      arr.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw SchemaError(what + ": expected " + std::to_string(rows * cols) +
                      " numbers");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = arr.at(k++).get<double>();
  return m;
}

Vector unflat_vector(const json& arr, Index n, const std::string& what) {
  if (!arr.is_array() || arr.size() != static_cast<std::size_t>(n))
    throw SchemaError(what + ": expected " + std::to_string(n) + " numbers");
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = arr.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

const json& require(const json& j, const std::string& key,
                    const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(where + ": missing key '" + key + "'");
  return *it;
}

void write_text(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

json loss_to_json(const LossValue& v) {
  json j;
  j["total"] = v.total;
  j["components"] = json::object();
  for (const auto& [key, value] : v.components) j["components"][key] = value;
  return j;
}

LossValue loss_from_json(const json& j, const std::string& where) {
  LossValue v;
  v.total = require(j, "total", where).get<double>();
  const json& comps = require(j, "components", where);
  if (!comps.is_object()) throw SchemaError(where + ": components must be an object");
  for (auto it = comps.begin(); it != comps.end(); ++it)
    v.components[it.key()] = it.value().get<double>();
  return v;
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

void save_model(const ModelDocument& doc, const std::string& path) {
  const Index D = doc.classifier.feature_dim();
  const Index C = doc.classifier.class_count();
  json j;
  j["format_version"] = kFormatVersion;
  j["mode"] = mode_name(doc.mode);
  j["ambient_dim"] = D;
  j["classes"] = C;
  j["classifier"] = {{"weights", flat(doc.classifier.weights)},
                     {"bias", flat(doc.classifier.bias)}};
  if (doc.Zs) {
    j["subspace_dim"] = doc.Zs->dim();
    j["source_subspace"] = {{"basis", flat(doc.Zs->basis)},
                            {"center", flat(doc.Zs->center)}};
  }
  j["members"] = json::array();
  for (const EnsembleMember& m : doc.members) {
    j["members"].push_back({{"target_basis", flat(m.Zt.basis)},
                            {"target_center", flat(m.Zt.center)},
                            {"phi", flat(m.phi.phi)}});
  }
  write_text(j.dump(2) + "\n", path);
}

ModelDocument load_model(const std::string& path) {
  const json j = parse_file(path);
  const std::string where = path;
  if (require(j, "format_version", where).get<int>() != kFormatVersion)
    throw SchemaError(where + ": unsupported format_version");

  ModelDocument doc;
  doc.mode = mode_from_name(require(j, "mode", where).get<std::string>());
  const Index D = require(j, "ambient_dim", where).get<Index>();
  const Index C = require(j, "classes", where).get<Index>();
  if (D < 1 || C < 2) throw SchemaError(where + ": bad dimensions");

  const json& clf = require(j, "classifier", where);
  doc.classifier.weights =
      unflat(require(clf, "weights", where), D, C, where + ": weights");
  doc.classifier.bias =
      unflat_vector(require(clf, "bias", where), C, where + ": bias");

  if (j.contains("source_subspace")) {
    const Index d = require(j, "subspace_dim", where).get<Index>();
    if (d < 1 || d > D) throw SchemaError(where + ": bad subspace_dim");
    const json& zs = j["source_subspace"];
    Subspace s;
    s.basis = unflat(require(zs, "basis", where), D, d, where + ": basis");
    s.center =
        unflat_vector(require(zs, "center", where), D, where + ": center");
    doc.Zs = std::move(s);
  }

  const json& members = require(j, "members", where);
  if (!members.is_array()) throw SchemaError(where + ": members must be an array");
  if (!members.empty() && !doc.Zs)
    throw SchemaError(where + ": members without a source subspace");
  for (const json& mj : members) {
    const Index d = doc.Zs->dim();
    EnsembleMember m;
    m.Zt.basis = unflat(require(mj, "target_basis", where), D, d,
                        where + ": target_basis");
    m.Zt.center = unflat_vector(require(mj, "target_center", where), D,
                                where + ": target_center");
    m.phi.phi = unflat(require(mj, "phi", where), d, d, where + ": phi");
    doc.members.push_back(std::move(m));
  }
  return doc;
}

namespace {

json config_to_json(const TrainConfig& c) {
  json j;
  j["subspace_dim"] = c.subspace_dim;
  j["lambda_c"] = c.weights.lambda_c;
  j["lambda_cb"] = c.weights.lambda_cb;
  j["gamma_c"] = c.weights.gamma_c;
  j["gamma_cb"] = c.weights.gamma_cb;
  j["n_iter"] = c.n_iter;
  j["t1"] = c.t1;
  j["t2"] = c.t2;
  j["batch_size"] = c.batch_size;
  j["split_fraction"] = c.split_fraction;
  j["seed"] = c.seed;
  j["ensemble_size"] = c.ensemble_size;
  j["early_stop_tol"] = c.early_stop_tol;
  j["mode"] = mode_name(c.mode);
  j["warmup_steps"] = c.warmup_steps;
  j["sgd_learning_rate"] = c.sgd_learning_rate;
  j["sgd_momentum"] = c.sgd_momentum;
  j["adam_learning_rate"] = c.adam_learning_rate;
  return j;
}

json record_to_json(const IterationRecord& r) {
  json j;
  j["iter"] = r.iter;
  j["primary"] = loss_to_json(r.primary);
  j["auxiliary"] = loss_to_json(r.auxiliary);
  j["phi_drift"] = r.phi_drift;
  j["phi_step"] = r.phi_step;
  j["source_accuracy"] = r.source_accuracy;
  if (r.target_accuracy)
    j["target_accuracy"] = *r.target_accuracy;
  else
    j["target_accuracy"] = nullptr;
  return j;
}

IterationRecord record_from_json(const json& j, const std::string& where) {
  IterationRecord r;
  r.iter = require(j, "iter", where).get<int>();
  r.primary = loss_from_json(require(j, "primary", where), where);
  r.auxiliary = loss_from_json(require(j, "auxiliary", where), where);
  r.phi_drift = require(j, "phi_drift", where).get<double>();
  r.phi_step = require(j, "phi_step", where).get<double>();
  r.source_accuracy = require(j, "source_accuracy", where).get<double>();
  const json& t = require(j, "target_accuracy", where);
  if (!t.is_null()) r.target_accuracy = t.get<double>();
  return r;
}

}  // namespace

std::string report_to_json(const RunReport& report) {
  json j;
  j["format_version"] = kFormatVersion;
  j["mode"] = mode_name(report.mode);
  j["config"] = config_to_json(report.config);
  j["iterations"] = json::array();
  for (const IterationRecord& r : report.iterations)
    j["iterations"].push_back(record_to_json(r));
  j["final_source_accuracy"] = report.final_source_accuracy;
  if (report.final_target_accuracy)
    j["final_target_accuracy"] = *report.final_target_accuracy;
  else
    j["final_target_accuracy"] = nullptr;
  return j.dump(2) + "\n";
}

void save_report_json(const RunReport& report, const std::string& path) {
  write_text(report_to_json(report), path);
}

LoadedReport load_report_json(const std::string& path) {
  const json j = parse_file(path);
  if (require(j, "format_version", path).get<int>() != kFormatVersion)
    throw SchemaError(path + ": unsupported format_version");
  LoadedReport out;
  out.mode = require(j, "mode", path).get<std::string>();
  mode_from_name(out.mode);  // validates
  const json& iters = require(j, "iterations", path);
  if (!iters.is_array()) throw SchemaError(path + ": iterations must be an array");
  for (const json& rj : iters) out.iterations.push_back(record_from_json(rj, path));
  out.final_source_accuracy =
      require(j, "final_source_accuracy", path).get<double>();
  const json& t = require(j, "final_target_accuracy", path);
  if (!t.is_null()) out.final_target_accuracy = t.get<double>();
  return out;
}

std::string report_to_csv(const RunReport& report) {
  std::ostringstream os;
  os << "iter,primary_total,aux_total,phi_drift,phi_step,src_acc,tgt_acc\n";
  for (const IterationRecord& r : report.iterations) {
    os << r.iter << ',' << format_double(r.primary.total) << ','
       << format_double(r.auxiliary.total) << ',' << format_double(r.phi_drift)
       << ',' << format_double(r.phi_step) << ','
       << format_double(r.source_accuracy) << ',';
    if (r.target_accuracy) os << format_double(*r.target_accuracy);
    os << '\n';
  }
  return os.str();
}

void save_report_csv(const RunReport& report, const std::string& path) {
  write_text(report_to_csv(report), path);
}

LoadedReport load_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "iter,primary_total,aux_total,phi_drift,phi_step,src_acc,tgt_acc")
    throw SchemaError(path + ": unexpected header '" + line + "'");

  LoadedReport out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    fields.push_back(cur);
    if (fields.size() != 7) {
      std::ostringstream os;
      os << path << ":" << line_no << ": expected 7 fields, got " << fields.size();
      throw SchemaError(os.str());
    }
    auto num = [&](const std::string& s) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != s.size() || s.empty()) {
        std::ostringstream os;
        os << path << ":" << line_no << ": bad number '" << s << "'";
        throw ParseError(os.str());
      }
      return v;
    };
    IterationRecord r;
    r.iter = static_cast<int>(num(fields[0]));
    r.primary.total = num(fields[1]);
    r.auxiliary.total = num(fields[2]);
    r.phi_drift = num(fields[3]);
    r.phi_step = num(fields[4]);
    r.source_accuracy = num(fields[5]);
    if (!fields[6].empty()) r.target_accuracy = num(fields[6]);
    out.iterations.push_back(std::move(r));
  }
  if (!out.iterations.empty()) {
    out.final_source_accuracy = out.iterations.back().source_accuracy;
    out.final_target_accuracy = out.iterations.back().target_accuracy;
  }
  return out;
}

void apply_config_json(const std::string& path, TrainConfig& config) {
  const json j = parse_file(path);
  if (!j.is_object()) throw SchemaError(path + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    try {
      if (key == "subspace_dim") config.subspace_dim = v.get<Index>();
      else if (key == "lambda_c") config.weights.lambda_c = v.get<double>();
      else if (key == "lambda_cb") config.weights.lambda_cb = v.get<double>();
      else if (key == "gamma_c") config.weights.gamma_c = v.get<double>();
      else if (key == "gamma_cb") config.weights.gamma_cb = v.get<double>();
      else if (key == "n_iter") config.n_iter = v.get<int>();
      else if (key == "t1") config.t1 = v.get<int>();
      else if (key == "t2") config.t2 = v.get<int>();
      else if (key == "batch_size") config.batch_size = v.get<Index>();
      else if (key == "split_fraction") config.split_fraction = v.get<double>();
      else if (key == "seed") config.seed = v.get<std::uint64_t>();
      else if (key == "ensemble_size") config.ensemble_size = v.get<int>();
      else if (key == "early_stop_tol") config.early_stop_tol = v.get<double>();
      else if (key == "mode") config.mode = mode_from_name(v.get<std::string>());
      else if (key == "warmup_steps") config.warmup_steps = v.get<int>();
      else if (key == "sgd_learning_rate") config.sgd_learning_rate = v.get<double>();
      else if (key == "sgd_momentum") config.sgd_momentum = v.get<double>();
      else if (key == "adam_learning_rate") config.adam_learning_rate = v.get<double>();
      else throw SchemaError(path + ": unknown config key '" + key + "'");
    } catch (const json::exception& e) {
      throw SchemaError(path + ": bad value for '" + key + "': " + e.what());
    }
  }
}

}  // namespace salt
