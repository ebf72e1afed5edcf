#include "salt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "salt/error.hpp"
#include "salt/rng.hpp"

namespace salt {

namespace {

void validate_features(const Matrix& f) {
  if (f.rows() < 1 || f.cols() < 1)
    throw DimensionError("dataset needs at least one row and one column");
  if (!f.allFinite())
    throw NumericalError("dataset contains non-finite feature values");
}

std::vector<Index> permutation(Index n, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  rng::Engine rng(seed);
  rng.shuffle(order);
  return order;
}

FeatureDataset take_rows(const FeatureDataset& data,
                         const std::vector<Index>& rows, std::string tag) {
  const Matrix& X = data.features();
  Matrix out(static_cast<Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = X.row(rows[i]);
  if (data.has_labels()) {
    std::vector<int> labels(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      labels[i] = data.labels()[static_cast<std::size_t>(rows[i])];
    return FeatureDataset(std::move(out), std::move(labels), data.class_count(),
                          std::move(tag));
  }
  return FeatureDataset(std::move(out), std::move(tag));
}

}  // namespace

FeatureDataset::FeatureDataset(Matrix features, std::string domain_tag)
    : features_(std::move(features)), domain_tag_(std::move(domain_tag)) {
  validate_features(features_);
  n_ = features_.rows();
  d_ = features_.cols();
}

FeatureDataset::FeatureDataset(Matrix features, std::vector<int> labels,
                               int class_count, std::string domain_tag)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      class_count_(class_count),
      domain_tag_(std::move(domain_tag)) {
  validate_features(features_);
  n_ = features_.rows();
  d_ = features_.cols();
  if (static_cast<Index>(labels_.size()) != n_)
    throw DimensionError("label count does not match row count");
  if (class_count_ < 1) throw DomainError("class_count must be positive");
  for (int y : labels_) {
    if (y < 0 || y >= class_count_) {
      std::ostringstream os;
      os << "label " << y << " outside [0, " << class_count_ << ")";
      throw DomainError(os.str());
    }
  }
}

std::pair<FeatureDataset, FeatureDataset> split(const FeatureDataset& data,
                                                double fraction,
                                                std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("split fraction must lie in (0, 1)");
  const Index n = data.size();
  const Index n_a =
      static_cast<Index>(std::llround(fraction * static_cast<double>(n)));
  if (n_a < 1 || n - n_a < 1)
    throw InsufficientDataError("split would leave an empty part");

  std::vector<Index> order = permutation(n, seed);
  std::vector<Index> rows_a(order.begin(), order.begin() + n_a);
  std::vector<Index> rows_b(order.begin() + n_a, order.end());
  return {take_rows(data, rows_a, data.domain_tag() + "/train"),
          take_rows(data, rows_b, data.domain_tag() + "/val")};
}

FeatureDataset bootstrap(const FeatureDataset& data, std::uint64_t seed) {
  const Index n = data.size();
  rng::Engine rng(seed);
  std::vector<Index> rows(static_cast<std::size_t>(n));
  for (auto& r : rows)
    r = static_cast<Index>(rng.index(static_cast<std::size_t>(n)));
  return take_rows(data, rows, data.domain_tag() + "/boot");
}

FeatureDataset subsample(const FeatureDataset& data, double fraction,
                         std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("subsample fraction must lie in (0, 1]");
  const Index n = data.size();
  const Index m =
      static_cast<Index>(std::llround(fraction * static_cast<double>(n)));
  if (m < 1) throw InsufficientDataError("subsample would be empty");
  std::vector<Index> order = permutation(n, seed);
  std::vector<Index> rows(order.begin(), order.begin() + m);
  // ascending so fraction 1.0 reproduces the dataset unchanged
  std::sort(rows.begin(), rows.end());
  return take_rows(data, rows, data.domain_tag());
}

std::vector<std::vector<Index>> batches(Index n, Index batch_size,
                                        std::uint64_t seed) {
  if (n < 1) throw DimensionError("batches: empty dataset");
  if (batch_size < 1) throw ConfigError("batches: batch_size must be >= 1");
  std::vector<Index> order = permutation(n, seed);
  std::vector<std::vector<Index>> out;
  for (Index start = 0; start < n; start += batch_size) {
    const Index stop = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + start, order.begin() + stop);
  }
  return out;
}

// -- synthetic covariate-shift generator ---------------------------------

void ShiftSpec::validate() const {
  if (class_count < 2) throw ConfigError("shift spec: class_count must be >= 2");
  if (ambient_dim < 2) throw ConfigError("shift spec: ambient_dim must be >= 2");
  if (intrinsic_dim < 1 || intrinsic_dim > ambient_dim)
    throw ConfigError("shift spec: intrinsic_dim must lie in [1, ambient_dim]");
  if (samples_per_class < 1)
    throw ConfigError("shift spec: samples_per_class must be >= 1");
  if (rotation_angle_degrees < 0.0 || rotation_angle_degrees > 180.0)
    throw ConfigError("shift spec: rotation angle must lie in [0, 180]");
  if (!(noise_sigma >= 0.0)) throw ConfigError("shift spec: noise_sigma must be >= 0");
  if (!(translation_magnitude >= 0.0))
    throw ConfigError("shift spec: translation_magnitude must be >= 0");
}

namespace {

// Constellation centroid distance from the origin and per-class scatter, in
// intrinsic coordinates. Rotating off-center data about the origin shifts
// the whole cloud, so the angle alone controls severity; the offset/scatter
// ratio makes a 45-degree rotation displace the cloud by about half its
// class separation.
constexpr double kConstellationOffset = 10.0;
constexpr double kClassScatter = 2.0;

Matrix gaussian_matrix(Index rows, Index cols, rng::Engine& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

Vector unit_gaussian_vector(Index n, rng::Engine& rng) {
  Vector v(n);
  double norm = 0.0;
  do {
    for (Index i = 0; i < n; ++i) v(i) = rng.normal();
    norm = v.norm();
  } while (norm < 1e-12);
  return v / norm;
}

FeatureDataset shuffled_dataset(Matrix X, std::vector<int> labels,
                                int class_count, std::uint64_t seed,
                                std::string tag) {
  std::vector<Index> order = permutation(X.rows(), seed);
  Matrix Xs(X.rows(), X.cols());
  std::vector<int> ys(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    Xs.row(static_cast<Index>(i)) = X.row(order[i]);
    ys[i] = labels[static_cast<std::size_t>(order[i])];
  }
  return FeatureDataset(std::move(Xs), std::move(ys), class_count,
                        std::move(tag));
}

}  // namespace

double ShiftPair::shift_magnitude() const {
  const Matrix& X = source.features();
  Matrix moved = X * rotation.transpose();
  moved.rowwise() += translation.transpose();
  return std::sqrt((moved - X).squaredNorm() / static_cast<double>(X.rows()));
}

ShiftPair generate_shift_pair(const ShiftSpec& spec) {
  spec.validate();
  const Index D = spec.ambient_dim;
  const Index k = spec.intrinsic_dim;
  const int C = spec.class_count;
  const Index n = static_cast<Index>(C) * spec.samples_per_class;

  rng::Engine plane_rng(rng::substream(spec.seed, 1));
  rng::Engine mean_rng(rng::substream(spec.seed, 2));
  rng::Engine src_noise_rng(rng::substream(spec.seed, 3));
  rng::Engine tgt_noise_rng(rng::substream(spec.seed, 4));
  rng::Engine rot_rng(rng::substream(spec.seed, 5));
  rng::Engine trans_rng(rng::substream(spec.seed, 6));

  // random k-plane through the origin
  Matrix G = gaussian_matrix(D, k, plane_rng);
  Eigen::HouseholderQR<Matrix> qr(G);
  Matrix plane = Matrix(qr.householderQ()).leftCols(k);

  // class means: shared offset from the origin plus per-class scatter
  Vector offset_dir = unit_gaussian_vector(k, mean_rng);
  Matrix means_intrinsic(C, k);
  for (int c = 0; c < C; ++c) {
    for (Index j = 0; j < k; ++j)
      means_intrinsic(c, j) = kConstellationOffset * offset_dir(j) +
                              kClassScatter * mean_rng.normal();
  }
  Matrix means_ambient = means_intrinsic * plane.transpose();  // C x D

  // rotation plane: in-plane leg along the constellation offset so the
  // angle reliably moves the cloud; second leg leaves the data plane when
  // the ambient space has room.
  const double theta = spec.rotation_angle_degrees * M_PI / 180.0;
  Vector u = plane * offset_dir;
  Vector v(D);
  {
    double norm = 0.0;
    do {
      v = unit_gaussian_vector(D, rot_rng);
      if (D > k) v -= plane * (plane.transpose() * v);  // leave the data plane
      v -= u * u.dot(v);
      norm = v.norm();
    } while (norm < 1e-8);
    v /= norm;
  }
  Matrix rotation = Matrix::Identity(D, D);
  rotation += (std::cos(theta) - 1.0) * (u * u.transpose() + v * v.transpose());
  rotation += std::sin(theta) * (v * u.transpose() - u * v.transpose());

  Vector translation = Vector::Zero(D);
  if (spec.translation_magnitude > 0.0)
    translation = spec.translation_magnitude * unit_gaussian_vector(D, trans_rng);

  Matrix Xs(n, D), Xt(n, D);
  std::vector<int> labels(static_cast<std::size_t>(n));
  Index row = 0;
  for (int c = 0; c < C; ++c) {
    for (Index s = 0; s < spec.samples_per_class; ++s, ++row) {
      labels[static_cast<std::size_t>(row)] = c;
      Vector clean = means_ambient.row(c).transpose();
      Vector xs = clean;
      Vector xt = clean;
      for (Index j = 0; j < D; ++j) {
        xs(j) += spec.noise_sigma * src_noise_rng.normal();
        xt(j) += spec.noise_sigma * tgt_noise_rng.normal();
      }
      Xs.row(row) = xs.transpose();
      Xt.row(row) = (rotation * xt + translation).transpose();
    }
  }

  std::vector<int> tgt_labels = labels;
  ShiftPair pair{
      shuffled_dataset(std::move(Xs), std::move(labels), C,
                       rng::substream(spec.seed, 7), "source"),
      shuffled_dataset(std::move(Xt), std::move(tgt_labels), C,
                       rng::substream(spec.seed, 8), "target"),
      std::move(rotation),
      std::move(translation),
      std::move(plane),
      std::move(means_ambient)};
  return pair;
}

// -- CSV ------------------------------------------------------------------

FeatureDataset load_csv(const std::string& path, bool has_labels,
                        const std::string& domain_tag) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");

  auto split_fields = [](const std::string& s) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : s) {
      if (ch == ',') {
        fields.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur += ch;
      }
    }
    fields.push_back(cur);
    return fields;
  };

  const std::vector<std::string> header = split_fields(line);
  const std::size_t n_cols = header.size();
  const std::size_t n_feat = has_labels ? n_cols - 1 : n_cols;
  if (n_feat < 1) throw SchemaError(path + ": no feature columns in header");
  for (std::size_t j = 0; j < n_feat; ++j) {
    if (header[j] != "f" + std::to_string(j))
      throw SchemaError(path + ": expected header column f" +
                        std::to_string(j) + ", got '" + header[j] + "'");
  }
  if (has_labels && header.back() != "label")
    throw SchemaError(path + ": expected trailing 'label' column");

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != n_cols) {
      std::ostringstream os;
      os << path << ":" << line_no << ": expected " << n_cols
         << " columns, got " << fields.size();
      throw SchemaError(os.str());
    }
    std::vector<double> row(n_feat);
    for (std::size_t j = 0; j < n_feat; ++j) {
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(fields[j], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != fields[j].size() || fields[j].empty()) {
        std::ostringstream os;
        os << path << ":" << line_no << ": bad number '" << fields[j] << "'";
        throw ParseError(os.str());
      }
      if (!std::isfinite(value)) {
        std::ostringstream os;
        os << path << ":" << line_no << ": non-finite value";
        throw ParseError(os.str());
      }
      row[j] = value;
    }
    if (has_labels) {
      const std::string& f = fields.back();
      std::size_t used = 0;
      long y = 0;
      try {
        y = std::stol(f, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != f.size() || f.empty() || y < 0) {
        std::ostringstream os;
        os << path << ":" << line_no << ": bad label '" << f << "'";
        throw ParseError(os.str());
      }
      labels.push_back(static_cast<int>(y));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");

  Matrix X(static_cast<Index>(rows.size()), static_cast<Index>(n_feat));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < n_feat; ++j)
      X(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];

  const std::string tag = domain_tag.empty() ? path : domain_tag;
  if (has_labels) {
    const int C = *std::max_element(labels.begin(), labels.end()) + 1;
    return FeatureDataset(std::move(X), std::move(labels), C, tag);
  }
  return FeatureDataset(std::move(X), tag);
}

void save_csv(const FeatureDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  const Matrix& X = data.features();
  for (Index j = 0; j < X.cols(); ++j) {
    if (j) out << ',';
    out << 'f' << j;
  }
  if (data.has_labels()) out << ",label";
  out << '\n';

  char buf[64];
  for (Index i = 0; i < X.rows(); ++i) {
    for (Index j = 0; j < X.cols(); ++j) {
      if (j) out << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", X(i, j));
      out << buf;
    }
    if (data.has_labels())
      out << ',' << data.labels()[static_cast<std::size_t>(i)];
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace salt
