#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "salt/linalg.hpp"

namespace salt {

// Labeled or unlabeled matrix of feature rows plus a domain tag. Feature
// reads go through features() and are counted, which lets tests audit that
// a training mode never touched a given domain.
class FeatureDataset {
 public:
  FeatureDataset(Matrix features, std::string domain_tag);
  FeatureDataset(Matrix features, std::vector<int> labels, int class_count,
                 std::string domain_tag);

  const Matrix& features() const {
    ++feature_reads_;
    return features_;
  }

  bool has_labels() const { return !labels_.empty(); }
  const std::vector<int>& labels() const { return labels_; }
  int class_count() const { return class_count_; }

  Index size() const { return n_; }
  Index dim() const { return d_; }
  const std::string& domain_tag() const { return domain_tag_; }

  std::uint64_t feature_access_count() const { return feature_reads_; }

 private:
  Matrix features_;
  std::vector<int> labels_;  // empty when unlabeled
  int class_count_ = 0;      // 0 when unknown
  std::string domain_tag_;
  Index n_ = 0;
  Index d_ = 0;
  mutable std::uint64_t feature_reads_ = 0;
};

/// Seeded permutation split; |first| = round(fraction * n), parts disjoint.
std::pair<FeatureDataset, FeatureDataset> split(const FeatureDataset& data,
                                                double fraction,
                                                std::uint64_t seed);

/// n draws with replacement; labels carried along when present.
FeatureDataset bootstrap(const FeatureDataset& data, std::uint64_t seed);

/// Seeded subsample without replacement of round(fraction * n) rows.
FeatureDataset subsample(const FeatureDataset& data, double fraction,
                         std::uint64_t seed);

/// Seeded shuffle then contiguous slices; last batch may be smaller.
std::vector<std::vector<Index>> batches(Index n, Index batch_size,
                                        std::uint64_t seed);

// -- synthetic covariate-shift generator --------------------------------

struct ShiftSpec {
  int class_count = 3;
  Index ambient_dim = 10;
  Index intrinsic_dim = 4;
  Index samples_per_class = 200;
  double rotation_angle_degrees = 45.0;
  double translation_magnitude = 0.0;
  double noise_sigma = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

// The generating transform (target = rotation * x + translation) is kept so
// tests can invert the shift and report its magnitude.
struct ShiftPair {
  FeatureDataset source;
  FeatureDataset target;
  Matrix rotation;             // D x D
  Vector translation;          // D
  Matrix plane_basis;          // D x intrinsic_dim, orthonormal
  Matrix class_means_ambient;  // C x D, pre-shift means

  /// RMS displacement of source points under the generating transform.
  double shift_magnitude() const;
};

/// C Gaussian clusters on a random plane; target is the same structure
/// rotated inside a seeded random 2-plane and translated. Target labels are
/// returned for evaluation only.
ShiftPair generate_shift_pair(const ShiftSpec& spec);

// -- CSV ingestion -------------------------------------------------------

/// Header `f0,...,f{D-1}[,label]`; 17-significant-digit decimals.
FeatureDataset load_csv(const std::string& path, bool has_labels,
                        const std::string& domain_tag = "");

void save_csv(const FeatureDataset& data, const std::string& path);

}  // namespace salt
