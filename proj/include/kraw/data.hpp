#pragma once

// Node-classification datasets: on-disk format, splits, and a synthetic
// stochastic block model with a single homophily knob.
//
// On-disk layout (one directory per dataset):
//   meta.json             {"name": str, "n": int, "F": int, "C": int}
//   edges.csv             "u,v" per line, undirected, no header
//   features.csv          n rows of F comma-separated reals
//     or features_sparse.csv  "node,feature,value" triples (absent = 0)
//   labels.csv            one integer in [0, C) per line
//   splits.json           {"train": [...], "val": [...], "test": [...]}
//                         or {"folds": [{"train": ..., "val": ..., "test": ...}, ...]}

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "kraw/graph.hpp"
#include "kraw/matrix.hpp"

namespace kraw::data {

/// Ingestion failure; the message names the file and line when known.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  /// Nonempty, in range, pairwise disjoint. Throws DatasetError.
  void validate(std::size_t num_nodes) const;
};

struct Dataset {
  std::string name;
  Matrix features;  // n x F
  std::vector<int> labels;
  int num_classes = 0;
  graph::Graph graph;
  /// One split, or one per fold.
  std::vector<Split> splits;
  /// How the splits were produced ("public", "folds", "per_class", "random").
  std::string split_protocol = "public";

  std::size_t num_nodes() const { return labels.size(); }
  std::size_t num_features() const { return features.cols(); }
  /// Throws DatasetError when an invariant does not hold.
  void validate() const;
};

struct LoadOptions {
  /// Scale each feature row to unit L1 norm (all-zero rows stay zero).
  bool row_normalize = true;
};

Dataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options = {},
                     std::vector<std::string>* warnings = nullptr);
/// Writes the dense feature encoding. Reals use shortest round-trip form.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

void row_normalize_l1(Matrix& features);

double edge_homophily(const graph::Graph& g, const std::vector<int>& labels);
double edge_homophily(const Dataset& dataset);

// Split generators. All are stratified by class and deterministic in `seed`.

/// `per_class` training nodes from every class, then `num_val` and `num_test`
/// nodes from the remainder (the Planetoid layout).
Split per_class_split(const std::vector<int>& labels, int num_classes, std::size_t per_class,
                      std::size_t num_val, std::size_t num_test, std::uint64_t seed);
/// Each class is divided train/val/test by the given fractions.
Split stratified_split(const std::vector<int>& labels, int num_classes, double train_fraction,
                       double val_fraction, std::uint64_t seed);
/// `count` independent stratified 60/20/20 splits.
std::vector<Split> stratified_folds(const std::vector<int>& labels, int num_classes,
                                    std::size_t count, std::uint64_t seed);

enum class SplitProtocol { per_class, random, folds };

struct SbmConfig {
  std::size_t num_nodes = 2000;
  int num_classes = 5;
  /// Probability that a sampled edge joins two nodes of the same class.
  double homophily = 0.8;
  double mean_degree = 10.0;
  std::size_t num_features = 32;
  /// Norm of each class-mean feature vector.
  double class_separation = 1.0;
  /// Per-coordinate standard deviation of node feature noise.
  double feature_noise = 1.0;
  std::uint64_t seed = 0;
  SplitProtocol split = SplitProtocol::random;

  void validate() const;
};

Dataset generate_sbm(const SbmConfig& config);

}  // namespace kraw::data
