#include "kraw/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "random_util.hpp"

namespace kraw::data {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string where(const fs::path& file, std::size_t line) {
  return file.filename().string() + ":" + std::to_string(line) + ": ";
}

/// Splits a CSV line on commas, trimming spaces and a trailing CR.
std::vector<std::string_view> split_fields(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma == std::string_view::npos ? line.npos
                                                                                 : comma - start);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
    out.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, const fs::path& file, std::size_t line) {
  T value{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw DatasetError(where(file, line) + "cannot parse '" + std::string(s) + "'");
  }
  return value;
}

/// Non-empty lines of a text file with their 1-based line numbers.
std::vector<std::pair<std::size_t, std::string>> read_lines(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DatasetError("missing file " + file.string());
  std::vector<std::pair<std::size_t, std::string>> lines;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.emplace_back(number, line);
  }
  return lines;
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DatasetError("missing file " + file.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DatasetError(file.filename().string() + ": " + e.what());
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

Split split_from_json(const json& j, const fs::path& file) {
  try {
    return Split{j.at("train").get<std::vector<std::size_t>>(),
                 j.at("val").get<std::vector<std::size_t>>(),
                 j.at("test").get<std::vector<std::size_t>>()};
  } catch (const json::exception& e) {
    throw DatasetError(file.filename().string() + ": malformed split: " + e.what());
  }
}

json split_to_json(const Split& s) {
  return json{{"train", s.train}, {"val", s.val}, {"test", s.test}};
}

std::vector<std::vector<std::size_t>> members_by_class(const std::vector<int>& labels,
                                                       int num_classes) {
  std::vector<std::vector<std::size_t>> members(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw std::invalid_argument("label " + std::to_string(labels[i]) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
    members[labels[i]].push_back(i);
  }
  return members;
}

void sort_split(Split& s) {
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
}

}  // namespace

void Split::validate(std::size_t num_nodes) const {
  if (train.empty() || val.empty() || test.empty()) {
    throw DatasetError("split: train, val and test must all be nonempty");
  }
  std::vector<char> seen(num_nodes, 0);
  for (const auto* part : {&train, &val, &test}) {
    for (std::size_t i : *part) {
      if (i >= num_nodes) {
        throw DatasetError("split: node index " + std::to_string(i) + " out of range");
      }
      if (seen[i]) throw DatasetError("split: node " + std::to_string(i) + " appears twice");
      seen[i] = 1;
    }
  }
}

void Dataset::validate() const {
  const std::size_t n = labels.size();
  if (n == 0) throw DatasetError(name + ": dataset has no nodes");
  if (features.rows() != n) {
    throw DatasetError(name + ": " + std::to_string(features.rows()) + " feature rows for " +
                       std::to_string(n) + " nodes");
  }
  if (graph.num_nodes() != n) throw DatasetError(name + ": graph size does not match labels");
  if (num_classes < 1) throw DatasetError(name + ": need at least one class");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw DatasetError(name + ": label " + std::to_string(labels[i]) + " of node " +
                         std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  if (!features.all_finite()) throw DatasetError(name + ": non-finite feature value");
  if (splits.empty()) throw DatasetError(name + ": no splits");
  for (const Split& s : splits) s.validate(n);
}

void row_normalize_l1(Matrix& features) {
  for (std::size_t r = 0; r < features.rows(); ++r) {
    auto row = features.row(r);
    double norm = 0.0;
    for (double v : row) norm += std::abs(v);
    if (norm == 0.0) continue;
    for (double& v : row) v /= norm;
  }
}

Dataset load_dataset(const fs::path& dir, const LoadOptions& options,
                     std::vector<std::string>* warnings) {
  Dataset ds;
  const json meta = read_json(dir / "meta.json");
  std::size_t n = 0;
  std::size_t f = 0;
  try {
    ds.name = meta.at("name").get<std::string>();
    n = meta.at("n").get<std::size_t>();
    f = meta.at("F").get<std::size_t>();
    ds.num_classes = meta.at("C").get<int>();
  } catch (const json::exception& e) {
    throw DatasetError(std::string("meta.json: ") + e.what());
  }
  if (n == 0 || f == 0 || ds.num_classes < 1) {
    throw DatasetError("meta.json: n, F and C must be positive");
  }

  // Labels.
  {
    const fs::path file = dir / "labels.csv";
    const auto lines = read_lines(file);
    if (lines.size() != n) {
      throw DatasetError(file.filename().string() + ": expected " + std::to_string(n) +
                         " labels, found " + std::to_string(lines.size()));
    }
    ds.labels.reserve(n);
    for (const auto& [number, text] : lines) {
      const auto fields = split_fields(text);
      if (fields.size() != 1) throw DatasetError(where(file, number) + "expected one label");
      const int y = parse_number<int>(fields[0], file, number);
      if (y < 0 || y >= ds.num_classes) {
        throw DatasetError(where(file, number) + "label " + std::to_string(y) + " outside [0, " +
                           std::to_string(ds.num_classes) + ")");
      }
      ds.labels.push_back(y);
    }
  }

  // Features, dense or sparse.
  ds.features = Matrix(n, f);
  if (fs::exists(dir / "features.csv")) {
    const fs::path file = dir / "features.csv";
    const auto lines = read_lines(file);
    if (lines.size() != n) {
      throw DatasetError(file.filename().string() + ": expected " + std::to_string(n) +
                         " rows, found " + std::to_string(lines.size()));
    }
    for (std::size_t r = 0; r < n; ++r) {
      const auto& [number, text] = lines[r];
      const auto fields = split_fields(text);
      if (fields.size() != f) {
        throw DatasetError(where(file, number) + "expected " + std::to_string(f) +
                           " values, found " + std::to_string(fields.size()));
      }
      for (std::size_t c = 0; c < f; ++c) {
        const double v = parse_number<double>(fields[c], file, number);
        if (!std::isfinite(v)) throw DatasetError(where(file, number) + "non-finite value");
        ds.features(r, c) = v;
      }
    }
  } else if (fs::exists(dir / "features_sparse.csv")) {
    const fs::path file = dir / "features_sparse.csv";
    for (const auto& [number, text] : read_lines(file)) {
      const auto fields = split_fields(text);
      if (fields.size() != 3) throw DatasetError(where(file, number) + "expected node,feature,value");
      const auto node = parse_number<std::size_t>(fields[0], file, number);
      const auto feat = parse_number<std::size_t>(fields[1], file, number);
      const double v = parse_number<double>(fields[2], file, number);
      if (node >= n || feat >= f) throw DatasetError(where(file, number) + "index out of range");
      if (!std::isfinite(v)) throw DatasetError(where(file, number) + "non-finite value");
      ds.features(node, feat) = v;
    }
  } else {
    throw DatasetError("missing file " + (dir / "features.csv").string() +
                       " (or features_sparse.csv)");
  }
  if (options.row_normalize) row_normalize_l1(ds.features);

  // Edges.
  {
    const fs::path file = dir / "edges.csv";
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& [number, text] : read_lines(file)) {
      const auto fields = split_fields(text);
      if (fields.size() != 2) throw DatasetError(where(file, number) + "expected two node ids");
      const auto u = parse_number<std::size_t>(fields[0], file, number);
      const auto v = parse_number<std::size_t>(fields[1], file, number);
      if (u >= n || v >= n) {
        throw DatasetError(where(file, number) + "edge (" + std::to_string(u) + ", " +
                           std::to_string(v) + ") references a node >= " + std::to_string(n));
      }
      edges.emplace_back(u, v);
    }
    graph::Graph::BuildReport report;
    ds.graph = graph::Graph::from_edges(n, edges, &report);
    if (warnings) {
      if (report.duplicates_dropped > 0) {
        warnings->push_back("edges.csv: " + std::to_string(report.duplicates_dropped) +
                            " duplicate undirected edges merged");
      }
      if (report.self_loops_dropped > 0) {
        warnings->push_back("edges.csv: " + std::to_string(report.self_loops_dropped) +
                            " self-loops dropped");
      }
    }
  }

  // Splits.
  {
    const fs::path file = dir / "splits.json";
    const json j = read_json(file);
    if (j.contains("folds")) {
      for (const auto& fold : j.at("folds")) ds.splits.push_back(split_from_json(fold, file));
      ds.split_protocol = "folds";
    } else {
      ds.splits.push_back(split_from_json(j, file));
      ds.split_protocol = "public";
    }
    try {
      for (const Split& s : ds.splits) s.validate(n);
    } catch (const DatasetError& e) {
      throw DatasetError("splits.json: " + std::string(e.what()));
    }
  }
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  ds.validate();
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DatasetError("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("meta.json");
    const json meta{{"name", ds.name},
                    {"n", ds.num_nodes()},
                    {"F", ds.num_features()},
                    {"C", ds.num_classes}};
    out << meta.dump(1) << '\n';
  }
  {
    auto out = open("edges.csv");
    for (auto [u, v] : ds.graph.edges()) out << u << ',' << v << '\n';
  }
  {
    auto out = open("features.csv");
    for (std::size_t r = 0; r < ds.features.rows(); ++r) {
      const auto row = ds.features.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) out << ',';
        out << format_double(row[c]);
      }
      out << '\n';
    }
  }
  {
    auto out = open("labels.csv");
    for (int y : ds.labels) out << y << '\n';
  }
  {
    auto out = open("splits.json");
    json j;
    if (ds.splits.size() == 1 && ds.split_protocol != "folds") {
      j = split_to_json(ds.splits[0]);
    } else {
      j["folds"] = json::array();
      for (const Split& s : ds.splits) j["folds"].push_back(split_to_json(s));
    }
    out << j.dump() << '\n';
  }
}

double edge_homophily(const graph::Graph& g, const std::vector<int>& labels) {
  if (g.num_edges() == 0) throw std::invalid_argument("edge_homophily: graph has no edges");
  std::size_t same = 0;
  for (auto [u, v] : g.edges()) same += labels.at(u) == labels.at(v);
  return static_cast<double>(same) / static_cast<double>(g.num_edges());
}

double edge_homophily(const Dataset& dataset) {
  return edge_homophily(dataset.graph, dataset.labels);
}

Split per_class_split(const std::vector<int>& labels, int num_classes, std::size_t per_class,
                      std::size_t num_val, std::size_t num_test, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto members = members_by_class(labels, num_classes);
  Split s;
  std::vector<std::size_t> rest;
  for (auto& m : members) {
    if (m.size() <= per_class) {
      throw std::invalid_argument("per_class_split: a class has only " + std::to_string(m.size()) +
                                  " nodes, need more than " + std::to_string(per_class));
    }
    detail::shuffle(m, rng);
    s.train.insert(s.train.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(per_class));
    rest.insert(rest.end(), m.begin() + static_cast<std::ptrdiff_t>(per_class), m.end());
  }
  if (rest.size() < num_val + num_test) {
    throw std::invalid_argument("per_class_split: not enough nodes for validation and test");
  }
  std::sort(rest.begin(), rest.end());
  detail::shuffle(rest, rng);
  s.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(num_val));
  s.test.assign(rest.begin() + static_cast<std::ptrdiff_t>(num_val),
                rest.begin() + static_cast<std::ptrdiff_t>(num_val + num_test));
  sort_split(s);
  return s;
}

Split stratified_split(const std::vector<int>& labels, int num_classes, double train_fraction,
                       double val_fraction, std::uint64_t seed) {
  if (train_fraction <= 0.0 || val_fraction <= 0.0 || train_fraction + val_fraction >= 1.0) {
    throw std::invalid_argument("stratified_split: fractions must be positive and sum below 1");
  }
  std::mt19937_64 rng(seed);
  auto members = members_by_class(labels, num_classes);
  Split s;
  for (auto& m : members) {
    detail::shuffle(m, rng);
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * m.size()));
    const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * m.size()));
    s.train.insert(s.train.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.insert(s.val.end(), m.begin() + static_cast<std::ptrdiff_t>(n_train),
                 m.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.insert(s.test.end(), m.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), m.end());
  }
  sort_split(s);
  s.validate(labels.size());
  return s;
}

std::vector<Split> stratified_folds(const std::vector<int>& labels, int num_classes,
                                    std::size_t count, std::uint64_t seed) {
  std::vector<Split> folds;
  folds.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    folds.push_back(stratified_split(labels, num_classes, 0.6, 0.2, seed + i));
  return folds;
}

void SbmConfig::validate() const {
  if (num_nodes == 0) throw std::invalid_argument("SbmConfig: num_nodes must be positive");
  if (num_classes < 1) throw std::invalid_argument("SbmConfig: num_classes must be positive");
  if (static_cast<std::size_t>(num_classes) > num_nodes) {
    throw std::invalid_argument("SbmConfig: more classes than nodes");
  }
  if (!(homophily >= 0.0 && homophily <= 1.0)) {
    throw std::invalid_argument("SbmConfig: homophily must lie in [0,1]");
  }
  if (!(mean_degree > 0.0)) throw std::invalid_argument("SbmConfig: mean_degree must be positive");
  if (num_features == 0) throw std::invalid_argument("SbmConfig: num_features must be positive");
  if (homophily < 1.0 && num_classes < 2) {
    throw std::invalid_argument("SbmConfig: inter-class edges need at least two classes");
  }
  if (homophily > 0.0 && num_nodes < 2 * static_cast<std::size_t>(num_classes)) {
    throw std::invalid_argument("SbmConfig: intra-class edges need two nodes per class");
  }
  if (class_separation < 0.0 || feature_noise < 0.0) {
    throw std::invalid_argument("SbmConfig: feature scales must be nonnegative");
  }
}

Dataset generate_sbm(const SbmConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const std::size_t n = cfg.num_nodes;
  const auto C = static_cast<std::size_t>(cfg.num_classes);

  Dataset ds;
  std::ostringstream name;
  name << "sbm-h" << cfg.homophily << "-s" << cfg.seed;
  ds.name = name.str();
  ds.num_classes = cfg.num_classes;

  // Balanced labels in random order.
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(i % C);
  detail::shuffle(ds.labels, rng);
  const auto members = members_by_class(ds.labels, cfg.num_classes);

  const auto target = static_cast<std::size_t>(std::llround(n * cfg.mean_degree / 2.0));
  const std::size_t max_edges = n * (n - 1) / 2;
  if (target > max_edges) throw std::invalid_argument("SbmConfig: mean degree too high for n");
  std::unordered_set<std::uint64_t> seen;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(target);
  std::size_t attempts = 0;
  const std::size_t max_attempts = 100 * target + 1000;
  while (edges.size() < target) {
    if (++attempts > max_attempts) {
      throw std::invalid_argument("generate_sbm: cannot place " + std::to_string(target) +
                                  " distinct edges under this homophily");
    }
    const std::size_t u = detail::uniform_index(rng, n);
    const auto& own = members[ds.labels[u]];
    std::size_t v;
    if (detail::uniform01(rng) < cfg.homophily) {
      if (own.size() < 2) continue;
      do {
        v = own[detail::uniform_index(rng, own.size())];
      } while (v == u);
    } else {
      do {
        v = detail::uniform_index(rng, n);
      } while (ds.labels[v] == ds.labels[u]);
    }
    const std::uint64_t key = std::min(u, v) * n + std::max(u, v);
    if (!seen.insert(key).second) continue;
    edges.emplace_back(u, v);
  }
  ds.graph = graph::Graph::from_edges(n, edges);

  // Class means of norm class_separation, plus isotropic noise.
  const std::size_t f = cfg.num_features;
  Matrix means(C, f);
  for (std::size_t c = 0; c < C; ++c) {
    double norm = 0.0;
    for (std::size_t j = 0; j < f; ++j) {
      means(c, j) = detail::standard_normal(rng);
      norm += means(c, j) * means(c, j);
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < f; ++j) means(c, j) *= cfg.class_separation / norm;
  }
  ds.features = Matrix(n, f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j)
      ds.features(i, j) =
          means(ds.labels[i], j) + cfg.feature_noise * detail::standard_normal(rng);

  const std::uint64_t split_seed = rng();
  switch (cfg.split) {
    case SplitProtocol::per_class:
      ds.splits.push_back(per_class_split(ds.labels, cfg.num_classes, 20, 500, 1000, split_seed));
      ds.split_protocol = "per_class";
      break;
    case SplitProtocol::random:
      ds.splits.push_back(stratified_split(ds.labels, cfg.num_classes, 0.6, 0.2, split_seed));
      ds.split_protocol = "random";
      break;
    case SplitProtocol::folds:
      ds.splits = stratified_folds(ds.labels, cfg.num_classes, 10, split_seed);
      ds.split_protocol = "folds";
      break;
  }
  ds.validate();
  return ds;
}

}  // namespace kraw::data
