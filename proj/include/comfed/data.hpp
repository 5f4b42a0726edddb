#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "comfed/rng.hpp"

namespace comfed {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Row-major sample matrix with integer labels in [0, num_classes).
struct Dataset {
  std::size_t dim = 0;
  int num_classes = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const noexcept {
    return {features.data() + i * dim, dim};
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Non-owning view over some rows of a Dataset. With no index list it spans
// every row in storage order.
class BatchView {
 public:
  explicit BatchView(const Dataset& ds) : ds_(&ds) {}
  BatchView(const Dataset& ds, std::span<const std::size_t> rows) : ds_(&ds), rows_(rows), all_(false) {}

  std::size_t size() const noexcept { return all_ ? ds_->size() : rows_.size(); }
  std::size_t dim() const noexcept { return ds_->dim; }
  std::size_t index(std::size_t i) const noexcept { return all_ ? i : rows_[i]; }
  std::span<const double> features(std::size_t i) const noexcept { return ds_->row(index(i)); }
  int label(std::size_t i) const noexcept { return ds_->labels[index(i)]; }

 private:
  const Dataset* ds_;
  std::span<const std::size_t> rows_;
  bool all_ = true;
};

// Client shards D_i and their data ratios p_i = n_i / sum n_j.
struct Partition {
  std::vector<std::vector<std::size_t>> assignment;
  std::vector<std::size_t> counts;
  std::vector<double> ratios;

  std::size_t num_clients() const noexcept { return assignment.size(); }
};

inline Partition make_partition(std::vector<std::vector<std::size_t>> assignment) {
  Partition p;
  p.assignment = std::move(assignment);
  std::size_t total = 0;
  for (auto& a : p.assignment) {
    p.counts.push_back(a.size());
    total += a.size();
  }
  for (auto n : p.counts)
    p.ratios.push_back(total ? static_cast<double>(n) / static_cast<double>(total) : 0.0);
  return p;
}

// Gaussian blobs, one per class. Class means are standard normal vectors;
// samples are mean + spread * N(0, I). Rows are grouped by class.
inline Dataset gen_synthetic(int num_classes, std::size_t dim, std::size_t samples_per_class,
                             double spread, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("gen_synthetic: need at least 2 classes");
  if (dim < 1) throw std::invalid_argument("gen_synthetic: dim must be >= 1");
  if (samples_per_class < 1) throw std::invalid_argument("gen_synthetic: samples_per_class must be >= 1");
  if (!(spread > 0.0)) throw std::invalid_argument("gen_synthetic: spread must be > 0");

  auto eng = make_engine(seed, Stream::synthetic);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> means(static_cast<std::size_t>(num_classes) * dim);
  for (auto& m : means) m = normal(eng);

  Dataset ds;
  ds.dim = dim;
  ds.num_classes = num_classes;
  ds.features.reserve(static_cast<std::size_t>(num_classes) * samples_per_class * dim);
  for (int k = 0; k < num_classes; ++k) {
    for (std::size_t s = 0; s < samples_per_class; ++s) {
      for (std::size_t j = 0; j < dim; ++j)
        ds.features.push_back(means[static_cast<std::size_t>(k) * dim + j] + spread * normal(eng));
      ds.labels.push_back(k);
    }
  }
  return ds;
}

inline Dataset subset(const Dataset& ds, std::span<const std::size_t> rows) {
  Dataset out;
  out.dim = ds.dim;
  out.num_classes = ds.num_classes;
  out.features.reserve(rows.size() * ds.dim);
  for (auto r : rows) {
    auto f = ds.row(r);
    out.features.insert(out.features.end(), f.begin(), f.end());
    out.labels.push_back(ds.labels[r]);
  }
  return out;
}

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

// Stratified split: within each class, round(test_fraction * n_k) samples
// (at least one when the class has two or more) go to the test set.
inline TrainTestSplit train_test_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("train_test_split: test_fraction must be in (0,1)");
  auto eng = make_engine(seed, Stream::split);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes));
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  std::vector<std::size_t> train_rows, test_rows;
  for (auto& idx : by_class) {
    std::shuffle(idx.begin(), idx.end(), eng);
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
    if (n_test == 0 && idx.size() >= 2) n_test = 1;
    if (n_test >= idx.size() && !idx.empty()) n_test = idx.size() - 1;
    test_rows.insert(test_rows.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_rows.insert(train_rows.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {subset(ds, train_rows), subset(ds, test_rows)};
}

namespace detail {

inline std::vector<double> sample_dirichlet(std::size_t n, double alpha, Engine& eng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> q(n);
  double sum = 0.0;
  for (auto& x : q) {
    x = gamma(eng);
    sum += x;
  }
  if (!(sum > 0.0)) {
    // Every draw underflowed; fall back to a uniform split.
    std::fill(q.begin(), q.end(), 1.0 / static_cast<double>(n));
    return q;
  }
  for (auto& x : q) x /= sum;
  return q;
}

}  // namespace detail

// Per-class Dirichlet allocation: for each class k, q_k ~ Dir(alpha * 1_N);
// the class's (shuffled) samples are cut into N consecutive runs whose
// lengths follow the cumulative proportions of q_k. Empty clients then take
// one sample from the currently largest client.
inline Partition dirichlet_partition(const Dataset& ds, std::size_t num_clients, double alpha,
                                     std::uint64_t seed) {
  if (num_clients < 1) throw std::invalid_argument("dirichlet_partition: need at least one client");
  if (!(alpha > 0.0)) throw std::invalid_argument("dirichlet_partition: alpha must be > 0");
  if (num_clients > ds.size())
    throw DataError("dirichlet_partition: " + std::to_string(num_clients) + " clients exceed " +
                    std::to_string(ds.size()) + " samples");

  auto eng = make_engine(seed, Stream::partition);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.num_classes));
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  std::vector<std::vector<std::size_t>> assignment(num_clients);
  for (auto& idx : by_class) {
    if (idx.empty()) continue;
    std::shuffle(idx.begin(), idx.end(), eng);
    auto q = detail::sample_dirichlet(num_clients, alpha, eng);
    const auto n = static_cast<double>(idx.size());
    double cum = 0.0;
    std::size_t start = 0;
    for (std::size_t c = 0; c < num_clients; ++c) {
      cum += q[c];
      std::size_t stop = c + 1 == num_clients ? idx.size()
                                              : std::min(idx.size(), static_cast<std::size_t>(cum * n));
      stop = std::max(stop, start);
      assignment[c].insert(assignment[c].end(), idx.begin() + static_cast<std::ptrdiff_t>(start),
                           idx.begin() + static_cast<std::ptrdiff_t>(stop));
      start = stop;
    }
  }

  for (std::size_t c = 0; c < num_clients; ++c) {
    if (!assignment[c].empty()) continue;
    auto largest = std::max_element(assignment.begin(), assignment.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    if (largest->size() < 2) throw DataError("dirichlet_partition: cannot repair empty client");
    assignment[c].push_back(largest->back());
    largest->pop_back();
  }
  for (auto& a : assignment) std::sort(a.begin(), a.end());
  return make_partition(std::move(assignment));
}

// Equal-size contiguous split after a seeded shuffle. Used for IID baselines.
inline Partition iid_partition(std::size_t num_samples, std::size_t num_clients, std::uint64_t seed) {
  if (num_clients < 1 || num_clients > num_samples)
    throw DataError("iid_partition: need 1 <= clients <= samples");
  std::vector<std::size_t> idx(num_samples);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto eng = make_engine(seed, Stream::partition);
  std::shuffle(idx.begin(), idx.end(), eng);
  std::vector<std::vector<std::size_t>> assignment(num_clients);
  for (std::size_t i = 0; i < num_samples; ++i) assignment[i % num_clients].push_back(idx[i]);
  for (auto& a : assignment) std::sort(a.begin(), a.end());
  return make_partition(std::move(assignment));
}

// Shuffled mini-batches for one epoch. The last batch may be short.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::span<const std::size_t> shard,
                                                           std::size_t batch_size, Engine& eng) {
  if (shard.empty()) throw DataError("epoch_batches: empty shard");
  if (batch_size < 1) throw std::invalid_argument("epoch_batches: batch size must be >= 1");
  std::vector<std::size_t> order(shard.begin(), shard.end());
  std::shuffle(order.begin(), order.end(), eng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t s = 0; s < order.size(); s += batch_size) {
    auto e = std::min(order.size(), s + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s), order.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return batches;
}

inline std::vector<std::vector<std::size_t>> epoch_batches(std::span<const std::size_t> shard,
                                                           std::size_t batch_size, std::uint64_t seed,
                                                           std::uint64_t client, std::uint64_t round,
                                                           std::uint64_t epoch) {
  auto eng = make_engine(seed, Stream::batching, {client, round, epoch});
  return epoch_batches(shard, batch_size, eng);
}

inline std::size_t num_batches(std::size_t n, std::size_t batch_size) {
  return (n + batch_size - 1) / batch_size;
}

// Per-client label counts, clients x classes.
inline std::vector<std::vector<std::size_t>> label_histograms(const Dataset& ds, const Partition& p) {
  std::vector<std::vector<std::size_t>> h(p.num_clients(),
                                          std::vector<std::size_t>(static_cast<std::size_t>(ds.num_classes), 0));
  for (std::size_t c = 0; c < p.num_clients(); ++c)
    for (auto i : p.assignment[c]) ++h[c][static_cast<std::size_t>(ds.labels[i])];
  return h;
}

// Smallest number of labels whose samples together reach `coverage` of the
// client's data.
inline std::size_t labels_to_cover(std::vector<std::size_t> hist, double coverage) {
  std::sort(hist.begin(), hist.end(), std::greater<>());
  const double total = static_cast<double>(std::accumulate(hist.begin(), hist.end(), std::size_t{0}));
  double acc = 0.0;
  for (std::size_t k = 0; k < hist.size(); ++k) {
    acc += static_cast<double>(hist[k]);
    if (acc >= coverage * total) return k + 1;
  }
  return hist.size();
}

inline double label_entropy(const std::vector<std::size_t>& hist) {
  const double total = static_cast<double>(std::accumulate(hist.begin(), hist.end(), std::size_t{0}));
  double h = 0.0;
  for (auto n : hist) {
    if (n == 0) continue;
    const double p = static_cast<double>(n) / total;
    h -= p * std::log(p);
  }
  return h;
}

struct CsvSchema {
  // Column holding the label, by header name or by zero-based index.
  std::string label_column = "label";
  bool has_header = true;
};

// One sample per row, comma separated. Every non-label column is a feature.
// Labels must be integral and cover 0..K-1 with no gaps.
inline Dataset load_csv_dataset(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");

  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };
  auto trim = [](std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };

  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> label_idx;
  std::optional<std::size_t> ncols;

  auto numeric_index = [&]() -> std::optional<std::size_t> {
    const auto& s = schema.label_column;
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
      return std::nullopt;
    return static_cast<std::size_t>(std::stoul(s));
  };

  if (schema.has_header) {
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw DataError(path + ": empty file");
    auto header = split(line);
    ncols = header.size();
    for (std::size_t c = 0; c < header.size(); ++c)
      if (trim(header[c]) == schema.label_column) label_idx = c;
    if (!label_idx) label_idx = numeric_index();
    if (!label_idx || *label_idx >= header.size())
      throw DataError(path + ": label column '" + schema.label_column + "' not found in header");
  } else {
    label_idx = numeric_index();
    if (!label_idx) throw DataError(path + ": label column must be an index when the file has no header");
  }

  Dataset ds;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (!ncols) {
      ncols = cells.size();
      if (*label_idx >= *ncols)
        throw DataError(path + ":" + std::to_string(line_no) + ": label column index out of range");
    }
    if (cells.size() != *ncols)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(*ncols) +
                      " columns, found " + std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      auto cell = trim(cells[c]);
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (cell.empty() || used != cell.size() || !std::isfinite(value))
        throw DataError(path + ": row " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                        ": cannot parse '" + cell + "' as a real");
      if (c == *label_idx) {
        if (value != std::floor(value) || value < 0.0)
          throw DataError(path + ": row " + std::to_string(line_no) + ": label '" + cell +
                          "' is not a non-negative integer");
        int lbl = static_cast<int>(value);
        ds.labels.push_back(lbl);
        max_label = std::max(max_label, lbl);
      } else {
        ds.features.push_back(value);
      }
    }
  }
  if (ds.labels.empty()) throw DataError(path + ": no data rows");
  ds.dim = *ncols - 1;
  if (ds.dim == 0) throw DataError(path + ": no feature columns");
  ds.num_classes = max_label + 1;
  std::vector<bool> seen(static_cast<std::size_t>(ds.num_classes), false);
  for (int l : ds.labels) seen[static_cast<std::size_t>(l)] = true;
  for (std::size_t k = 0; k < seen.size(); ++k)
    if (!seen[k]) throw DataError(path + ": labels are not contiguous, class " + std::to_string(k) + " is missing");
  if (ds.num_classes < 2) throw DataError(path + ": need at least two classes");
  return ds;
}

}  // namespace comfed
