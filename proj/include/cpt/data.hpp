#pragma once

// Grouped datasets: synthetic conflict generator, CSV ingestion, stratified
// splitting and seeded mini-batching.
//
// On-disk format (UTF-8 CSV):
//   dim=<k>
//   f1,...,fk,label,attribute
// with a sidecar "<path>.meta.json" holding cell counts and provenance.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cpt/errors.hpp"
#include "cpt/objectives.hpp"
#include "cpt/paramspace.hpp"
#include "cpt/random.hpp"

namespace cpt {

enum class SplitTag { all, train, test };

inline const char* to_string(SplitTag t) {
  switch (t) {
    case SplitTag::train: return "train";
    case SplitTag::test: return "test";
    default: return "all";
  }
}

using CellCounts = std::map<std::pair<int, int>, std::size_t>;  // (a, y) -> count

struct GroupedDataset {
  Matrix x;
  Labels y;
  Labels a;
  SplitTag split = SplitTag::all;

  std::size_t size() const noexcept { return y.size(); }
  std::size_t input_dim() const noexcept { return x.cols(); }

  std::size_t num_classes() const noexcept {
    int mx = 1;
    for (int v : y) mx = std::max(mx, v);
    return static_cast<std::size_t>(mx) + 1;
  }

  CellCounts group_counts() const {
    CellCounts counts;
    for (std::size_t i = 0; i < y.size(); ++i) ++counts[{a[i], y[i]}];
    return counts;
  }

  GroupedBatch subset(std::span<const std::size_t> rows) const {
    GroupedBatch b{Matrix(rows.size(), x.cols()), Labels(rows.size()), Labels(rows.size())};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), b.x.row(i).begin());
      b.y[i] = y[rows[i]];
      b.a[i] = a[rows[i]];
    }
    return b;
  }

  GroupedBatch as_batch() const { return GroupedBatch{x, y, a}; }

  friend bool operator==(const GroupedDataset&, const GroupedDataset&) = default;
};

struct SynthConfig {
  std::size_t num_attributes = 2;
  std::size_t num_labels = 2;
  std::vector<std::size_t> n_per_group;  // index a * num_labels + y
  std::size_t input_dim = 8;
  double mean_separation = 2.0;
  double group_shift = 2.0;
  double label_noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_attributes < 2 || num_labels < 2) throw Error("synthetic data needs at least 2 attributes and 2 labels");
    if (n_per_group.size() != num_attributes * num_labels)
      throw Error("n_per_group must list one count per (attribute, label) cell");
    if (input_dim < 2) throw Error("synthetic data needs input_dim >= 2");
    if (!(label_noise >= 0.0 && label_noise < 0.5)) throw Error("label_noise must be in [0, 0.5)");
  }
};

// Imbalanced two-group binary task: group membership correlates with the
// label and shifts features along e2, so the most accurate classifier is unfair.
inline SynthConfig conflict_preset(std::uint64_t seed) {
  SynthConfig c;
  c.n_per_group = {1500, 500, 500, 1500};
  c.input_dim = 8;
  c.mean_separation = 2.0;
  c.group_shift = 2.0;
  c.label_noise = 0.05;
  c.seed = seed;
  return c;
}

inline GroupedDataset gen_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = std::accumulate(cfg.n_per_group.begin(), cfg.n_per_group.end(), std::size_t{0});
  GroupedDataset ds{Matrix(n, cfg.input_dim), Labels(n), Labels(n), SplitTag::all};
  std::mt19937_64 rng(derive_seed(cfg.seed, {stream::data}));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> other(1, cfg.num_labels - 1);
  std::size_t row = 0;
  for (std::size_t a = 0; a < cfg.num_attributes; ++a) {
    for (std::size_t y = 0; y < cfg.num_labels; ++y) {
      for (std::size_t i = 0; i < cfg.n_per_group[a * cfg.num_labels + y]; ++i, ++row) {
        auto xr = ds.x.row(row);
        for (double& v : xr) v = noise(rng);
        xr[0] += static_cast<double>(y) * cfg.mean_separation;
        xr[1] += static_cast<double>(a) * cfg.group_shift;
        std::size_t label = y;
        if (cfg.label_noise > 0.0 && coin(rng) < cfg.label_noise) label = (y + other(rng)) % cfg.num_labels;
        ds.y[row] = static_cast<int>(label);
        ds.a[row] = static_cast<int>(a);
      }
    }
  }
  return ds;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << contents;
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline std::string serialize_dataset(const GroupedDataset& ds) {
  std::string out = "dim=" + std::to_string(ds.input_dim()) + "\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (double v : ds.x.row(r)) {
      out += detail::format_double(v);
      out += ',';
    }
    out += std::to_string(ds.y[r]);
    out += ',';
    out += std::to_string(ds.a[r]);
    out += '\n';
  }
  return out;
}

inline std::filesystem::path metadata_path(const std::filesystem::path& data_path) {
  auto p = data_path;
  p += ".meta.json";
  return p;
}

inline nlohmann::json dataset_metadata(const GroupedDataset& ds, const nlohmann::json& provenance) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [key, count] : ds.group_counts())
    cells.push_back({{"attribute", key.first}, {"label", key.second}, {"count", count}});
  return {{"rows", ds.size()},       {"dim", ds.input_dim()}, {"split", to_string(ds.split)},
          {"cells", std::move(cells)}, {"provenance", provenance}};
}

inline void save_dataset(const std::filesystem::path& path, const GroupedDataset& ds,
                         const nlohmann::json& provenance = nlohmann::json::object()) {
  detail::write_file_atomic(path, serialize_dataset(ds));
  detail::write_file_atomic(metadata_path(path), dataset_metadata(ds, provenance).dump(2) + "\n");
}

struct DatasetSchema {
  std::optional<std::size_t> input_dim;  // reject files whose header disagrees
};

inline GroupedDataset parse_dataset(std::istream& in, const DatasetSchema& schema = {}) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("dim=", 0) != 0) throw ParseError(1, "header must be dim=<k>");
  const auto dim_value = detail::parse_int(std::string_view(line).substr(4));
  if (!dim_value || *dim_value < 1) throw ParseError(1, "invalid dimension in header");
  const auto dim = static_cast<std::size_t>(*dim_value);
  if (schema.input_dim && *schema.input_dim != dim)
    throw SchemaError("dataset has dim=" + std::to_string(dim) + ", expected " + std::to_string(*schema.input_dim));

  Vector values;
  Labels y, a;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_commas(line);
    if (fields.size() != dim + 2)
      throw ParseError(line_no, "expected " + std::to_string(dim + 2) + " fields, found " +
                                    std::to_string(fields.size()));
    for (std::size_t k = 0; k < dim; ++k) {
      const auto v = detail::parse_double(fields[k]);
      if (!v) throw ParseError(line_no, "bad feature value '" + std::string(fields[k]) + "'");
      if (!std::isfinite(*v)) throw ParseError(line_no, "non-finite feature value");
      values.push_back(*v);
    }
    const auto label = detail::parse_int(fields[dim]);
    const auto attr = detail::parse_int(fields[dim + 1]);
    if (!label || *label < 0) throw ParseError(line_no, "label must be a nonnegative integer");
    if (!attr || *attr < 0) throw ParseError(line_no, "attribute must be a nonnegative integer");
    y.push_back(static_cast<int>(*label));
    a.push_back(static_cast<int>(*attr));
  }
  if (y.empty()) throw ParseError(line_no, "dataset has no rows");
  const std::size_t n = y.size();
  return GroupedDataset{Matrix(n, dim, std::move(values)), std::move(y), std::move(a), SplitTag::all};
}

inline GroupedDataset load_dataset(const std::filesystem::path& path, const DatasetSchema& schema = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset " + path.string());
  auto ds = parse_dataset(in, schema);
  // The split tag is advisory metadata; a missing sidecar is fine.
  if (std::ifstream meta(metadata_path(path)); meta) {
    try {
      const auto j = nlohmann::json::parse(meta);
      const auto tag = j.value("split", std::string("all"));
      ds.split = tag == "train" ? SplitTag::train : tag == "test" ? SplitTag::test : SplitTag::all;
    } catch (const nlohmann::json::exception&) {
      detail::warn("ignoring unreadable metadata " + metadata_path(path).string());
    }
  }
  return ds;
}

inline GroupedDataset select_rows(const GroupedDataset& ds, std::span<const std::size_t> rows, SplitTag tag) {
  GroupedBatch b = ds.subset(rows);
  return GroupedDataset{std::move(b.x), std::move(b.y), std::move(b.a), tag};
}

struct SplitResult {
  GroupedDataset train;
  GroupedDataset test;
};

// Stratified by (a, y) cell. Each cell sends round(fraction * count) rows to
// test. Cells with fewer than two rows cannot be stratified; in that case the
// whole dataset is shuffled and cut globally.
inline SplitResult split(const GroupedDataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error("test_fraction must be in (0, 1)");
  std::mt19937_64 rng(derive_seed(seed, {stream::split}));
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < ds.size(); ++i) cells[{ds.a[i], ds.y[i]}].push_back(i);

  std::vector<std::size_t> train_rows, test_rows;
  const bool stratify = std::all_of(cells.begin(), cells.end(), [](const auto& c) { return c.second.size() >= 2; });
  auto cut = [&](std::vector<std::size_t>& rows) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(rows.size())));
    test_rows.insert(test_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_rows.insert(train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  };
  if (stratify) {
    for (auto& [key, rows] : cells) cut(rows);
  } else {
    detail::warn("a (attribute, label) cell has fewer than 2 rows; falling back to an unstratified split");
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    cut(all);
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {select_rows(ds, train_rows, SplitTag::train), select_rows(ds, test_rows, SplitTag::test)};
}

// Seeded shuffle of row indices, cut into batches of batch_size; the final
// short batch is kept.
class BatchIterator {
 public:
  BatchIterator(const GroupedDataset& ds, std::size_t batch_size, std::uint64_t epoch_seed)
      : ds_(&ds), batch_size_(batch_size), order_(ds.size()) {
    if (batch_size == 0) throw Error("batch_size must be >= 1");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::mt19937_64 rng(epoch_seed);
    std::shuffle(order_.begin(), order_.end(), rng);
  }

  bool next(GroupedBatch& out) {
    if (pos_ >= order_.size()) return false;
    const std::size_t len = std::min(batch_size_, order_.size() - pos_);
    out = ds_->subset(std::span<const std::size_t>(order_.data() + pos_, len));
    pos_ += len;
    return true;
  }

  std::size_t batch_count() const noexcept { return (order_.size() + batch_size_ - 1) / batch_size_; }
  const std::vector<std::size_t>& order() const noexcept { return order_; }

 private:
  const GroupedDataset* ds_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

inline BatchIterator batches(const GroupedDataset& ds, std::size_t batch_size, std::uint64_t epoch_seed) {
  return BatchIterator(ds, batch_size, epoch_seed);
}

}  // namespace cpt
