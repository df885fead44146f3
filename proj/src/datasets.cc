#include "vfl/datasets.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "vfl/error.h"
#include "vfl/rng.h"

namespace vfl {
namespace {

std::vector<int> balanced_labels(std::size_t n, std::size_t num_classes, Rng& rng) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % num_classes);
  rng.shuffle(std::span<int>(labels));
  return labels;
}

std::vector<int> binary_labels(std::size_t n, double ratio, Rng& rng) {
  const auto positives = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  std::vector<int> labels(n, 0);
  std::fill_n(labels.begin(), std::min(positives, n), 1);
  rng.shuffle(std::span<int>(labels));
  return labels;
}

// One mean vector per class in a `dims`-dimensional space.
std::vector<std::vector<double>> class_means(std::size_t num_classes, std::size_t dims,
                                             double separation, Rng& rng) {
  std::vector<std::vector<double>> means(num_classes, std::vector<double>(dims, 0.0));
  if (dims == 0) return means;
  auto random_unit = [&] {
    std::vector<double> v(dims);
    double n2 = 0.0;
    for (double& x : v) {
      x = rng.normal();
      n2 += x * x;
    }
    const double n = std::sqrt(n2);
    for (double& x : v) x /= n;
    return v;
  };
  if (num_classes == 2) {
    const auto v = random_unit();
    for (std::size_t j = 0; j < dims; ++j) {
      means[0][j] = -0.5 * separation * v[j];
      means[1][j] = 0.5 * separation * v[j];
    }
  } else {
    // Random directions at radius s/sqrt(2): nearly orthogonal centres sit
    // about `separation` apart.
    for (auto& m : means) {
      const auto v = random_unit();
      for (std::size_t j = 0; j < dims; ++j) m[j] = separation / std::sqrt(2.0) * v[j];
    }
  }
  return means;
}

Tensor2 sample_features(const std::vector<int>& labels,
                        const std::vector<std::vector<double>>& means, std::size_t dims, Rng& rng) {
  Tensor2 x(labels.size(), dims);
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = 0; j < dims; ++j)
      x(i, j) = means[static_cast<std::size_t>(labels[i])][j] + rng.normal();
  return x;
}

// Intensity of class `cls`'s template at (r, c) on a size x size canvas.
double pattern_pixel(int cls, double r, double c, double size) {
  const double mid = (size - 1) / 2.0;
  const double dr = r - mid, dc = c - mid;
  const double t = size / 16.0;  // stroke thickness scale
  switch (cls % 10) {
    case 0:  // vertical bar
      return std::abs(dc) <= 1.0 * t ? 1.0 : 0.0;
    case 1:  // two vertical bars
      return std::abs(std::abs(dc) - size / 4.0) <= 1.0 * t ? 1.0 : 0.0;
    case 2:  // diagonal
      return std::abs(dr - dc) <= 1.0 * t ? 1.0 : 0.0;
    case 3:  // anti-diagonal
      return std::abs(dr + dc) <= 1.0 * t ? 1.0 : 0.0;
    case 4: {  // box outline
      const double m = std::max(std::abs(dr), std::abs(dc));
      return std::abs(m - size / 3.0) <= 0.8 * t ? 1.0 : 0.0;
    }
    case 5:  // plus
      return (std::abs(dr) <= 1.0 * t || std::abs(dc) <= 1.0 * t) ? 1.0 : 0.0;
    case 6:  // X
      return (std::abs(dr - dc) <= 1.0 * t || std::abs(dr + dc) <= 1.0 * t) ? 1.0 : 0.0;
    case 7:  // filled disc
      return std::hypot(dr, dc) <= size / 3.2 ? 1.0 : 0.0;
    case 8:  // ring
      return std::abs(std::hypot(dr, dc) - size / 3.0) <= 1.0 * t ? 1.0 : 0.0;
    default: {  // checkerboard blocks
      const int br = static_cast<int>(std::floor(r / (size / 4.0)));
      const int bc = static_cast<int>(std::floor(c / (size / 4.0)));
      return ((br + bc) % 2 == 0) ? 1.0 : 0.0;
    }
  }
}

VerticalDataset image_split(std::size_t n, const DatasetSpec& spec, Rng& rng, SplitTag tag) {
  const std::size_t size = spec.image_size;
  const std::size_t top_rows = size / 2;
  const std::size_t bottom_rows = size - top_rows;
  VerticalDataset d;
  d.num_classes = spec.num_classes;
  d.split = tag;
  d.labels = balanced_labels(n, spec.num_classes, rng);
  d.features_a = Tensor2(n, top_rows * size);
  d.features_b = Tensor2(n, bottom_rows * size);
  d.image_rows_b = bottom_rows;
  d.image_cols_b = size;
  const auto s = static_cast<double>(size);
  for (std::size_t i = 0; i < n; ++i) {
    const double shift_r = static_cast<double>(rng.uniform_index(3)) - 1.0;
    const double shift_c = static_cast<double>(rng.uniform_index(3)) - 1.0;
    const double intensity = rng.uniform(0.7, 1.0);
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t c = 0; c < size; ++c) {
        double v = intensity * pattern_pixel(d.labels[i], static_cast<double>(r) - shift_r,
                                             static_cast<double>(c) - shift_c, s);
        v = std::clamp(v + spec.pixel_noise * rng.normal(), 0.0, 1.0);
        if (r < top_rows)
          d.features_a(i, r * size + c) = v;
        else
          d.features_b(i, (r - top_rows) * size + c) = v;
      }
  }
  return d;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && (s[b] == ' ' || s[b] == '\t')) ++b;
  return s.substr(b);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void VerticalDataset::validate() const {
  require_shape(features_a.rows() == labels.size() && features_b.rows() == labels.size(),
                "VerticalDataset: party shards and labels must have equal row counts");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw ConfigError("VerticalDataset: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(num_classes) + ")");
}

VerticalDataset VerticalDataset::subset(std::span<const std::size_t> indices) const {
  VerticalDataset out;
  out.features_a = features_a.gather_rows(indices);
  out.features_b = features_b.gather_rows(indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels.at(i));
  out.num_classes = num_classes;
  out.split = split;
  out.image_rows_b = image_rows_b;
  out.image_cols_b = image_cols_b;
  return out;
}

std::vector<std::size_t> VerticalDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

const char* to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kBinaryImbalanced:
      return "synthetic-binary-imbalanced";
    case DatasetKind::kBinaryBalanced:
      return "synthetic-binary-balanced";
    case DatasetKind::kMulticlass:
      return "synthetic-multiclass";
    case DatasetKind::kImagePattern:
      return "synthetic-image-pattern";
    case DatasetKind::kCsv:
      return "csv";
  }
  return "?";
}

DatasetKind dataset_kind_from_string(const std::string& name) {
  for (auto k : {DatasetKind::kBinaryImbalanced, DatasetKind::kBinaryBalanced,
                 DatasetKind::kMulticlass, DatasetKind::kImagePattern, DatasetKind::kCsv})
    if (name == to_string(k)) return k;
  throw ConfigError("unknown dataset kind '" + name + "'");
}

double DatasetSpec::effective_positive_ratio() const {
  if (positive_ratio > 0.0) return positive_ratio;
  return kind == DatasetKind::kBinaryImbalanced ? 0.1 : 1.0 / 3.0;
}

void DatasetSpec::validate() const {
  if (kind == DatasetKind::kCsv) {
    if (csv_path.empty()) throw ConfigError("dataset.csv_path is required for csv datasets");
    return;
  }
  if (n_train < 1 || n_test < 1) throw ConfigError("dataset: n_train and n_test must be >= 1");
  const bool binary = kind == DatasetKind::kBinaryBalanced || kind == DatasetKind::kBinaryImbalanced;
  if (binary) {
    const double r = effective_positive_ratio();
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("dataset.positive_ratio must lie in (0, 1)");
  } else if (num_classes < 2) {
    throw ConfigError("dataset.num_classes must be >= 2");
  }
  if (kind != DatasetKind::kImagePattern && dims_a + dims_b == 0)
    throw ConfigError("dataset: dims_a + dims_b must be positive");
  if (kind == DatasetKind::kImagePattern && image_size < 2)
    throw ConfigError("dataset.image_size must be >= 2");
}

DatasetPair generate_synthetic(const DatasetSpec& spec) {
  spec.validate();
  if (spec.kind == DatasetKind::kImagePattern) return generate_image_patterns(spec);
  if (spec.kind == DatasetKind::kCsv) throw ConfigError("generate_synthetic: csv kind is not synthetic");
  const bool binary = spec.kind != DatasetKind::kMulticlass;
  const std::size_t classes = binary ? 2 : spec.num_classes;
  Rng root(spec.seed);
  Rng mean_rng = root.split({1});
  const auto means_a = class_means(classes, spec.dims_a, spec.separation_a, mean_rng);
  const auto means_b = class_means(classes, spec.dims_b, spec.separation_b, mean_rng);

  auto make = [&](std::size_t n, std::uint64_t stream, SplitTag tag) {
    Rng rng = root.split({2, stream});
    VerticalDataset d;
    d.num_classes = classes;
    d.split = tag;
    d.labels = binary ? binary_labels(n, spec.effective_positive_ratio(), rng)
                      : balanced_labels(n, classes, rng);
    d.features_a = sample_features(d.labels, means_a, spec.dims_a, rng);
    d.features_b = sample_features(d.labels, means_b, spec.dims_b, rng);
    return d;
  };
  return {make(spec.n_train, 0, SplitTag::kTrain), make(spec.n_test, 1, SplitTag::kTest)};
}

DatasetPair generate_image_patterns(const DatasetSpec& spec) {
  if (spec.kind != DatasetKind::kImagePattern)
    throw ConfigError("generate_image_patterns: dataset kind must be synthetic-image-pattern");
  spec.validate();
  Rng root(spec.seed);
  Rng train_rng = root.split({3, 0});
  Rng test_rng = root.split({3, 1});
  return {image_split(spec.n_train, spec, train_rng, SplitTag::kTrain),
          image_split(spec.n_test, spec, test_rng, SplitTag::kTest)};
}

DatasetPair make_dataset(const DatasetSpec& spec) {
  switch (spec.kind) {
    case DatasetKind::kImagePattern:
      return generate_image_patterns(spec);
    case DatasetKind::kCsv: {
      CsvOptions o;
      o.path = spec.csv_path;
      o.label_column = spec.label_column;
      o.party_a_columns = spec.party_a_columns;
      o.party_b_columns = spec.party_b_columns;
      o.test_fraction = spec.test_fraction;
      return load_csv(o);
    }
    default:
      return generate_synthetic(spec);
  }
}

DatasetPair load_csv(const CsvOptions& options) {
  std::ifstream in(options.path, std::ios::binary);
  if (!in) throw ConfigError("load_csv: cannot open '" + options.path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_csv_text(buf.str(), options);
}

DatasetPair load_csv_text(const std::string& text, const CsvOptions& options) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("load_csv: empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_line(line);
  std::map<std::string, std::size_t> column_index;
  for (std::size_t i = 0; i < header.size(); ++i) column_index[header[i]] = i;

  auto find_column = [&](const std::string& name) {
    auto it = column_index.find(name);
    if (it == column_index.end()) throw ConfigError("load_csv: missing column '" + name + "'");
    return it->second;
  };
  const std::size_t label_col = find_column(options.label_column);
  std::vector<std::size_t> cols_a, cols_b;
  for (const auto& c : options.party_a_columns) cols_a.push_back(find_column(c));
  for (const auto& c : options.party_b_columns) cols_b.push_back(find_column(c));
  {
    std::vector<std::size_t> all = cols_a;
    all.insert(all.end(), cols_b.begin(), cols_b.end());
    all.push_back(label_col);
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end())
      throw ConfigError("load_csv: party columns and label column must be disjoint");
  }

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size())
      throw ParseError("load_csv: row " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(header.size()));
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c != label_col && std::find(cols_a.begin(), cols_a.end(), c) == cols_a.end() &&
          std::find(cols_b.begin(), cols_b.end(), c) == cols_b.end())
        continue;
      const auto& cell = cells[c];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw ParseError("load_csv: non-numeric cell '" + cell + "' at row " +
                         std::to_string(line_no) + ", column " + std::to_string(c + 1) + " (" +
                         header[c] + ")");
      values[c] = v;
    }
    rows.push_back(std::move(values));
  }

  std::vector<int> labels;
  int max_label = -1;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double v = rows[r][label_col];
    if (v != std::floor(v) || v < 0)
      throw ConfigError("load_csv: label at data row " + std::to_string(r + 1) +
                        " is not a non-negative integer");
    labels.push_back(static_cast<int>(v));
    max_label = std::max(max_label, labels.back());
  }
  const std::size_t num_classes =
      options.num_classes ? options.num_classes : static_cast<std::size_t>(max_label + 1);
  if (num_classes < 2 && options.num_classes == 0 && !rows.empty() && max_label < 1)
    throw ConfigError("load_csv: need at least two classes");

  const std::size_t n = rows.size();
  const auto n_test = static_cast<std::size_t>(std::floor(options.test_fraction * static_cast<double>(n)));
  const std::size_t n_train = n - n_test;
  if (n_train == 0) throw ConfigError("load_csv: train split is empty");

  auto extract = [&](const std::vector<std::size_t>& cols, std::size_t begin, std::size_t end) {
    Tensor2 t(end - begin, cols.size());
    for (std::size_t r = begin; r < end; ++r)
      for (std::size_t j = 0; j < cols.size(); ++j) t(r - begin, j) = rows[r][cols[j]];
    return t;
  };
  auto normalize = [&](Tensor2& train, Tensor2& test) {
    for (std::size_t j = 0; j < train.cols(); ++j) {
      double mean = 0.0;
      for (std::size_t r = 0; r < train.rows(); ++r) mean += train(r, j);
      mean /= static_cast<double>(train.rows());
      double var = 0.0;
      for (std::size_t r = 0; r < train.rows(); ++r) var += (train(r, j) - mean) * (train(r, j) - mean);
      var /= static_cast<double>(train.rows());
      const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
      for (std::size_t r = 0; r < train.rows(); ++r) train(r, j) = (train(r, j) - mean) / sd;
      for (std::size_t r = 0; r < test.rows(); ++r) test(r, j) = (test(r, j) - mean) / sd;
    }
  };

  DatasetPair out;
  out.train.features_a = extract(cols_a, 0, n_train);
  out.train.features_b = extract(cols_b, 0, n_train);
  out.test.features_a = extract(cols_a, n_train, n);
  out.test.features_b = extract(cols_b, n_train, n);
  normalize(out.train.features_a, out.test.features_a);
  normalize(out.train.features_b, out.test.features_b);
  out.train.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(n_train), labels.end());
  out.train.num_classes = out.test.num_classes = num_classes;
  out.train.split = SplitTag::kTrain;
  out.test.split = SplitTag::kTest;
  out.train.validate();
  out.test.validate();
  return out;
}

AuxiliarySample draw_auxiliary(const VerticalDataset& pool, std::size_t size, std::uint64_t seed,
                               std::span<const std::size_t> excluded) {
  if (size > pool.size()) throw ConfigError("draw_auxiliary: size exceeds pool rows");
  std::vector<char> blocked(pool.size(), 0);
  for (std::size_t i : excluded)
    if (i < blocked.size()) blocked[i] = 1;
  std::vector<std::vector<std::size_t>> by_class(pool.num_classes);
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (!blocked[i]) by_class[static_cast<std::size_t>(pool.labels[i])].push_back(i);
  for (std::size_t c = 0; c < by_class.size(); ++c)
    if (by_class[c].empty())
      throw ConfigError("draw_auxiliary: class " + std::to_string(c) + " absent from pool");

  Rng rng(mix_keys(seed, {0xA0C5}));
  AuxiliarySample aux;
  const std::size_t k = pool.num_classes;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t want = size / k + (c < size % k ? 1 : 0);
    auto& candidates = by_class[c];
    if (want > candidates.size())
      throw ConfigError("draw_auxiliary: class " + std::to_string(c) + " has only " +
                        std::to_string(candidates.size()) + " rows, need " + std::to_string(want));
    rng.shuffle(std::span<std::size_t>(candidates));
    aux.indices.insert(aux.indices.end(), candidates.begin(),
                       candidates.begin() + static_cast<std::ptrdiff_t>(want));
  }
  std::sort(aux.indices.begin(), aux.indices.end());
  return aux;
}

}  // namespace vfl
