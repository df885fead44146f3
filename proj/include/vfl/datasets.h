#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vfl/tensor.h"

namespace vfl {

enum class SplitTag { kTrain, kTest };

// Samples aligned by row across both parties. Party A owns the labels.
struct VerticalDataset {
  Tensor2 features_a;  // may have zero columns (split-NN configurations)
  Tensor2 features_b;
  std::vector<int> labels;
  std::size_t num_classes = 2;
  SplitTag split = SplitTag::kTrain;
  // Party B's shard viewed as an image (rows x cols), zero for tabular data.
  std::size_t image_rows_b = 0;
  std::size_t image_cols_b = 0;

  std::size_t size() const { return labels.size(); }
  void validate() const;
  VerticalDataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
};

struct DatasetPair {
  VerticalDataset train;
  VerticalDataset test;
};

enum class DatasetKind {
  kBinaryImbalanced,
  kBinaryBalanced,
  kMulticlass,
  kImagePattern,
  kCsv,
};

const char* to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& name);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kBinaryBalanced;
  std::size_t n_train = 1000;
  std::size_t n_test = 500;
  std::size_t dims_a = 10;
  std::size_t dims_b = 10;
  // Positives / total for binary kinds. Defaults: 0.1 imbalanced (1:9),
  // 1/3 balanced (1:2).
  double positive_ratio = -1.0;
  std::size_t num_classes = 10;  // multiclass and image kinds
  // Distance between class means in each party's feature space, in units of
  // the within-class standard deviation.
  double separation_a = 2.0;
  double separation_b = 2.0;
  std::size_t image_size = 16;
  double pixel_noise = 0.08;
  std::uint64_t seed = 0;

  // CSV ingestion.
  std::string csv_path;
  std::string label_column;
  std::vector<std::string> party_a_columns;
  std::vector<std::string> party_b_columns;
  double test_fraction = 0.2;

  double effective_positive_ratio() const;
  void validate() const;
};

DatasetPair generate_synthetic(const DatasetSpec& spec);
DatasetPair generate_image_patterns(const DatasetSpec& spec);
// Dispatches on spec.kind.
DatasetPair make_dataset(const DatasetSpec& spec);

struct CsvOptions {
  std::string path;
  std::string label_column;
  std::vector<std::string> party_a_columns;
  std::vector<std::string> party_b_columns;
  double test_fraction = 0.0;  // trailing rows form the test split
  std::size_t num_classes = 0;  // 0: infer as max label + 1
};

// Reads a header-first comma-separated file. Features are z-scored with
// statistics from the train split only.
DatasetPair load_csv(const CsvOptions& options);
DatasetPair load_csv_text(const std::string& text, const CsvOptions& options);

struct AuxiliarySample {
  std::vector<std::size_t> indices;
};

// Stratified draw of labelled rows from `pool`, avoiding `excluded` indices.
AuxiliarySample draw_auxiliary(const VerticalDataset& pool, std::size_t size, std::uint64_t seed,
                               std::span<const std::size_t> excluded = {});

}  // namespace vfl
