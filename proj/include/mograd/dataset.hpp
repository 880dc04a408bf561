#pragma once
// Line-delimited dataset loading and the train/validation/test split.
//
// Record format, one JSON object per line:
//   {"id": "...", "source": "...", "summary": "...",
//    "annotations": {"fluency": [4, 5, 5], "relevance": [...], ...}}

#include <cstdint>
#include <filesystem>
#include <istream>
#include <vector>

#include "mograd/core.hpp"

namespace mograd {

struct DatasetSplit {
  std::vector<Sample> train;  // optimization minibatches are drawn from here
  std::vector<Sample> validation;
  std::vector<Sample> test;
  std::vector<Criterion> criteria;
  std::uint64_t split_seed = 0;
};

struct LoadedDataset {
  std::vector<Sample> samples;
  std::vector<Criterion> criteria;
};

/// Truth per criterion is the mean over annotators. Blank lines are skipped.
/// Throws DatasetError naming the line for malformed records, unknown or
/// missing criteria, empty or out-of-scale annotations and duplicate ids.
LoadedDataset load_dataset(std::istream& in, const std::vector<Criterion>& criteria = default_criteria());
LoadedDataset load_dataset(const std::filesystem::path& path,
                           const std::vector<Criterion>& criteria = default_criteria());

/// Deterministic shuffle by `split_seed`; the first `train_n` samples form the
/// training allocation (of which `val_fraction_of_train` becomes validation),
/// the next `test_n` the test set. Throws PreconditionError on a shortfall.
DatasetSplit split_dataset(std::vector<Sample> samples, std::vector<Criterion> criteria,
                           std::uint64_t split_seed, std::size_t train_n = 160,
                           std::size_t test_n = 480, double val_fraction_of_train = 0.25);

}  // namespace mograd
