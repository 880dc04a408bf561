#include "mograd/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace mograd {

namespace {

std::string required_string(const nlohmann::json& record, const char* key, int line) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_string()) {
    throw DatasetError(fmt::format("field '{}' missing or not a string", key), line);
  }
  return it->get<std::string>();
}

}  // namespace

LoadedDataset load_dataset(std::istream& in, const std::vector<Criterion>& criteria) {
  LoadedDataset out;
  out.criteria = criteria;
  std::set<std::string> ids;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto record = nlohmann::json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object()) {
      throw DatasetError("record is not a JSON object", line_no);
    }
    Sample s;
    s.id = required_string(record, "id", line_no);
    s.source_text = required_string(record, "source", line_no);
    s.summary_text = required_string(record, "summary", line_no);
    if (!ids.insert(s.id).second) throw DatasetError(fmt::format("duplicate sample id '{}'", s.id), line_no);

    auto ann = record.find("annotations");
    if (ann == record.end() || !ann->is_object()) {
      throw DatasetError("field 'annotations' missing or not an object", line_no);
    }
    for (const auto& [key, value] : ann->items()) {
      if (std::none_of(criteria.begin(), criteria.end(), [&](const Criterion& c) { return c.id == key; })) {
        throw DatasetError(fmt::format("unknown criterion '{}'", key), line_no);
      }
      (void)value;
    }
    for (const auto& c : criteria) {
      auto scores = ann->find(c.id);
      if (scores == ann->end()) throw DatasetError(fmt::format("missing criterion '{}'", c.id), line_no);
      if (!scores->is_array() || scores->empty()) {
        throw DatasetError(fmt::format("annotations for '{}' must be a non-empty list", c.id), line_no);
      }
      double sum = 0.0;
      for (const auto& v : *scores) {
        if (!v.is_number()) {
          throw DatasetError(fmt::format("non-numeric annotation for '{}'", c.id), line_no);
        }
        const double x = v.get<double>();
        if (x < c.scale_min || x > c.scale_max) {
          throw DatasetError(fmt::format("annotation {} for '{}' is outside [{}, {}]", x, c.id,
                                         c.scale_min, c.scale_max),
                             line_no);
        }
        sum += x;
      }
      s.truth[c.id] = sum / static_cast<double>(scores->size());
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

LoadedDataset load_dataset(const std::filesystem::path& path, const std::vector<Criterion>& criteria) {
  std::ifstream in(path);
  if (!in) throw DatasetError(fmt::format("cannot open dataset {}", path.string()));
  return load_dataset(in, criteria);
}

DatasetSplit split_dataset(std::vector<Sample> samples, std::vector<Criterion> criteria,
                           std::uint64_t split_seed, std::size_t train_n, std::size_t test_n,
                           double val_fraction_of_train) {
  if (val_fraction_of_train < 0.0 || val_fraction_of_train >= 1.0) {
    throw PreconditionError("validation fraction must lie in [0, 1)");
  }
  if (train_n + test_n > samples.size()) {
    throw PreconditionError(fmt::format("split needs {} samples but only {} are available (short by {})",
                                        train_n + test_n, samples.size(),
                                        train_n + test_n - samples.size()));
  }
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (!ids.insert(s.id).second) throw PreconditionError(fmt::format("duplicate sample id '{}'", s.id));
  }
  // Canonical order first so the split depends only on membership and seed.
  std::sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) { return a.id < b.id; });
  std::mt19937_64 rng(split_seed);
  std::shuffle(samples.begin(), samples.end(), rng);

  const auto val_n = static_cast<std::size_t>(std::llround(static_cast<double>(train_n) * val_fraction_of_train));
  DatasetSplit split;
  split.criteria = std::move(criteria);
  split.split_seed = split_seed;
  auto it = samples.begin();
  split.train.assign(std::make_move_iterator(it), std::make_move_iterator(it + static_cast<long>(train_n - val_n)));
  it += static_cast<long>(train_n - val_n);
  split.validation.assign(std::make_move_iterator(it), std::make_move_iterator(it + static_cast<long>(val_n)));
  it += static_cast<long>(val_n);
  split.test.assign(std::make_move_iterator(it), std::make_move_iterator(it + static_cast<long>(test_n)));
  return split;
}

}  // namespace mograd
