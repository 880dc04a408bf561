#pragma once
// Pareto archive over per-criterion correlation vectors and the exact
// hypervolume indicator (maximization, relative to a reference point).

#include <span>
#include <string>
#include <vector>

namespace mograd {

/// True iff `a` is >= `b` in every component and > in at least one.
/// Throws DimensionMismatch on unequal dimensions.
bool dominates(std::span<const double> a, std::span<const double> b);

/// Exact Lebesgue measure of the union of boxes [reference, p] by recursive
/// dimension sweep. Components below the reference are clipped to it.
double hypervolume(std::span<const std::vector<double>> points, std::span<const double> reference);

class ParetoArchive {
 public:
  struct Entry {
    std::string candidate;  // reference to the evaluated candidate
    std::vector<double> vector;
  };

  /// Default reference is (-1, ..., -1), the lowest attainable correlation.
  explicit ParetoArchive(std::size_t dimension);
  explicit ParetoArchive(std::vector<double> reference);

  /// Retains every point, dominated or not. Throws DimensionMismatch.
  void insert(std::string candidate, std::vector<double> vector);

  double hypervolume() const;
  /// Entries not dominated by any other entry (first of identical duplicates kept).
  std::vector<Entry> non_dominated() const;

  const std::vector<Entry>& entries() const { return entries_; }
  const std::vector<double>& reference() const { return reference_; }
  std::size_t dimension() const { return reference_.size(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<double> reference_;
  std::vector<Entry> entries_;
};

}  // namespace mograd
