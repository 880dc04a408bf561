#include "mograd/pareto.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "mograd/error.hpp"

namespace mograd {

namespace {

using Point = std::vector<double>;

// Points are already clipped to the reference and restricted to the first
// `dims` coordinates being relevant.
double sweep(std::vector<Point> pts, std::size_t dims, std::span<const double> ref) {
  if (pts.empty()) return 0.0;
  const std::size_t axis = dims - 1;
  if (dims == 1) {
    double best = ref[0];
    for (const auto& p : pts) best = std::max(best, p[0]);
    return best - ref[0];
  }
  std::sort(pts.begin(), pts.end(), [axis](const Point& a, const Point& b) { return a[axis] > b[axis]; });
  if (dims == 2) {
    double volume = 0.0;
    double reach = ref[0];  // furthest x covered so far
    for (std::size_t i = 0; i < pts.size(); ++i) {
      reach = std::max(reach, pts[i][0]);
      const double top = pts[i][1];
      const double bottom = i + 1 < pts.size() ? pts[i + 1][1] : ref[1];
      volume += (top - bottom) * (reach - ref[0]);
    }
    return volume;
  }
  double volume = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double top = pts[i][axis];
    const double bottom = i + 1 < pts.size() ? pts[i + 1][axis] : ref[axis];
    if (top <= bottom) continue;
    std::vector<Point> slab(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(i + 1));
    volume += (top - bottom) * sweep(std::move(slab), dims - 1, ref);
  }
  return volume;
}

}  // namespace

bool dominates(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch(fmt::format("vector dimensions differ ({} vs {})", a.size(), b.size()));
  }
  bool strict = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return false;
    if (a[i] > b[i]) strict = true;
  }
  return strict;
}

double hypervolume(std::span<const std::vector<double>> points, std::span<const double> reference) {
  const std::size_t d = reference.size();
  std::vector<Point> clipped;
  clipped.reserve(points.size());
  for (const auto& p : points) {
    if (p.size() != d) {
      throw DimensionMismatch(fmt::format("point dimension {} does not match reference {}", p.size(), d));
    }
    Point q(d);
    bool degenerate = false;
    for (std::size_t i = 0; i < d; ++i) {
      q[i] = std::max(p[i], reference[i]);
      if (q[i] == reference[i]) degenerate = true;
    }
    if (!degenerate) clipped.push_back(std::move(q));
  }
  if (d == 0 || clipped.empty()) return 0.0;

  // Dominated points add nothing; dropping them keeps the recursion small.
  std::vector<Point> front;
  for (std::size_t i = 0; i < clipped.size(); ++i) {
    bool keep = true;
    for (std::size_t j = 0; j < clipped.size() && keep; ++j) {
      if (i == j) continue;
      if (dominates(clipped[j], clipped[i]) || (j < i && clipped[j] == clipped[i])) keep = false;
    }
    if (keep) front.push_back(clipped[i]);
  }
  return sweep(std::move(front), d, reference);
}

ParetoArchive::ParetoArchive(std::size_t dimension) : reference_(dimension, -1.0) {}

ParetoArchive::ParetoArchive(std::vector<double> reference) : reference_(std::move(reference)) {}

void ParetoArchive::insert(std::string candidate, std::vector<double> vector) {
  if (vector.size() != reference_.size()) {
    throw DimensionMismatch(fmt::format("archive dimension is {}, got a {}-dimensional point",
                                        reference_.size(), vector.size()));
  }
  entries_.push_back({std::move(candidate), std::move(vector)});
}

double ParetoArchive::hypervolume() const {
  std::vector<std::vector<double>> pts;
  pts.reserve(entries_.size());
  for (const auto& e : entries_) pts.push_back(e.vector);
  return mograd::hypervolume(pts, reference_);
}

std::vector<ParetoArchive::Entry> ParetoArchive::non_dominated() const {
  std::vector<Entry> out;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    bool keep = true;
    for (std::size_t j = 0; j < entries_.size() && keep; ++j) {
      if (i == j) continue;
      if (dominates(entries_[j].vector, entries_[i].vector) ||
          (j < i && entries_[j].vector == entries_[i].vector)) {
        keep = false;
      }
    }
    if (keep) out.push_back(entries_[i]);
  }
  return out;
}

}  // namespace mograd
