#include "mograd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "mograd/error.hpp"

namespace mograd {

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b, std::size_t min_n) {
  if (a.size() != b.size()) {
    throw DimensionMismatch(fmt::format("series lengths differ ({} vs {})", a.size(), b.size()));
  }
  if (a.size() < min_n) {
    throw PreconditionError(fmt::format("need at least {} paired observations, got {}", min_n,
                                        a.size()));
  }
}

}  // namespace

std::vector<double> fractional_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 hold ranks i+1..j
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double spearman_rho(std::span<const double> predicted, std::span<const double> truth) {
  check_lengths(predicted, truth, 2);
  const auto rx = fractional_ranks(predicted);
  const auto ry = fractional_ranks(truth);
  const double n = static_cast<double>(rx.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx;
    const double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedCorrelation("spearman correlation undefined for a constant series");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double mae(std::span<const double> predicted, std::span<const double> truth) {
  check_lengths(predicted, truth, 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) sum += std::abs(predicted[i] - truth[i]);
  return sum / static_cast<double>(predicted.size());
}

double off_by_one_accuracy(std::span<const double> predicted, std::span<const double> truth) {
  check_lengths(predicted, truth, 1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (std::abs(predicted[i] - truth[i]) <= 1.0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

}  // namespace mograd
