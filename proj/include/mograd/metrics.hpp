#pragma once
// Rank correlation and error metrics between predicted and human scores.

#include <span>
#include <vector>

namespace mograd {

/// Average (fractional) ranks, 1-based; tied values share the mean of their ranks.
std::vector<double> fractional_ranks(std::span<const double> values);

/// Pearson correlation of the fractional ranks of both series.
/// Throws DimensionMismatch on unequal lengths, PreconditionError when n < 2
/// and UndefinedCorrelation when either series is constant.
double spearman_rho(std::span<const double> predicted, std::span<const double> truth);

/// Mean absolute error. Throws PreconditionError on empty input.
double mae(std::span<const double> predicted, std::span<const double> truth);

/// Fraction of pairs with |predicted - truth| <= 1.
double off_by_one_accuracy(std::span<const double> predicted, std::span<const double> truth);

}  // namespace mograd
