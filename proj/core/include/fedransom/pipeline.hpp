#pragma once

#include <optional>
#include <span>

#include "fedransom/dataset.hpp"
#include "fedransom/forest.hpp"

namespace fedransom {

/// Training-scope preprocessing applied before a forest is grown.
struct Preprocessing {
  std::optional<BalanceSpec> balance = BalanceSpec{};
  bool normalize = true;
};

/// Rewrites split thresholds learned on normalized features into raw units so
/// the forest consumes unnormalized vectors. The normalization statistics are
/// not kept in the result.
Forest fold_normalizer(Forest forest, const Normalizer& normalizer);

/// Balance (if configured), fit a scope-local normalizer, grow the forest on
/// the normalized data and fold the thresholds back to raw units.
Forest fit_model(std::span<const FeatureVector> train, const TrainConfig& cfg, const Preprocessing& prep = {});

}  // namespace fedransom
