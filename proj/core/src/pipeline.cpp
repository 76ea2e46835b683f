#include "fedransom/pipeline.hpp"

namespace fedransom {

Forest fold_normalizer(Forest forest, const Normalizer& normalizer) {
  for (auto& tree : forest.mutable_trees()) {
    for (auto& node : tree.nodes) {
      if (node.is_leaf()) continue;
      node.threshold = normalizer.invert(static_cast<std::size_t>(node.feature), node.threshold);
    }
  }
  return forest;
}

Forest fit_model(std::span<const FeatureVector> train, const TrainConfig& cfg, const Preprocessing& prep) {
  std::vector<FeatureVector> data(train.begin(), train.end());
  if (prep.balance) {
    const auto counts = count_classes(data);
    // A single-class scope cannot be balanced; the forest then predicts that class.
    if (counts.benign > 0 && counts.ransomware > 0) data = balance_classes(data, *prep.balance);
  }
  if (!prep.normalize) return train_forest(data, cfg);
  const Normalizer normalizer = Normalizer::fit(data);
  return fold_normalizer(train_forest(normalizer.apply(data), cfg), normalizer);
}

}  // namespace fedransom
