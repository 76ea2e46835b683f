#pragma once

// Declarative experiment description shared by the CLI subcommands.

#include <filesystem>
#include <optional>

#include "fedransom/ata_trace.hpp"
#include "fedransom/config.hpp"
#include "fedransom/dataset.hpp"
#include "fedransom/eval.hpp"
#include "fedransom/features.hpp"

namespace fedransom::cli {

struct ExperimentConfig {
  std::optional<std::filesystem::path> corpus;
  std::optional<std::filesystem::path> synth_config;
  std::optional<std::filesystem::path> out;
  ParseOptions parse;
  WindowConfig window;
  SplitSpec split;  // seed derived from the master seed
  ExperimentSettings settings;

  /// Unknown keys are rejected. Relative paths resolve against `base_dir`.
  static ExperimentConfig from_kv(const KeyValueConfig& kv, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& file);

  void set_master_seed(std::uint64_t seed);
  void validate() const;
};

}  // namespace fedransom::cli
