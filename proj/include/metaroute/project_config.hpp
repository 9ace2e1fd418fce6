#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "metaroute/agent_head.hpp"
#include "metaroute/frozen_lm.hpp"
#include "metaroute/metaagent.hpp"
#include "metaroute/self_instruct.hpp"

namespace metaroute {

struct ProjectPaths {
  std::filesystem::path registry = "registry.json";
  std::filesystem::path demos_dir = "demos";
  std::filesystem::path model_checkpoint = "model.json";
  std::filesystem::path head_checkpoint = "head.json";
  std::filesystem::path vocab = "vocab.txt";
  std::filesystem::path reports_dir = "reports";
};

struct GeneratorEndpoint {
  std::string endpoint;  // empty = offline reference generator
  int timeout_ms = 5000;
};

/// Project settings: JSON file with every key optional, flags override file
/// values, and the only environment overrides are METAROUTE_GENERATOR_ENDPOINT
/// and METAROUTE_GENERATOR_TOKEN. Seeds are explicit; nothing falls back to
/// wall-clock time.
struct ProjectConfig {
  std::uint64_t seed = 42;
  ModelConfig model;
  TrainConfig train;
  FilterConfig filter;
  ManagerConfig manager;
  ProjectPaths paths;
  GeneratorEndpoint generator;

  /// Resolve paths relative to a project root.
  void rebase(const std::filesystem::path& root);

  static ProjectConfig load(const std::filesystem::path& path);
  static ProjectConfig defaults() { return ProjectConfig{}; }
};

}  // namespace metaroute
