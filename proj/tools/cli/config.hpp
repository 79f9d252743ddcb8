#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <fedkl/envs.hpp>
#include <fedkl/federation.hpp>
#include <fedkl/trainer.hpp>

namespace fedkl::cli {

enum class EnvironmentKind { Gridworld, Garnet, Chain, File };

struct ChainSpec {
  double gamma = 0.9;
  std::vector<std::array<double, 2>> init;  // one start distribution per agent
};

struct EnvironmentConfig {
  EnvironmentKind kind = EnvironmentKind::Gridworld;
  GridSpec grid;
  GarnetSpec garnet;
  ChainSpec chain;
  std::filesystem::path file;

  std::vector<FiniteMdp> build() const;
};

struct AnalysisConfig {
  std::filesystem::path checkpoint;  // empty: uniform policy
};

/**
 * One experiment. Sections and keys:
 *
 *   seed, output_dir, environment{kind, ...}, federation{...}, trainer{...},
 *   analysis{checkpoint}, bounds{seeds, max_states, max_actions, max_agents},
 *   compare{algorithms, repetitions}
 *
 * Unknown keys anywhere are rejected with ConfigError.
 */
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "fedkl-out";
  EnvironmentConfig environment;
  FedConfig federation;
  TrainerConfig trainer;
  AnalysisConfig analysis;
  std::size_t bound_seeds = 500;
  std::size_t bound_max_states = 12;
  std::size_t bound_max_actions = 4;
  std::size_t bound_max_agents = 5;
  std::vector<std::string> compare_algorithms;
  std::size_t compare_repetitions = 3;

  std::vector<FiniteMdp> family;  // built from `environment` during parsing

  std::string canonical;  // normalized JSON text the config hash is taken over
};

/// Parses, validates and builds the family; relative file paths resolve against `base_dir`.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// 64-bit FNV-1a, printed as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

}  // namespace fedkl::cli
