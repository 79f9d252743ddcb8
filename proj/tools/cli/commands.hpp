#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cli/config.hpp"

namespace fedkl::cli {

inline constexpr int kExitSuccess = 0;
inline constexpr int kExitCheckFailure = 1;
inline constexpr int kExitConfigError = 2;

/// Overrides the output directory of every command when set.
inline constexpr const char* kOutputDirEnv = "FEDKL_OUTPUT_DIR";

struct CommandOptions {
  std::filesystem::path config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::size_t> workers;
  std::vector<std::string> algorithms;  // compare only; falls back to the config
  bool inject_bug = false;              // verify-bounds self-test
  bool verbose = false;
};

/// --out, then $FEDKL_OUTPUT_DIR, then the config's output_dir.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config, const CommandOptions& options);

/// Runs one subcommand and returns its exit code. Diagnostics go to `err`, summaries to `out`.
int run_command(std::string_view command, const CommandOptions& options, std::ostream& out, std::ostream& err);

int cmd_analyze(const ExperimentConfig& config, const std::filesystem::path& dir, std::ostream& out);
int cmd_verify_bounds(const ExperimentConfig& config, const std::filesystem::path& dir, bool inject_bug,
                      std::ostream& out);
int cmd_train(const ExperimentConfig& config, const std::filesystem::path& dir, std::ostream& out);
int cmd_compare(const ExperimentConfig& config, const std::vector<std::string>& algorithms,
                const std::filesystem::path& dir, std::ostream& out);
int cmd_gen_env(const ExperimentConfig& config, const std::filesystem::path& dir, std::ostream& out);

/// Tabular policy from a softmax checkpoint or a {"n_states","n_actions","probs"} document.
TabularPolicy load_policy(const std::filesystem::path& path);

}  // namespace fedkl::cli
