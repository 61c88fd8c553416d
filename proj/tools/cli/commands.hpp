#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <softsynth/datasets.hpp>
#include <softsynth/trainer.hpp>

namespace softsynth::cli
{

/// Everything `train` needs to reproduce one experiment.
struct ExperimentManifest
{
  std::size_t width = 2;
  int completeness = 100;
  /// Dropout seed the reduced datasets were generated with.
  std::uint64_t data_seed = 0;
  std::filesystem::path data_dir = "data";
  UnitKind unit = UnitKind::Lut;
  std::vector<std::size_t> widths{ 8, 8 };
  bool selector_last_layer_only = false;
  /// Empty means every task.
  std::vector<Task> tasks;
  /// Number of default-grid entries; ignored when `config` is set.
  std::size_t grid = 20;
  std::optional<TrainConfig> config;
  std::uint64_t seed = 0;
  double tau = 0.95;
  std::filesystem::path out = "runs";

  friend bool operator==( ExperimentManifest const&, ExperimentManifest const& ) = default;
};

std::string format_manifest( ExperimentManifest const& manifest );
/// Missing keys keep their defaults; unknown keys are rejected.
ExperimentManifest parse_manifest( std::string const& text );
ExperimentManifest load_manifest( std::filesystem::path const& path );
void save_manifest( ExperimentManifest const& manifest, std::filesystem::path const& path );

/// Training configurations a manifest expands to.
std::vector<TrainConfig> manifest_grid( ExperimentManifest const& manifest );
std::vector<Task> manifest_tasks( ExperimentManifest const& manifest );

/// `<out>/<dataset label>/<unit>`
std::filesystem::path run_directory( ExperimentManifest const& manifest );

/// Writes `<out>/EC-<w>-<ccc>/<TASK>.examples` for all tasks and prints the counts.
std::vector<std::filesystem::path> cmd_gen_data( std::size_t width, int completeness, std::uint64_t seed,
                                                 std::filesystem::path const& out, std::ostream& log );

struct TrainSummary
{
  std::size_t trained_tasks = 0;
  std::size_t skipped_tasks = 0;
  std::filesystem::path results;
};

/// Trains every (task, config) pair, writing one parameter dump per run, a
/// per-task row file with a completion marker, and the merged results table.
TrainSummary cmd_train( ExperimentManifest const& manifest, std::size_t jobs, std::ostream& log );

struct ExtractOptionsCli
{
  double tau = 0.95;
  bool argmax_fallback = false;
  std::optional<std::filesystem::path> data_dir;
  std::optional<std::filesystem::path> out;
};

struct ExtractSummary
{
  bool equivalent = false;
  std::filesystem::path netlist;
  std::filesystem::path dot;
  std::filesystem::path report;
  std::size_t warnings = 0;
};

/// Extract, verify against the complete dataset of the dumped task and write
/// `<stem>.circuit`, `<stem>.dot` and `<stem>.report`.
ExtractSummary cmd_extract( std::filesystem::path const& dump, ExtractOptionsCli const& options, std::ostream& log );

/// Aggregates every results.csv below `dir` into a dataset x metric by unit
/// matrix (plus one matrix per task when requested) and writes summary.csv.
/// Throws ConfigError when no result rows are found.
std::string cmd_report( std::filesystem::path const& dir, bool per_task, std::ostream& log );

} // namespace softsynth::cli
