#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softsynth/datasets.hpp"
#include "softsynth/network.hpp"

namespace softsynth
{

struct TrainConfig
{
  std::size_t batch_size = 8;
  double learning_rate = 0.3;
  /// Per-epoch exponential learning-rate decay.
  double decay = 1.0;
  std::size_t max_epochs = 100;
  /// Weight of the sharpening entropy term once engaged.
  double sigma = 1.0;
  /// First epoch (0-based) at which the sharpening term is active.
  std::size_t sigma_start_epoch = 50;
  OutputMode output_mode = OutputMode::Hardwired;
  std::uint64_t seed = 0;
  /// Presence threshold used for extraction-oriented reporting.
  double tau = 0.95;
  /// Stop as soon as the training set is fit, ignoring the sharpening requirements.
  bool stop_on_accuracy_only = false;
  /// With sharpening active, early stopping also waits until every softmax
  /// choice has entropy below this bound.
  double stop_entropy = 0.01;

  /// Strict ranges: batch in [4, 16], lr in (0.1, 0.6),
  /// decay in (0.9, 1], tau in (0, 1). Permissive mode only checks well-formedness.
  void validate( bool strict_ranges = true ) const;

  friend bool operator==( TrainConfig const&, TrainConfig const& ) = default;
};

struct EpochLosses
{
  double total = 0.0;
  double bce = 0.0;
  /// Weighted sharpening contribution (sigma_effective * H), zero while disengaged.
  double entropy = 0.0;

  friend bool operator==( EpochLosses const&, EpochLosses const& ) = default;
};

struct Accuracy
{
  double signal = 0.0;
  double example = 0.0;

  friend bool operator==( Accuracy const&, Accuracy const& ) = default;
};

struct RunResult
{
  std::vector<EpochLosses> history;
  Accuracy train;
  std::size_t epochs = 0;
  bool early_stopped = false;
  double max_residual_entropy = 0.0;
  /// Smallest max-probability over all softmax choices.
  double min_choice_sharpness = 0.0;

  friend bool operator==( RunResult const&, RunResult const& ) = default;
};

/// Mean binary cross entropy; predictions are clamped to [1e-7, 1 - 1e-7].
double bce_loss( BitVector const& truth, std::span<double const> predictions );
Value bce_loss( BitVector const& truth, std::span<Value const> predictions );

/// Sum of the entropies of every softmax choice in the network.
double sharpening_loss( SoftNetwork const& net );

/// sigma is applied only from config.sigma_start_epoch onwards.
double effective_sigma( TrainConfig const& config, std::size_t epoch );
double total_loss( BitVector const& truth, std::span<double const> predictions, SoftNetwork const& net,
                   std::size_t epoch, TrainConfig const& config );

/// Both metrics thresholded at 0.5 (a prediction of exactly 0.5 reads as 1).
Accuracy accuracy( SoftNetwork const& net, TaskDataset const& dataset );
double signal_accuracy( SoftNetwork const& net, TaskDataset const& dataset );
double example_accuracy( SoftNetwork const& net, TaskDataset const& dataset );

/// Mini-batch Adam training; mutates `net`. Deterministic per (network, dataset, config).
RunResult train( SoftNetwork& net, TaskDataset const& dataset, TrainConfig const& config );

/// Layer widths of the networks a grid trains; the task fixes input/output widths.
struct NetworkShape
{
  UnitKind unit = UnitKind::Aig;
  std::vector<std::size_t> widths;
  bool selector_last_layer_only = false;
};

NetworkConfig network_config( NetworkShape const& shape, TaskSpec const& spec, OutputMode mode );

/// batch {4,8,16} x lr {0.15,0.3,0.5} x decay {0.95,1.0} x output {hardwired, selector},
/// enumerated with batch outermost, then lr, then decay, with the output mode
/// alternating fastest; truncated to `count` entries.
std::vector<TrainConfig> default_grid( std::size_t count = 20, std::uint64_t seed = 0 );

/// Training set and the set metrics are reported on (identical for complete datasets).
struct GridTask
{
  TaskDataset train;
  TaskDataset full;
};

struct GridRow
{
  std::string dataset;
  std::string task;
  UnitKind unit = UnitKind::Aig;
  std::size_t config_id = 0;
  TrainConfig config;
  Accuracy train;
  Accuracy full;
  std::size_t epochs = 0;
  bool early_stopped = false;
  double max_residual_entropy = 0.0;
};

struct TaskSummary
{
  std::string task;
  Accuracy best;
};

struct GridReport
{
  std::vector<GridRow> rows;
  /// Per task, the best value of each metric over the grid (full-set accuracies).
  std::vector<TaskSummary> per_task;
  /// Unweighted mean of per_task.
  Accuracy mean;
};

/// Best-per-task then mean-across-tasks aggregation of full-set accuracies.
GridReport aggregate( std::vector<GridRow> rows );

struct GridOptions
{
  std::size_t jobs = 1;
  /// Called after every finished (task, config) run together with its trained network.
  std::function<void( GridRow const&, SoftNetwork const& )> on_run;
};

/// One fresh network per (task, config), trained on `train` and evaluated on both sets.
GridReport run_grid( std::span<GridTask const> tasks, NetworkShape const& shape, std::span<TrainConfig const> grid,
                     GridOptions const& options = {} );

/// Train and evaluate a single (task, config) pair.
GridRow run_single( GridTask const& task, NetworkShape const& shape, TrainConfig const& config, std::size_t config_id,
                    std::optional<SoftNetwork>* trained = nullptr );

/// Result table columns, comma separated.
std::string results_header();
std::string format_row( GridRow const& row );
GridRow parse_row( std::string_view line );

} // namespace softsynth
