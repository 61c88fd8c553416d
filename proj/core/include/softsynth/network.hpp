#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "softsynth/diffcore.hpp"
#include "softsynth/units.hpp"

namespace softsynth
{

enum class OutputMode
{
  Hardwired,
  Selector
};

std::string_view to_string( OutputMode mode );
OutputMode parse_output_mode( std::string_view text );

struct NetworkConfig
{
  UnitKind unit = UnitKind::Aig;
  std::size_t input_width = 1;
  std::size_t output_width = 1;
  /// w_1 .. w_l; the inputs form layer 0.
  std::vector<std::size_t> widths;
  OutputMode output_mode = OutputMode::Hardwired;
  /// Selector attends over the final layer only instead of every layer (inputs included).
  bool selector_last_layer_only = false;

  std::size_t layer_count() const { return widths.size(); }
  /// Width of layer `k`, where layer 0 is the input.
  std::size_t width( std::size_t k ) const { return k == 0 ? input_width : widths.at( k - 1 ); }

  /// Throws ConfigError on empty/zero widths or a hardwired final layer narrower than the output.
  void validate() const;

  friend bool operator==( NetworkConfig const&, NetworkConfig const& ) = default;
};

/// Position of a signal: layer 0 holds the network inputs.
struct NodeRef
{
  std::size_t layer = 0;
  std::size_t index = 0;

  friend auto operator<=>( NodeRef const&, NodeRef const& ) = default;
};

std::string to_string( NodeRef ref );

enum class ChoiceKind
{
  Wiring,
  Attention,
  Selector
};

/// One softmax choice: a contiguous block of logits in the parameter vector.
struct Choice
{
  ChoiceKind kind;
  std::size_t offset;
  std::size_t size;
  /// Destination unit (layer >= 1) for wiring/attention; {0, j} for selector j.
  NodeRef owner;
  /// Input port for wiring choices.
  std::size_t port = 0;
};

/// Layered soft network with softmax-choice wiring.
///
/// All learned scalars live in one flat parameter vector. The wiring logits of
/// port p of unit (k, m) form a block over the outputs of layers 0..k-1 in
/// (layer, index) order; cells of a k x max(w_l) matrix that have no source are
/// simply not stored, which is the same as masking them to -inf.
class SoftNetwork
{
public:
  /// Deterministic per (config, seed). Table logits ~ U(-1, 1), attention and
  /// wiring/selector logits ~ U(-0.1, 0.1).
  static SoftNetwork build( NetworkConfig const& config, std::uint64_t seed );

  NetworkConfig const& config() const { return config_; }
  std::size_t arity() const { return unit_arity( config_.unit ); }

  std::span<Parameter> parameters() { return params_; }
  std::span<Parameter const> parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::vector<double> parameter_values() const;
  void set_parameter_values( std::span<double const> values );
  /// Human-readable location such as `wiring[2.5.1][1.3]` or `table[1.0][7]`.
  std::string parameter_name( std::size_t index ) const;

  /// Number of signals visible to layer k (all outputs of layers 0..k-1).
  std::size_t source_count( std::size_t k ) const { return source_offset( k ); }
  /// Flat index of the first signal of layer l among all signals.
  std::size_t source_offset( std::size_t l ) const { return l == 0 ? 0 : cumulative_width_.at( l - 1 ); }
  std::size_t signal_count() const { return cumulative_width_.back(); }
  NodeRef source_ref( std::size_t flat ) const;
  std::size_t flat_index( NodeRef ref ) const { return source_offset( ref.layer ) + ref.index; }

  std::size_t wiring_offset( std::size_t k, std::size_t m, std::size_t p ) const;
  std::size_t table_offset( std::size_t k, std::size_t m ) const;
  std::size_t attention_offset( std::size_t k, std::size_t m ) const;
  std::size_t selector_offset( std::size_t j ) const;
  /// Signals a selector attends over: [selector_source_begin(), signal_count()).
  std::size_t selector_source_begin() const;

  std::vector<Choice> const& choices() const { return choices_; }

  /// Soft forward pass on inputs in [0, 1].
  std::vector<double> forward( std::span<double const> x ) const;

private:
  SoftNetwork() = default;
  void layout();

  NetworkConfig config_;
  std::vector<Parameter> params_;
  /// cumulative_width_[k] = w_0 + ... + w_k
  std::vector<std::size_t> cumulative_width_;
  std::vector<std::size_t> unit_offset_;
  std::vector<std::size_t> layer_unit_begin_;
  std::size_t selector_begin_ = 0;
  std::vector<Choice> choices_;

  friend SoftNetwork network_from_dump( std::string_view );
};

/// Example-independent quantities of one pass: every softmax choice and every
/// squashed table entry, aligned with the parameter vector.
template<typename T>
struct Realized
{
  std::vector<T> effective;
  /// Sum of entropies of all softmax choices; only filled when requested.
  T sharpening{};
};

template<typename T>
Realized<T> realize( SoftNetwork const& net, std::span<T const> raw, bool with_entropy );

/// Evaluate one example. `signals` receives all layer outputs (inputs first),
/// `outputs` the w_o network outputs.
template<typename T>
void evaluate( SoftNetwork const& net, Realized<T> const& realized, std::span<T const> x, std::vector<T>& signals,
               std::vector<T>& outputs );

/// Convex combination feeding port p of unit (k, m) from the outputs of layers 0..k-1.
double wire_input( SoftNetwork const& net, std::size_t k, std::size_t m, std::size_t p,
                   std::span<double const> prior_outputs );

/// Apply the output mode to a full signal vector (inputs first, then every layer).
std::vector<double> select_outputs( SoftNetwork const& net, std::span<double const> signals );

/// Max probability and entropy of each softmax choice, in choices() order.
struct ChoiceSummary
{
  double max_prob;
  double entropy;
};
std::vector<ChoiceSummary> summarize_choices( SoftNetwork const& net );

/// JSON parameter dump: config, wiring logits keyed "k.m.p" as ragged rows per
/// source layer, unit parameters keyed "k.m", selector logits keyed by output,
/// plus free-form string metadata.
std::string dump_network( SoftNetwork const& net, std::map<std::string, std::string> const& metadata = {} );
SoftNetwork network_from_dump( std::string_view text );
std::map<std::string, std::string> dump_metadata( std::string_view text );

} // namespace softsynth
