#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "softsynth/datasets.hpp"
#include "softsynth/network.hpp"
#include "softsynth/units.hpp"

namespace softsynth
{

/// Connection from a signal (input terminal or unit) into a unit port.
struct Wire
{
  NodeRef source;
  NodeRef destination;
  std::size_t port = 0;

  friend auto operator<=>( Wire const&, Wire const& ) = default;
};

/// Wires whose softmax weight exceeds tau. Since tau > 0.5 each port has at most one.
struct WirePresence
{
  double tau = 0.95;
  std::vector<Wire> wires;

  std::optional<NodeRef> source( NodeRef destination, std::size_t port ) const;
};

WirePresence wire_presence( SoftNetwork const& net, double tau );

struct CircuitUnit
{
  NodeRef id;
  HardUnit unit;

  friend bool operator==( CircuitUnit const&, CircuitUnit const& ) = default;
};

/// Either a signal or a constant.
struct OutputBinding
{
  NodeRef source;
  std::optional<bool> constant;

  friend bool operator==( OutputBinding const&, OutputBinding const& ) = default;
};

/// Discrete netlist read out of a trained network.
struct ExtractedCircuit
{
  UnitKind kind = UnitKind::Aig;
  std::size_t input_width = 0;
  std::size_t output_width = 0;
  /// Sorted by (layer, index).
  std::vector<CircuitUnit> units;
  /// Sorted by (destination, port).
  std::vector<Wire> wires;
  std::vector<OutputBinding> outputs;
  std::vector<std::string> warnings;

  CircuitUnit const* find_unit( NodeRef id ) const;

  /// Equality ignores warnings.
  friend bool operator==( ExtractedCircuit const& a, ExtractedCircuit const& b )
  {
    return a.kind == b.kind && a.input_width == b.input_width && a.output_width == b.output_width &&
           a.units == b.units && a.wires == b.wires && a.outputs == b.outputs;
  }
};

struct ExtractOptions
{
  /// Presence threshold in (0.5, 1).
  double tau = 0.95;
  /// Resolve unsharp ports and selectors by argmax, recording a warning.
  bool argmax_fallback = false;
  /// Keep every unit that sources any present wire, not only those reachable from an output.
  bool keep_all_sourcing_units = false;
};

/// Backward reachability from the output units over present wires, with each
/// kept unit hardened. Throws AmbiguousOutput / AmbiguousWiring when a needed
/// choice has no entry above tau (unless argmax_fallback is set).
ExtractedCircuit extract( SoftNetwork const& net, ExtractOptions const& options = {} );

/// Throws StructuralError unless every unit port has exactly one wire from a
/// strictly lower layer and all references resolve.
void check_circuit( ExtractedCircuit const& circuit );

/// Pure Boolean evaluation in layer order.
BitVector simulate( ExtractedCircuit const& circuit, BitVector const& x );

struct VerificationReport
{
  std::vector<bool> matches;
  std::size_t mismatches = 0;
  double signal_accuracy = 0.0;
  double example_accuracy = 0.0;
  /// Dataset enumerates every defined input.
  bool complete_dataset = false;
  /// Every example matches and the dataset is complete.
  bool equivalent = false;
};

VerificationReport verify( ExtractedCircuit const& circuit, TaskDataset const& dataset );

/// Line-oriented netlist:
///
///     softsynth-circuit 1
///     kind <AIG|LUT|LAB>
///     inputs <w_i>
///     outputs <w_o>
///     unit <layer>.<index> <kind> <config>
///     wire <src> -> <dst>:<port>
///     output <j> <src | const0 | const1>
///
/// Lines starting with '#' are comments (warnings are written this way).
std::string format_circuit( ExtractedCircuit const& circuit );
ExtractedCircuit parse_circuit( std::string_view text );

/// Graphviz digraph, layers ranked left to right.
std::string format_dot( ExtractedCircuit const& circuit );

} // namespace softsynth
