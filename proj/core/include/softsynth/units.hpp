#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "softsynth/diffcore.hpp"
#include "softsynth/error.hpp"

namespace softsynth
{

enum class GateKind
{
  Not,
  And,
  Or,
  Xor
};

enum class UnitKind
{
  Aig,
  Lut,
  Lab
};

std::size_t gate_arity( GateKind kind );
/// 2 for AIG, 4 for LUT and LAB.
std::size_t unit_arity( UnitKind kind );
/// Learned scalars per unit (table logits and attention logits).
std::size_t unit_parameter_count( UnitKind kind );
std::string_view to_string( UnitKind kind );
UnitKind parse_unit_kind( std::string_view text );

inline constexpr std::size_t lut_table_size = 16;
inline constexpr std::size_t lab_choice_count = 3;

/// Soft semantics shared by plain doubles and taped Values.
namespace soft
{

template<typename T>
T gate( GateKind kind, std::span<T const> in )
{
  if ( in.size() != gate_arity( kind ) )
  {
    throw StructuralError( "soft gate: arity mismatch" );
  }
  switch ( kind )
  {
  case GateKind::Not: return 1.0 - in[0];
  case GateKind::And: return in[0] * in[1];
  case GateKind::Or: return in[0] + in[1] - in[0] * in[1];
  case GateKind::Xor: break;
  }
  return in[0] * ( 1.0 - in[1] ) + in[1] * ( 1.0 - in[0] );
}

template<typename T>
T nand( T const& a, T const& b )
{
  return 1.0 - a * b;
}

template<typename T>
T xor2( T const& a, T const& b )
{
  return a * ( 1.0 - b ) + b * ( 1.0 - a );
}

/// Multilinear extension of (a + b + c) mod 2.
template<typename T>
T adder_sum( T const& a, T const& b, T const& c )
{
  return xor2( xor2( a, b ), c );
}

/// Multilinear extension of [a + b + c >= 2].
template<typename T>
T adder_carry( T const& a, T const& b, T const& c )
{
  return a * b + a * c + b * c - 2.0 * ( a * b * c );
}

/// Recursive interpolation over a 2x2x2x2 table; input 0 selects the outermost axis.
///
/// `table[8*b0 + 4*b1 + 2*b2 + b3]` is the entry reached by binary inputs (b0, b1, b2, b3).
template<typename T>
T lut( std::span<T const> table, std::span<T const> in )
{
  std::array<T, 8> level3;
  for ( std::size_t j = 0; j < 8; ++j )
  {
    level3[j] = interpolate( in[3], table[2 * j + 1], table[2 * j] );
  }
  std::array<T, 4> level2;
  for ( std::size_t j = 0; j < 4; ++j )
  {
    level2[j] = interpolate( in[2], level3[2 * j + 1], level3[2 * j] );
  }
  auto const low = interpolate( in[1], level2[1], level2[0] );
  auto const high = interpolate( in[1], level2[3], level2[2] );
  return interpolate( in[0], high, low );
}

/// alpha[0] * sum + alpha[1] * carry + alpha[2] * lut_out over inputs 0..2.
template<typename T>
T lab( std::span<T const> alpha, std::span<T const> in, T const& lut_out )
{
  return alpha[0] * adder_sum( in[0], in[1], in[2] ) + alpha[1] * adder_carry( in[0], in[1], in[2] ) +
         alpha[2] * lut_out;
}

} // namespace soft

/// Standalone LUT: table entries are logistic(logit).
struct LutUnit
{
  std::array<double, lut_table_size> logits{};

  std::array<double, lut_table_size> effective_table() const;
};

struct LabUnit
{
  LutUnit lut;
  std::array<double, lab_choice_count> attention{};

  std::array<double, lab_choice_count> alpha() const;
};

/// Range- and arity-checked soft evaluation on doubles. Inputs must lie in [0, 1].
double soft_gate( GateKind kind, std::span<double const> in );
double aig_forward( double i1, double i2 );
double lut_forward( LutUnit const& unit, std::span<double const> in );
double lab_forward( LabUnit const& unit, std::span<double const> in );

/// Which LAB output a hardened block forwards.
enum class LabMode
{
  Sum,
  Carry,
  Lut
};

/// Discrete (hardened) unit: a Boolean function of its ports.
///
/// `table` bit `idx` holds the output for port values with port 0 as the most
/// significant bit of `idx`. AIG uses 4 bits; LUT and LAB use all 16.
struct HardUnit
{
  UnitKind kind = UnitKind::Aig;
  LabMode mode = LabMode::Lut;
  std::uint16_t table = 0;

  std::size_t arity() const { return unit_arity( kind ); }
  bool eval( std::span<bool const> ports ) const;
  /// `nand`, a 16-character table, or `sum` / `carry` / `lut:<table>` for LAB.
  std::string config_string() const;
  static HardUnit parse( UnitKind kind, std::string_view config );

  friend bool operator==( HardUnit const&, HardUnit const& ) = default;
};

struct HardenedUnit
{
  HardUnit unit;
  std::vector<std::string> warnings;
};

/// Threshold LUT entries at 0.5; pick argmax(alpha) for LAB with ties to the lowest index.
///
/// `table_logits` is empty for AIG; `attention_logits` is only read for LAB.
HardenedUnit harden_unit( UnitKind kind, std::span<double const> table_logits,
                          std::span<double const> attention_logits );
HardenedUnit harden_unit( LutUnit const& unit );
HardenedUnit harden_unit( LabUnit const& unit );

} // namespace softsynth
