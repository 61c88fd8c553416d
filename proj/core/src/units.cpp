#include "softsynth/units.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace softsynth
{

std::size_t gate_arity( GateKind kind ) { return kind == GateKind::Not ? 1u : 2u; }

std::size_t unit_arity( UnitKind kind ) { return kind == UnitKind::Aig ? 2u : 4u; }

std::size_t unit_parameter_count( UnitKind kind )
{
  switch ( kind )
  {
  case UnitKind::Aig: return 0;
  case UnitKind::Lut: return lut_table_size;
  case UnitKind::Lab: return lut_table_size + lab_choice_count;
  }
  return 0;
}

std::string_view to_string( UnitKind kind )
{
  switch ( kind )
  {
  case UnitKind::Aig: return "AIG";
  case UnitKind::Lut: return "LUT";
  case UnitKind::Lab: return "LAB";
  }
  return "?";
}

UnitKind parse_unit_kind( std::string_view text )
{
  std::string upper( text );
  std::transform( upper.begin(), upper.end(), upper.begin(), []( unsigned char c ) { return std::toupper( c ); } );
  if ( upper == "AIG" )
    return UnitKind::Aig;
  if ( upper == "LUT" )
    return UnitKind::Lut;
  if ( upper == "LAB" )
    return UnitKind::Lab;
  throw ConfigError( "unknown unit kind '" + std::string( text ) + "' (expected AIG, LUT or LAB)" );
}

std::array<double, lut_table_size> LutUnit::effective_table() const
{
  std::array<double, lut_table_size> out;
  std::transform( logits.begin(), logits.end(), out.begin(), []( double x ) { return sigmoid( x ); } );
  return out;
}

std::array<double, lab_choice_count> LabUnit::alpha() const
{
  auto const probs = softmax( attention );
  std::array<double, lab_choice_count> out;
  std::copy( probs.begin(), probs.end(), out.begin() );
  return out;
}

namespace
{

void check_inputs( std::span<double const> in, std::size_t arity, char const* what )
{
  if ( in.size() != arity )
  {
    throw StructuralError( std::string( what ) + ": expected " + std::to_string( arity ) + " inputs, got " +
                           std::to_string( in.size() ) );
  }
  for ( auto x : in )
  {
    if ( !( x >= 0.0 && x <= 1.0 ) )
    {
      throw InvalidInput( std::string( what ) + ": input outside [0, 1]" );
    }
  }
}

} // namespace

double soft_gate( GateKind kind, std::span<double const> in )
{
  check_inputs( in, gate_arity( kind ), "soft_gate" );
  return soft::gate<double>( kind, in );
}

double aig_forward( double i1, double i2 )
{
  std::array<double, 2> const in{ i1, i2 };
  check_inputs( in, 2, "aig_forward" );
  return soft::nand( i1, i2 );
}

double lut_forward( LutUnit const& unit, std::span<double const> in )
{
  check_inputs( in, 4, "lut_forward" );
  auto const table = unit.effective_table();
  return soft::lut<double>( table, in );
}

double lab_forward( LabUnit const& unit, std::span<double const> in )
{
  check_inputs( in, 4, "lab_forward" );
  auto const table = unit.lut.effective_table();
  auto const alpha = unit.alpha();
  return soft::lab<double>( alpha, in, soft::lut<double>( table, in ) );
}

bool HardUnit::eval( std::span<bool const> ports ) const
{
  if ( ports.size() != arity() )
  {
    throw StructuralError( "HardUnit::eval: arity mismatch" );
  }
  if ( kind == UnitKind::Aig )
  {
    return !( ports[0] && ports[1] );
  }
  if ( kind == UnitKind::Lab && mode != LabMode::Lut )
  {
    auto const count = int( ports[0] ) + int( ports[1] ) + int( ports[2] );
    return mode == LabMode::Sum ? ( count % 2 == 1 ) : ( count >= 2 );
  }
  unsigned idx = 0;
  for ( auto bit : ports )
  {
    idx = ( idx << 1 ) | unsigned( bit );
  }
  return ( table >> idx ) & 1u;
}

namespace
{

std::string table_string( std::uint16_t table )
{
  std::string out( lut_table_size, '0' );
  for ( std::size_t i = 0; i < lut_table_size; ++i )
  {
    out[i] = ( ( table >> i ) & 1u ) ? '1' : '0';
  }
  return out;
}

std::uint16_t parse_table( std::string_view text )
{
  if ( text.size() != lut_table_size )
  {
    throw ParseError( "LUT table must have 16 entries, got '" + std::string( text ) + "'", 0 );
  }
  std::uint16_t table = 0;
  for ( std::size_t i = 0; i < lut_table_size; ++i )
  {
    if ( text[i] == '1' )
      table |= std::uint16_t( 1u << i );
    else if ( text[i] != '0' )
      throw ParseError( "LUT table entries must be 0 or 1: '" + std::string( text ) + "'", 0 );
  }
  return table;
}

} // namespace

std::string HardUnit::config_string() const
{
  switch ( kind )
  {
  case UnitKind::Aig: return "nand";
  case UnitKind::Lut: return table_string( table );
  case UnitKind::Lab:
    if ( mode == LabMode::Sum )
      return "sum";
    if ( mode == LabMode::Carry )
      return "carry";
    return "lut:" + table_string( table );
  }
  return {};
}

HardUnit HardUnit::parse( UnitKind kind, std::string_view config )
{
  HardUnit unit;
  unit.kind = kind;
  switch ( kind )
  {
  case UnitKind::Aig:
    if ( config != "nand" )
      throw ParseError( "AIG unit config must be 'nand', got '" + std::string( config ) + "'", 0 );
    unit.table = 0b0111;
    break;
  case UnitKind::Lut:
    unit.table = parse_table( config );
    break;
  case UnitKind::Lab:
    if ( config == "sum" )
      unit.mode = LabMode::Sum;
    else if ( config == "carry" )
      unit.mode = LabMode::Carry;
    else if ( config.starts_with( "lut:" ) )
      unit.table = parse_table( config.substr( 4 ) );
    else
      throw ParseError( "LAB unit config must be sum, carry or lut:<table>, got '" + std::string( config ) + "'", 0 );
    break;
  }
  return unit;
}

HardenedUnit harden_unit( UnitKind kind, std::span<double const> table_logits, std::span<double const> attention_logits )
{
  HardenedUnit out;
  out.unit.kind = kind;
  if ( kind == UnitKind::Aig )
  {
    out.unit.table = 0b0111; // NAND: only index 3 (both ports set) yields 0
    return out;
  }
  if ( table_logits.size() != lut_table_size )
  {
    throw StructuralError( "harden_unit: LUT table needs 16 logits" );
  }
  for ( std::size_t i = 0; i < lut_table_size; ++i )
  {
    auto const entry = sigmoid( table_logits[i] );
    if ( entry > 0.5 )
    {
      out.unit.table |= std::uint16_t( 1u << i );
    }
    if ( std::abs( entry - 0.5 ) <= 1e-6 )
    {
      out.warnings.push_back( "LUT entry " + std::to_string( i ) + " is within 1e-6 of 0.5" );
    }
  }
  if ( kind == UnitKind::Lab )
  {
    if ( attention_logits.size() != lab_choice_count )
    {
      throw StructuralError( "harden_unit: LAB attention needs 3 logits" );
    }
    auto const alpha = softmax( attention_logits );
    std::size_t best = 0;
    for ( std::size_t i = 1; i < alpha.size(); ++i )
    {
      if ( alpha[i] > alpha[best] )
        best = i;
    }
    for ( std::size_t i = 0; i < alpha.size(); ++i )
    {
      if ( i != best && std::abs( alpha[i] - alpha[best] ) <= 1e-9 )
      {
        out.warnings.push_back( "LAB attention tie between choices " + std::to_string( std::min( i, best ) ) +
                                " and " + std::to_string( std::max( i, best ) ) );
      }
    }
    out.unit.mode = static_cast<LabMode>( best );
    if ( out.unit.mode != LabMode::Lut )
    {
      out.unit.table = 0;
    }
  }
  return out;
}

HardenedUnit harden_unit( LutUnit const& unit ) { return harden_unit( UnitKind::Lut, unit.logits, {} ); }

HardenedUnit harden_unit( LabUnit const& unit ) { return harden_unit( UnitKind::Lab, unit.lut.logits, unit.attention ); }

} // namespace softsynth
