#include "softsynth/network.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "softsynth/error.hpp"
#include "softsynth/rng.hpp"

namespace softsynth
{

std::string_view to_string( OutputMode mode ) { return mode == OutputMode::Hardwired ? "hardwired" : "selector"; }

OutputMode parse_output_mode( std::string_view text )
{
  if ( text == "hardwired" )
    return OutputMode::Hardwired;
  if ( text == "selector" )
    return OutputMode::Selector;
  throw ConfigError( "unknown output mode '" + std::string( text ) + "' (expected hardwired or selector)" );
}

std::string to_string( NodeRef ref ) { return std::to_string( ref.layer ) + "." + std::to_string( ref.index ); }

void NetworkConfig::validate() const
{
  if ( input_width == 0 || output_width == 0 )
  {
    throw ConfigError( "network: input and output widths must be positive" );
  }
  if ( widths.empty() )
  {
    throw ConfigError( "network: at least one layer is required" );
  }
  for ( std::size_t k = 0; k < widths.size(); ++k )
  {
    if ( widths[k] == 0 )
    {
      throw ConfigError( "network: layer " + std::to_string( k + 1 ) + " has zero width" );
    }
  }
  if ( output_mode == OutputMode::Hardwired && widths.back() < output_width )
  {
    throw ConfigError( "network: hardwired outputs need a final layer of at least " + std::to_string( output_width ) +
                       " units, got " + std::to_string( widths.back() ) );
  }
}

void SoftNetwork::layout()
{
  config_.validate();
  auto const layers = config_.layer_count();
  cumulative_width_.assign( layers + 1, 0 );
  cumulative_width_[0] = config_.input_width;
  for ( std::size_t k = 1; k <= layers; ++k )
  {
    cumulative_width_[k] = cumulative_width_[k - 1] + config_.widths[k - 1];
  }

  auto const arity = unit_arity( config_.unit );
  auto const own = unit_parameter_count( config_.unit );
  choices_.clear();
  unit_offset_.clear();
  layer_unit_begin_.clear();
  std::size_t offset = 0;
  for ( std::size_t k = 1; k <= layers; ++k )
  {
    layer_unit_begin_.push_back( unit_offset_.size() );
    auto const sources = source_count( k );
    for ( std::size_t m = 0; m < config_.width( k ); ++m )
    {
      unit_offset_.push_back( offset );
      if ( config_.unit == UnitKind::Lab )
      {
        choices_.push_back( { ChoiceKind::Attention, offset + lut_table_size, lab_choice_count, { k, m }, 0 } );
      }
      offset += own;
      for ( std::size_t p = 0; p < arity; ++p )
      {
        choices_.push_back( { ChoiceKind::Wiring, offset, sources, { k, m }, p } );
        offset += sources;
      }
    }
  }
  selector_begin_ = offset;
  if ( config_.output_mode == OutputMode::Selector )
  {
    auto const sources = signal_count() - selector_source_begin();
    for ( std::size_t j = 0; j < config_.output_width; ++j )
    {
      choices_.push_back( { ChoiceKind::Selector, offset, sources, { 0, j }, 0 } );
      offset += sources;
    }
  }
  params_.assign( offset, Parameter{} );
}

SoftNetwork SoftNetwork::build( NetworkConfig const& config, std::uint64_t seed )
{
  SoftNetwork net;
  net.config_ = config;
  net.layout();
  auto rng = Rng::derived( seed, 0x6e6574 );
  std::vector<bool> is_table( net.params_.size(), false );
  if ( config.unit != UnitKind::Aig )
  {
    for ( auto offset : net.unit_offset_ )
    {
      std::fill_n( is_table.begin() + static_cast<std::ptrdiff_t>( offset ), lut_table_size, true );
    }
  }
  for ( std::size_t i = 0; i < net.params_.size(); ++i )
  {
    net.params_[i].value = is_table[i] ? rng.uniform( -1.0, 1.0 ) : rng.uniform( -0.1, 0.1 );
  }
  return net;
}

std::vector<double> SoftNetwork::parameter_values() const
{
  std::vector<double> out( params_.size() );
  std::transform( params_.begin(), params_.end(), out.begin(), []( Parameter const& p ) { return p.value; } );
  return out;
}

void SoftNetwork::set_parameter_values( std::span<double const> values )
{
  if ( values.size() != params_.size() )
  {
    throw StructuralError( "set_parameter_values: expected " + std::to_string( params_.size() ) + " values" );
  }
  for ( std::size_t i = 0; i < values.size(); ++i )
  {
    params_[i].value = values[i];
  }
}

NodeRef SoftNetwork::source_ref( std::size_t flat ) const
{
  for ( std::size_t l = 0; l < cumulative_width_.size(); ++l )
  {
    if ( flat < cumulative_width_[l] )
    {
      return { l, flat - source_offset( l ) };
    }
  }
  throw StructuralError( "source_ref: signal index out of range" );
}

std::size_t SoftNetwork::table_offset( std::size_t k, std::size_t m ) const
{
  if ( k == 0 || k > config_.layer_count() || m >= config_.width( k ) )
  {
    throw StructuralError( "no unit " + to_string( NodeRef{ k, m } ) );
  }
  return unit_offset_[layer_unit_begin_[k - 1] + m];
}

std::size_t SoftNetwork::attention_offset( std::size_t k, std::size_t m ) const
{
  if ( config_.unit != UnitKind::Lab )
  {
    throw StructuralError( "attention_offset: only LAB units carry attention logits" );
  }
  return table_offset( k, m ) + lut_table_size;
}

std::size_t SoftNetwork::wiring_offset( std::size_t k, std::size_t m, std::size_t p ) const
{
  if ( p >= arity() )
  {
    throw StructuralError( "wiring_offset: port " + std::to_string( p ) + " out of range" );
  }
  return table_offset( k, m ) + unit_parameter_count( config_.unit ) + p * source_count( k );
}

std::size_t SoftNetwork::selector_source_begin() const
{
  return config_.selector_last_layer_only ? source_offset( config_.layer_count() ) : 0;
}

std::size_t SoftNetwork::selector_offset( std::size_t j ) const
{
  if ( config_.output_mode != OutputMode::Selector || j >= config_.output_width )
  {
    throw StructuralError( "selector_offset: no selector for output " + std::to_string( j ) );
  }
  return selector_begin_ + j * ( signal_count() - selector_source_begin() );
}

std::string SoftNetwork::parameter_name( std::size_t index ) const
{
  for ( auto const& c : choices_ )
  {
    if ( index >= c.offset && index < c.offset + c.size )
    {
      auto const cell = index - c.offset;
      switch ( c.kind )
      {
      case ChoiceKind::Wiring:
        return "wiring[" + to_string( c.owner ) + "." + std::to_string( c.port ) + "][" +
               to_string( source_ref( cell ) ) + "]";
      case ChoiceKind::Attention:
        return "attention[" + to_string( c.owner ) + "][" + std::to_string( cell ) + "]";
      case ChoiceKind::Selector:
        return "selector[" + std::to_string( c.owner.index ) + "][" +
               to_string( source_ref( selector_source_begin() + cell ) ) + "]";
      }
    }
  }
  for ( std::size_t k = 1; k <= config_.layer_count(); ++k )
  {
    for ( std::size_t m = 0; m < config_.width( k ); ++m )
    {
      auto const offset = table_offset( k, m );
      if ( index >= offset && index < offset + lut_table_size )
      {
        return "table[" + to_string( NodeRef{ k, m } ) + "][" + std::to_string( index - offset ) + "]";
      }
    }
  }
  return "#" + std::to_string( index );
}

template<typename T>
Realized<T> realize( SoftNetwork const& net, std::span<T const> raw, bool with_entropy )
{
  assert( raw.size() == net.parameter_count() );
  Realized<T> out;
  out.effective.assign( raw.begin(), raw.end() );
  auto const& cfg = net.config();
  if ( cfg.unit != UnitKind::Aig )
  {
    for ( std::size_t k = 1; k <= cfg.layer_count(); ++k )
    {
      for ( std::size_t m = 0; m < cfg.width( k ); ++m )
      {
        auto const offset = net.table_offset( k, m );
        for ( std::size_t i = 0; i < lut_table_size; ++i )
        {
          out.effective[offset + i] = sigmoid( raw[offset + i] );
        }
      }
    }
  }
  bool first = true;
  for ( auto const& c : net.choices() )
  {
    auto result = softmax_with_entropy( raw.subspan( c.offset, c.size ) );
    std::copy( result.probs.begin(), result.probs.end(), out.effective.begin() + static_cast<std::ptrdiff_t>( c.offset ) );
    if ( with_entropy )
    {
      out.sharpening = first ? result.entropy : out.sharpening + result.entropy;
      first = false;
    }
  }
  return out;
}

template<typename T>
void evaluate( SoftNetwork const& net, Realized<T> const& realized, std::span<T const> x, std::vector<T>& signals,
               std::vector<T>& outputs )
{
  auto const& cfg = net.config();
  if ( x.size() != cfg.input_width )
  {
    throw StructuralError( "forward: expected " + std::to_string( cfg.input_width ) + " inputs, got " +
                           std::to_string( x.size() ) );
  }
  std::span<T const> eff( realized.effective );
  signals.resize( net.signal_count() );
  std::copy( x.begin(), x.end(), signals.begin() );
  auto const arity = net.arity();
  std::array<T, 4> ports;
  for ( std::size_t k = 1; k <= cfg.layer_count(); ++k )
  {
    auto const sources = net.source_count( k );
    std::span<T const> prior( signals.data(), sources );
    auto const layer_begin = net.source_offset( k );
    for ( std::size_t m = 0; m < cfg.width( k ); ++m )
    {
      auto const base = net.table_offset( k, m );
      auto const wiring = base + unit_parameter_count( cfg.unit );
      for ( std::size_t p = 0; p < arity; ++p )
      {
        ports[p] = dot( eff.subspan( wiring + p * sources, sources ), prior );
      }
      T out{};
      switch ( cfg.unit )
      {
      case UnitKind::Aig:
        out = soft::nand( ports[0], ports[1] );
        break;
      case UnitKind::Lut:
        out = soft::lut<T>( eff.subspan( base, lut_table_size ), ports );
        break;
      case UnitKind::Lab:
      {
        auto const lut_out = soft::lut<T>( eff.subspan( base, lut_table_size ), ports );
        out = soft::lab<T>( eff.subspan( base + lut_table_size, lab_choice_count ), ports, lut_out );
        break;
      }
      }
      signals[layer_begin + m] = out;
    }
  }
  outputs.resize( cfg.output_width );
  if ( cfg.output_mode == OutputMode::Hardwired )
  {
    auto const last = net.source_offset( cfg.layer_count() );
    for ( std::size_t j = 0; j < cfg.output_width; ++j )
    {
      outputs[j] = signals[last + j];
    }
  }
  else
  {
    auto const begin = net.selector_source_begin();
    std::span<T const> pool( signals.data() + begin, signals.size() - begin );
    for ( std::size_t j = 0; j < cfg.output_width; ++j )
    {
      outputs[j] = dot( eff.subspan( net.selector_offset( j ), pool.size() ), pool );
    }
  }
}

template Realized<double> realize<double>( SoftNetwork const&, std::span<double const>, bool );
template Realized<Value> realize<Value>( SoftNetwork const&, std::span<Value const>, bool );
template void evaluate<double>( SoftNetwork const&, Realized<double> const&, std::span<double const>,
                                std::vector<double>&, std::vector<double>& );
template void evaluate<Value>( SoftNetwork const&, Realized<Value> const&, std::span<Value const>,
                               std::vector<Value>&, std::vector<Value>& );

std::vector<double> SoftNetwork::forward( std::span<double const> x ) const
{
  auto const raw = parameter_values();
  auto const realized = realize<double>( *this, raw, false );
  std::vector<double> signals, outputs;
  evaluate<double>( *this, realized, x, signals, outputs );
  return outputs;
}

double wire_input( SoftNetwork const& net, std::size_t k, std::size_t m, std::size_t p,
                   std::span<double const> prior_outputs )
{
  auto const sources = net.source_count( k );
  if ( prior_outputs.size() < sources )
  {
    throw StructuralError( "wire_input: layer " + std::to_string( k ) + " needs " + std::to_string( sources ) +
                           " prior outputs" );
  }
  auto const offset = net.wiring_offset( k, m, p );
  std::vector<double> logits( sources );
  for ( std::size_t i = 0; i < sources; ++i )
  {
    logits[i] = net.parameters()[offset + i].value;
  }
  return dot( std::span<double const>( softmax( logits ) ), prior_outputs.first( sources ) );
}

std::vector<double> select_outputs( SoftNetwork const& net, std::span<double const> signals )
{
  auto const& cfg = net.config();
  if ( signals.size() != net.signal_count() )
  {
    throw StructuralError( "select_outputs: expected " + std::to_string( net.signal_count() ) + " signals" );
  }
  std::vector<double> out( cfg.output_width );
  if ( cfg.output_mode == OutputMode::Hardwired )
  {
    auto const last = net.source_offset( cfg.layer_count() );
    std::copy_n( signals.begin() + static_cast<std::ptrdiff_t>( last ), cfg.output_width, out.begin() );
    return out;
  }
  auto const begin = net.selector_source_begin();
  auto const pool = signals.subspan( begin );
  for ( std::size_t j = 0; j < cfg.output_width; ++j )
  {
    auto const offset = net.selector_offset( j );
    std::vector<double> logits( pool.size() );
    for ( std::size_t i = 0; i < pool.size(); ++i )
    {
      logits[i] = net.parameters()[offset + i].value;
    }
    out[j] = dot( std::span<double const>( softmax( logits ) ), pool );
  }
  return out;
}

std::vector<ChoiceSummary> summarize_choices( SoftNetwork const& net )
{
  std::vector<ChoiceSummary> out;
  out.reserve( net.choices().size() );
  std::vector<double> logits;
  for ( auto const& c : net.choices() )
  {
    logits.resize( c.size );
    for ( std::size_t i = 0; i < c.size; ++i )
    {
      logits[i] = net.parameters()[c.offset + i].value;
    }
    auto const result = softmax_with_entropy( logits );
    out.push_back( { *std::max_element( result.probs.begin(), result.probs.end() ), result.entropy } );
  }
  return out;
}

namespace
{

using nlohmann::json;

json rows_of( SoftNetwork const& net, std::size_t offset, std::size_t first_layer, std::size_t last_layer )
{
  json rows = json::array();
  auto const params = net.parameters();
  for ( std::size_t l = first_layer; l <= last_layer; ++l )
  {
    json row = json::array();
    for ( std::size_t n = 0; n < net.config().width( l ); ++n )
    {
      row.push_back( params[offset++].value );
    }
    rows.push_back( std::move( row ) );
  }
  return rows;
}

void read_rows( json const& rows, std::string const& key, SoftNetwork const& net, std::vector<double>& values,
                std::size_t offset, std::size_t first_layer, std::size_t last_layer )
{
  if ( !rows.is_array() || rows.size() != last_layer - first_layer + 1 )
  {
    throw ParseError( "dump: '" + key + "' must list one row per source layer", 0 );
  }
  for ( std::size_t l = first_layer; l <= last_layer; ++l )
  {
    auto const& row = rows[l - first_layer];
    if ( !row.is_array() || row.size() != net.config().width( l ) )
    {
      throw ParseError( "dump: '" + key + "' row for layer " + std::to_string( l ) + " has the wrong length", 0 );
    }
    for ( auto const& v : row )
    {
      values[offset++] = v.get<double>();
    }
  }
}

std::string unit_key( std::size_t k, std::size_t m ) { return std::to_string( k ) + "." + std::to_string( m ); }

} // namespace

std::string dump_network( SoftNetwork const& net, std::map<std::string, std::string> const& metadata )
{
  auto const& cfg = net.config();
  auto const params = net.parameters();
  json doc;
  doc["format"] = "softsynth-network/1";
  doc["config"] = { { "unit", std::string( to_string( cfg.unit ) ) },
                    { "input_width", cfg.input_width },
                    { "output_width", cfg.output_width },
                    { "widths", cfg.widths },
                    { "output_mode", std::string( to_string( cfg.output_mode ) ) },
                    { "selector_last_layer_only", cfg.selector_last_layer_only } };
  doc["metadata"] = metadata;
  json units = json::object();
  json wiring = json::object();
  for ( std::size_t k = 1; k <= cfg.layer_count(); ++k )
  {
    for ( std::size_t m = 0; m < cfg.width( k ); ++m )
    {
      if ( cfg.unit != UnitKind::Aig )
      {
        json unit;
        auto const base = net.table_offset( k, m );
        json table = json::array();
        for ( std::size_t i = 0; i < lut_table_size; ++i )
        {
          table.push_back( params[base + i].value );
        }
        unit["table"] = std::move( table );
        if ( cfg.unit == UnitKind::Lab )
        {
          json attention = json::array();
          for ( std::size_t i = 0; i < lab_choice_count; ++i )
          {
            attention.push_back( params[base + lut_table_size + i].value );
          }
          unit["attention"] = std::move( attention );
        }
        units[unit_key( k, m )] = std::move( unit );
      }
      for ( std::size_t p = 0; p < net.arity(); ++p )
      {
        wiring[unit_key( k, m ) + "." + std::to_string( p )] = rows_of( net, net.wiring_offset( k, m, p ), 0, k - 1 );
      }
    }
  }
  doc["units"] = std::move( units );
  doc["wiring"] = std::move( wiring );
  json selector = json::object();
  if ( cfg.output_mode == OutputMode::Selector )
  {
    auto const first = cfg.selector_last_layer_only ? cfg.layer_count() : 0;
    for ( std::size_t j = 0; j < cfg.output_width; ++j )
    {
      selector[std::to_string( j )] = rows_of( net, net.selector_offset( j ), first, cfg.layer_count() );
    }
  }
  doc["selector"] = std::move( selector );
  return doc.dump( 1 );
}

namespace
{

json parse_json( std::string_view text )
{
  try
  {
    return json::parse( text );
  }
  catch ( json::parse_error const& e )
  {
    throw ParseError( std::string( "dump: " ) + e.what(), 0 );
  }
}

} // namespace

std::map<std::string, std::string> dump_metadata( std::string_view text )
{
  auto const doc = parse_json( text );
  std::map<std::string, std::string> out;
  if ( doc.contains( "metadata" ) )
  {
    for ( auto const& [key, value] : doc["metadata"].items() )
    {
      out[key] = value.get<std::string>();
    }
  }
  return out;
}

SoftNetwork network_from_dump( std::string_view text )
{
  auto const doc = parse_json( text );
  try
  {
    if ( doc.value( "format", "" ) != "softsynth-network/1" )
    {
      throw ParseError( "dump: unsupported or missing format tag", 0 );
    }
    auto const& c = doc.at( "config" );
    NetworkConfig cfg;
    cfg.unit = parse_unit_kind( c.at( "unit" ).get<std::string>() );
    cfg.input_width = c.at( "input_width" ).get<std::size_t>();
    cfg.output_width = c.at( "output_width" ).get<std::size_t>();
    cfg.widths = c.at( "widths" ).get<std::vector<std::size_t>>();
    cfg.output_mode = parse_output_mode( c.at( "output_mode" ).get<std::string>() );
    cfg.selector_last_layer_only = c.value( "selector_last_layer_only", false );

    SoftNetwork net;
    net.config_ = cfg;
    net.layout();
    std::vector<double> values( net.parameter_count(), 0.0 );
    for ( std::size_t k = 1; k <= cfg.layer_count(); ++k )
    {
      for ( std::size_t m = 0; m < cfg.width( k ); ++m )
      {
        auto const key = unit_key( k, m );
        if ( cfg.unit != UnitKind::Aig )
        {
          auto const& unit = doc.at( "units" ).at( key );
          auto const table = unit.at( "table" ).get<std::vector<double>>();
          if ( table.size() != lut_table_size )
            throw ParseError( "dump: unit " + key + " table must have 16 entries", 0 );
          std::copy( table.begin(), table.end(), values.begin() + static_cast<std::ptrdiff_t>( net.table_offset( k, m ) ) );
          if ( cfg.unit == UnitKind::Lab )
          {
            auto const attention = unit.at( "attention" ).get<std::vector<double>>();
            if ( attention.size() != lab_choice_count )
              throw ParseError( "dump: unit " + key + " attention must have 3 entries", 0 );
            std::copy( attention.begin(), attention.end(),
                       values.begin() + static_cast<std::ptrdiff_t>( net.attention_offset( k, m ) ) );
          }
        }
        for ( std::size_t p = 0; p < net.arity(); ++p )
        {
          auto const wkey = key + "." + std::to_string( p );
          read_rows( doc.at( "wiring" ).at( wkey ), wkey, net, values, net.wiring_offset( k, m, p ), 0, k - 1 );
        }
      }
    }
    if ( cfg.output_mode == OutputMode::Selector )
    {
      auto const first = cfg.selector_last_layer_only ? cfg.layer_count() : 0;
      for ( std::size_t j = 0; j < cfg.output_width; ++j )
      {
        auto const key = std::to_string( j );
        read_rows( doc.at( "selector" ).at( key ), "selector " + key, net, values, net.selector_offset( j ), first,
                   cfg.layer_count() );
      }
    }
    net.set_parameter_values( values );
    return net;
  }
  catch ( json::exception const& e )
  {
    throw ParseError( std::string( "dump: " ) + e.what(), 0 );
  }
}

} // namespace softsynth
