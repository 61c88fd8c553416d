#include "softsynth/extractor.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <map>
#include <set>
#include <tuple>
#include <sstream>

#include "softsynth/error.hpp"

namespace softsynth
{

std::optional<NodeRef> WirePresence::source( NodeRef destination, std::size_t port ) const
{
  for ( auto const& w : wires )
  {
    if ( w.destination == destination && w.port == port )
    {
      return w.source;
    }
  }
  return std::nullopt;
}

namespace
{

std::string format_tau( double tau )
{
  std::ostringstream os;
  os.precision( 10 );
  os << tau;
  return os.str();
}

std::vector<double> choice_probs( SoftNetwork const& net, Choice const& c )
{
  std::vector<double> logits( c.size );
  for ( std::size_t i = 0; i < c.size; ++i )
  {
    logits[i] = net.parameters()[c.offset + i].value;
  }
  return softmax( logits );
}

void check_tau( double tau )
{
  if ( !( tau > 0.5 && tau < 1.0 ) )
  {
    throw ConfigError( "presence threshold tau must lie in (0.5, 1)" );
  }
}

/// "0.3 (p=0.61), 1.0 (p=0.22)" for the two strongest sources.
std::string top_two( std::vector<double> const& probs, std::size_t source_begin, SoftNetwork const& net )
{
  std::vector<std::size_t> idx( probs.size() );
  for ( std::size_t i = 0; i < idx.size(); ++i )
    idx[i] = i;
  auto const shown = std::min<std::size_t>( 2, idx.size() );
  std::partial_sort( idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>( shown ), idx.end(),
                     [&]( std::size_t a, std::size_t b ) { return probs[a] > probs[b]; } );
  std::ostringstream os;
  os.precision( 4 );
  for ( std::size_t i = 0; i < shown; ++i )
  {
    os << ( i ? ", " : "" ) << to_string( net.source_ref( source_begin + idx[i] ) ) << " (p=" << probs[idx[i]] << ")";
  }
  return os.str();
}

std::size_t argmax( std::vector<double> const& probs )
{
  return static_cast<std::size_t>( std::max_element( probs.begin(), probs.end() ) - probs.begin() );
}

} // namespace

WirePresence wire_presence( SoftNetwork const& net, double tau )
{
  check_tau( tau );
  WirePresence presence;
  presence.tau = tau;
  for ( auto const& c : net.choices() )
  {
    if ( c.kind != ChoiceKind::Wiring )
    {
      continue;
    }
    auto const probs = choice_probs( net, c );
    for ( std::size_t i = 0; i < probs.size(); ++i )
    {
      if ( probs[i] > tau )
      {
        presence.wires.push_back( { net.source_ref( i ), c.owner, c.port } );
      }
    }
  }
  std::sort( presence.wires.begin(), presence.wires.end(),
             []( Wire const& a, Wire const& b ) { return std::tie( a.destination, a.port ) < std::tie( b.destination, b.port ); } );
  return presence;
}

CircuitUnit const* ExtractedCircuit::find_unit( NodeRef id ) const
{
  auto it = std::lower_bound( units.begin(), units.end(), id,
                              []( CircuitUnit const& u, NodeRef const& ref ) { return u.id < ref; } );
  return it != units.end() && it->id == id ? &*it : nullptr;
}

ExtractedCircuit extract( SoftNetwork const& net, ExtractOptions const& options )
{
  check_tau( options.tau );
  auto const& cfg = net.config();
  auto const presence = wire_presence( net, options.tau );

  ExtractedCircuit circuit;
  circuit.kind = cfg.unit;
  circuit.input_width = cfg.input_width;
  circuit.output_width = cfg.output_width;

  std::deque<NodeRef> pending;
  std::set<NodeRef> kept;
  auto const keep = [&]( NodeRef ref ) {
    if ( ref.layer > 0 && kept.insert( ref ).second )
    {
      pending.push_back( ref );
    }
  };

  for ( std::size_t j = 0; j < cfg.output_width; ++j )
  {
    NodeRef source{ cfg.layer_count(), j };
    if ( cfg.output_mode == OutputMode::Selector )
    {
      auto const& choice = *std::find_if( net.choices().begin(), net.choices().end(), [&]( Choice const& c ) {
        return c.kind == ChoiceKind::Selector && c.owner.index == j;
      } );
      auto const probs = choice_probs( net, choice );
      auto const best = argmax( probs );
      if ( !( probs[best] > options.tau ) )
      {
        auto const detail = "output " + std::to_string( j ) + " selector is not sharp at tau=" +
                            format_tau( options.tau ) + "; top entries " +
                            top_two( probs, net.selector_source_begin(), net );
        if ( !options.argmax_fallback )
        {
          throw AmbiguousOutput( detail );
        }
        circuit.warnings.push_back( detail + "; using argmax" );
      }
      source = net.source_ref( net.selector_source_begin() + best );
    }
    circuit.outputs.push_back( { source, std::nullopt } );
    keep( source );
  }
  if ( options.keep_all_sourcing_units )
  {
    for ( auto const& w : presence.wires )
    {
      keep( w.source );
    }
  }

  std::map<std::pair<NodeRef, std::size_t>, Choice const*> port_choice;
  for ( auto const& c : net.choices() )
  {
    if ( c.kind == ChoiceKind::Wiring )
    {
      port_choice[{ c.owner, c.port }] = &c;
    }
  }

  while ( !pending.empty() )
  {
    auto const unit = pending.front();
    pending.pop_front();
    for ( std::size_t p = 0; p < net.arity(); ++p )
    {
      auto source = presence.source( unit, p );
      if ( !source )
      {
        auto const probs = choice_probs( net, *port_choice.at( { unit, p } ) );
        auto const detail = "port " + to_string( unit ) + ":" + std::to_string( p ) + " has no wire above tau=" +
                            format_tau( options.tau ) + "; top entries " + top_two( probs, 0, net );
        if ( !options.argmax_fallback )
        {
          throw AmbiguousWiring( detail );
        }
        circuit.warnings.push_back( detail + "; using argmax" );
        source = net.source_ref( argmax( probs ) );
      }
      circuit.wires.push_back( { *source, unit, p } );
      keep( *source );
    }
  }

  auto const params = net.parameter_values();
  for ( auto const& id : kept )
  {
    std::span<double const> table, attention;
    if ( cfg.unit != UnitKind::Aig )
    {
      table = std::span<double const>( params ).subspan( net.table_offset( id.layer, id.index ), lut_table_size );
    }
    if ( cfg.unit == UnitKind::Lab )
    {
      attention = std::span<double const>( params ).subspan( net.attention_offset( id.layer, id.index ), lab_choice_count );
    }
    auto hardened = harden_unit( cfg.unit, table, attention );
    for ( auto& w : hardened.warnings )
    {
      circuit.warnings.push_back( "unit " + to_string( id ) + ": " + w );
    }
    circuit.units.push_back( { id, hardened.unit } );
  }
  std::sort( circuit.wires.begin(), circuit.wires.end(),
             []( Wire const& a, Wire const& b ) { return std::tie( a.destination, a.port ) < std::tie( b.destination, b.port ); } );
  return circuit;
}

void check_circuit( ExtractedCircuit const& circuit )
{
  auto const arity = unit_arity( circuit.kind );
  auto const signal_exists = [&]( NodeRef ref ) {
    return ref.layer == 0 ? ref.index < circuit.input_width : circuit.find_unit( ref ) != nullptr;
  };
  if ( !std::is_sorted( circuit.units.begin(), circuit.units.end(),
                        []( CircuitUnit const& a, CircuitUnit const& b ) { return a.id < b.id; } ) )
  {
    throw StructuralError( "circuit: units must be sorted by (layer, index)" );
  }
  std::map<NodeRef, std::vector<int>> port_count;
  for ( auto const& u : circuit.units )
  {
    if ( u.id.layer == 0 )
      throw StructuralError( "circuit: unit " + to_string( u.id ) + " sits in the input layer" );
    if ( u.unit.kind != circuit.kind )
      throw StructuralError( "circuit: unit " + to_string( u.id ) + " has the wrong kind" );
    port_count[u.id].assign( arity, 0 );
  }
  for ( auto const& w : circuit.wires )
  {
    auto it = port_count.find( w.destination );
    if ( it == port_count.end() || w.port >= arity )
      throw StructuralError( "circuit: wire into unknown port " + to_string( w.destination ) + ":" + std::to_string( w.port ) );
    if ( !signal_exists( w.source ) )
      throw StructuralError( "circuit: wire from unknown signal " + to_string( w.source ) );
    if ( w.source.layer >= w.destination.layer )
      throw StructuralError( "circuit: wire " + to_string( w.source ) + " -> " + to_string( w.destination ) +
                             " does not go to a higher layer" );
    it->second[w.port] += 1;
  }
  for ( auto const& [id, counts] : port_count )
  {
    for ( std::size_t p = 0; p < counts.size(); ++p )
    {
      if ( counts[p] != 1 )
        throw StructuralError( "circuit: port " + to_string( id ) + ":" + std::to_string( p ) + " has " +
                               std::to_string( counts[p] ) + " wires" );
    }
  }
  if ( circuit.outputs.size() != circuit.output_width )
    throw StructuralError( "circuit: expected " + std::to_string( circuit.output_width ) + " outputs" );
  for ( std::size_t j = 0; j < circuit.outputs.size(); ++j )
  {
    auto const& o = circuit.outputs[j];
    if ( !o.constant && !signal_exists( o.source ) )
      throw StructuralError( "circuit: output " + std::to_string( j ) + " reads unknown signal " + to_string( o.source ) );
  }
}

BitVector simulate( ExtractedCircuit const& circuit, BitVector const& x )
{
  if ( x.size() != circuit.input_width )
  {
    throw StructuralError( "simulate: expected " + std::to_string( circuit.input_width ) + " input bits, got " +
                           std::to_string( x.size() ) );
  }
  std::map<NodeRef, bool> value;
  for ( std::size_t i = 0; i < x.size(); ++i )
  {
    value[{ 0, i }] = x[i];
  }
  auto const arity = unit_arity( circuit.kind );
  std::array<bool, 4> ports{};
  auto wire = circuit.wires.begin();
  for ( auto const& u : circuit.units )
  {
    for ( std::size_t p = 0; p < arity; ++p, ++wire )
    {
      if ( wire == circuit.wires.end() || wire->destination != u.id || wire->port != p )
      {
        throw StructuralError( "simulate: port " + to_string( u.id ) + ":" + std::to_string( p ) + " is not wired" );
      }
      ports[p] = value.at( wire->source );
    }
    value[u.id] = u.unit.eval( std::span<bool const>( ports.data(), arity ) );
  }
  std::vector<bool> out;
  out.reserve( circuit.outputs.size() );
  for ( auto const& o : circuit.outputs )
  {
    out.push_back( o.constant ? *o.constant : value.at( o.source ) );
  }
  return BitVector( std::move( out ) );
}

VerificationReport verify( ExtractedCircuit const& circuit, TaskDataset const& dataset )
{
  if ( dataset.spec.input_width != circuit.input_width || dataset.spec.output_width != circuit.output_width )
  {
    throw StructuralError( "verify: dataset " + dataset.spec.name() + " widths do not match the circuit" );
  }
  VerificationReport report;
  std::size_t bits_right = 0;
  for ( auto const& ex : dataset.examples )
  {
    auto const y = simulate( circuit, ex.input );
    std::size_t right = 0;
    for ( std::size_t j = 0; j < y.size(); ++j )
    {
      right += y[j] == ex.output[j];
    }
    bits_right += right;
    report.matches.push_back( right == y.size() );
    report.mismatches += right != y.size();
  }
  auto const n = static_cast<double>( dataset.size() );
  if ( !dataset.examples.empty() )
  {
    report.signal_accuracy = static_cast<double>( bits_right ) / ( n * static_cast<double>( circuit.output_width ) );
    report.example_accuracy = static_cast<double>( dataset.size() - report.mismatches ) / n;
  }
  report.complete_dataset = dataset.completeness == 100;
  report.equivalent = report.complete_dataset && report.mismatches == 0;
  return report;
}

std::string format_circuit( ExtractedCircuit const& circuit )
{
  std::ostringstream os;
  os << "softsynth-circuit 1\n";
  os << "kind " << to_string( circuit.kind ) << '\n';
  os << "inputs " << circuit.input_width << '\n';
  os << "outputs " << circuit.output_width << '\n';
  for ( auto const& w : circuit.warnings )
  {
    os << "# warning: " << w << '\n';
  }
  for ( auto const& u : circuit.units )
  {
    os << "unit " << to_string( u.id ) << ' ' << to_string( u.unit.kind ) << ' ' << u.unit.config_string() << '\n';
  }
  for ( auto const& w : circuit.wires )
  {
    os << "wire " << to_string( w.source ) << " -> " << to_string( w.destination ) << ':' << w.port << '\n';
  }
  for ( std::size_t j = 0; j < circuit.outputs.size(); ++j )
  {
    auto const& o = circuit.outputs[j];
    os << "output " << j << ' ';
    if ( o.constant )
      os << ( *o.constant ? "const1" : "const0" );
    else
      os << to_string( o.source );
    os << '\n';
  }
  return os.str();
}

namespace
{

NodeRef parse_ref( std::string const& text, std::size_t line )
{
  auto const dot = text.find( '.' );
  try
  {
    if ( dot == std::string::npos )
      throw std::invalid_argument( text );
    std::size_t used_a = 0, used_b = 0;
    auto const a = std::stoul( text.substr( 0, dot ), &used_a );
    auto const b = std::stoul( text.substr( dot + 1 ), &used_b );
    if ( used_a != dot || used_b != text.size() - dot - 1 )
      throw std::invalid_argument( text );
    return { a, b };
  }
  catch ( std::logic_error const& )
  {
    throw ParseError( "expected <layer>.<index>, got '" + text + "'", line );
  }
}

std::size_t parse_count( std::string const& text, std::size_t line )
{
  try
  {
    std::size_t used = 0;
    auto const v = std::stoul( text, &used );
    if ( used == text.size() )
      return v;
  }
  catch ( std::logic_error const& )
  {
  }
  throw ParseError( "expected a number, got '" + text + "'", line );
}

} // namespace

ExtractedCircuit parse_circuit( std::string_view text )
{
  std::istringstream in{ std::string( text ) };
  ExtractedCircuit circuit;
  std::string line;
  std::size_t line_no = 0;
  int header = 0;
  std::map<std::size_t, OutputBinding> outputs;
  while ( std::getline( in, line ) )
  {
    ++line_no;
    if ( line.empty() || line[0] == '#' )
    {
      if ( line.starts_with( "# warning: " ) )
        circuit.warnings.push_back( line.substr( 11 ) );
      continue;
    }
    std::istringstream fields( line );
    std::vector<std::string> tok;
    for ( std::string t; fields >> t; )
      tok.push_back( t );
    auto const need = [&]( std::size_t n ) {
      if ( tok.size() != n )
        throw ParseError( "malformed '" + tok[0] + "' line", line_no );
    };
    if ( header < 4 )
    {
      static char const* const keys[] = { "softsynth-circuit", "kind", "inputs", "outputs" };
      if ( tok.size() != 2 || tok[0] != keys[header] )
        throw ParseError( std::string( "expected header field '" ) + keys[header] + "'", line_no );
      if ( header == 0 && tok[1] != "1" )
        throw ParseError( "unsupported circuit format version " + tok[1], line_no );
      if ( header == 1 )
      {
        try
        {
          circuit.kind = parse_unit_kind( tok[1] );
        }
        catch ( ConfigError const& e )
        {
          throw ParseError( e.what(), line_no );
        }
      }
      if ( header == 2 )
        circuit.input_width = parse_count( tok[1], line_no );
      if ( header == 3 )
        circuit.output_width = parse_count( tok[1], line_no );
      ++header;
      continue;
    }
    if ( tok[0] == "unit" )
    {
      need( 4 );
      CircuitUnit u;
      u.id = parse_ref( tok[1], line_no );
      try
      {
        u.unit = HardUnit::parse( parse_unit_kind( tok[2] ), tok[3] );
      }
      catch ( Error const& e )
      {
        throw ParseError( e.what(), line_no );
      }
      circuit.units.push_back( u );
    }
    else if ( tok[0] == "wire" )
    {
      need( 4 );
      auto const colon = tok[3].rfind( ':' );
      if ( tok[2] != "->" || colon == std::string::npos )
        throw ParseError( "expected 'wire <src> -> <dst>:<port>'", line_no );
      circuit.wires.push_back( { parse_ref( tok[1], line_no ), parse_ref( tok[3].substr( 0, colon ), line_no ),
                                 parse_count( tok[3].substr( colon + 1 ), line_no ) } );
    }
    else if ( tok[0] == "output" )
    {
      need( 3 );
      auto const j = parse_count( tok[1], line_no );
      OutputBinding binding;
      if ( tok[2] == "const0" || tok[2] == "const1" )
        binding.constant = tok[2] == "const1";
      else
        binding.source = parse_ref( tok[2], line_no );
      if ( !outputs.emplace( j, binding ).second )
        throw ParseError( "output " + tok[1] + " listed twice", line_no );
    }
    else
    {
      throw ParseError( "unknown line kind '" + tok[0] + "'", line_no );
    }
  }
  if ( header < 4 )
    throw ParseError( "incomplete circuit header", line_no );
  for ( std::size_t j = 0; j < circuit.output_width; ++j )
  {
    auto it = outputs.find( j );
    if ( it == outputs.end() )
      throw ParseError( "output " + std::to_string( j ) + " is missing", 0 );
    circuit.outputs.push_back( it->second );
  }
  if ( outputs.size() != circuit.output_width )
    throw ParseError( "more outputs listed than declared", 0 );
  std::sort( circuit.units.begin(), circuit.units.end(),
             []( CircuitUnit const& a, CircuitUnit const& b ) { return a.id < b.id; } );
  std::sort( circuit.wires.begin(), circuit.wires.end(),
             []( Wire const& a, Wire const& b ) { return std::tie( a.destination, a.port ) < std::tie( b.destination, b.port ); } );
  try
  {
    check_circuit( circuit );
  }
  catch ( StructuralError const& e )
  {
    throw ParseError( e.what(), 0 );
  }
  return circuit;
}

namespace
{

std::string node_name( NodeRef ref )
{
  return ref.layer == 0 ? "in" + std::to_string( ref.index )
                        : "u" + std::to_string( ref.layer ) + "_" + std::to_string( ref.index );
}

} // namespace

std::string format_dot( ExtractedCircuit const& circuit )
{
  std::ostringstream os;
  os << "digraph circuit {\n";
  os << "  rankdir=LR;\n";
  os << "  node [fontname=\"Helvetica\"];\n";
  os << "  { rank=same;";
  for ( std::size_t i = 0; i < circuit.input_width; ++i )
    os << ' ' << node_name( { 0, i } ) << ';';
  os << " }\n";
  for ( std::size_t i = 0; i < circuit.input_width; ++i )
    os << "  " << node_name( { 0, i } ) << " [shape=circle, label=\"x" << i << "\"];\n";

  std::map<std::size_t, std::vector<NodeRef>> layers;
  for ( auto const& u : circuit.units )
    layers[u.id.layer].push_back( u.id );
  for ( auto const& [layer, ids] : layers )
  {
    os << "  { rank=same;";
    for ( auto const& id : ids )
      os << ' ' << node_name( id ) << ';';
    os << " }\n";
  }
  for ( auto const& u : circuit.units )
  {
    os << "  " << node_name( u.id ) << " [shape=box, label=\"" << to_string( u.id ) << "\\n"
       << to_string( u.unit.kind ) << ' ' << u.unit.config_string() << "\"];\n";
  }
  for ( auto const& w : circuit.wires )
  {
    os << "  " << node_name( w.source ) << " -> " << node_name( w.destination ) << " [headlabel=\"" << w.port
       << "\"];\n";
  }
  os << "  { rank=sink;";
  for ( std::size_t j = 0; j < circuit.outputs.size(); ++j )
    os << " out" << j << ';';
  os << " }\n";
  for ( std::size_t j = 0; j < circuit.outputs.size(); ++j )
  {
    auto const& o = circuit.outputs[j];
    os << "  out" << j << " [shape=doublecircle, label=\"y" << j;
    if ( o.constant )
      os << " = " << ( *o.constant ? 1 : 0 );
    os << "\"];\n";
    if ( !o.constant )
      os << "  " << node_name( o.source ) << " -> out" << j << ";\n";
  }
  os << "}\n";
  return os.str();
}

} // namespace softsynth
