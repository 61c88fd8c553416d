#include "softsynth/datasets.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "softsynth/error.hpp"
#include "softsynth/rng.hpp"

namespace softsynth
{

BitVector BitVector::from_uint( std::uint64_t value, std::size_t width )
{
  std::vector<bool> bits( width );
  for ( std::size_t i = 0; i < width; ++i )
  {
    bits[width - 1 - i] = ( value >> i ) & 1u;
  }
  return BitVector( std::move( bits ) );
}

BitVector BitVector::parse( std::string_view text )
{
  if ( text.empty() )
  {
    throw ParseError( "empty bit string", 0 );
  }
  std::vector<bool> bits;
  bits.reserve( text.size() );
  for ( auto c : text )
  {
    if ( c != '0' && c != '1' )
    {
      throw ParseError( "invalid bit string '" + std::string( text ) + "'", 0 );
    }
    bits.push_back( c == '1' );
  }
  return BitVector( std::move( bits ) );
}

std::uint64_t BitVector::slice( std::size_t begin, std::size_t width ) const
{
  if ( begin + width > size() || width > 64 )
  {
    throw StructuralError( "BitVector::slice out of range" );
  }
  std::uint64_t value = 0;
  for ( std::size_t i = begin; i < begin + width; ++i )
  {
    value = ( value << 1 ) | std::uint64_t( bits_[i] );
  }
  return value;
}

std::string BitVector::str() const
{
  std::string out( size(), '0' );
  for ( std::size_t i = 0; i < size(); ++i )
  {
    out[i] = bits_[i] ? '1' : '0';
  }
  return out;
}

std::vector<double> BitVector::as_reals() const { return { bits_.begin(), bits_.end() }; }

namespace
{

constexpr std::array<Task, 16> task_list{ Task::Not, Task::And, Task::Or,  Task::Xor, Task::Shl,   Task::Shr,
                                          Task::Neg, Task::Add, Task::Sub, Task::Mul, Task::Div,   Task::Rem,
                                          Task::Mux, Task::Demux, Task::Dec, Task::Enc };

constexpr std::array<std::string_view, 16> task_names{ "NOT", "AND", "OR",  "XOR", "SHL",   "SHR", "NEG", "ADD",
                                                       "SUB", "MUL", "DIV", "REM", "MUX", "DEMUX", "DEC", "ENC" };

std::size_t floor_log2( std::size_t w ) { return static_cast<std::size_t>( std::bit_width( w ) ) - 1; }

std::size_t ceil_log2( std::size_t w ) { return w <= 1 ? 0 : static_cast<std::size_t>( std::bit_width( w - 1 ) ); }

std::uint64_t mask( std::size_t width ) { return width >= 64 ? ~0ull : ( 1ull << width ) - 1; }

/// Two's-complement value of a `width`-bit pattern.
std::int64_t to_signed( std::uint64_t bits, std::size_t width )
{
  auto const sign = 1ull << ( width - 1 );
  return ( bits & sign ) ? static_cast<std::int64_t>( bits ) - static_cast<std::int64_t>( sign << 1 )
                         : static_cast<std::int64_t>( bits );
}

/// Line j sits at display position width-1-j, so line 0 is the rightmost bit.
bool line( BitVector const& x, std::size_t begin, std::size_t width, std::size_t j )
{
  return x[begin + width - 1 - j];
}

} // namespace

std::span<Task const> all_tasks() { return task_list; }

std::string_view to_string( Task task ) { return task_names[static_cast<std::size_t>( task )]; }

Task parse_task( std::string_view name )
{
  for ( std::size_t i = 0; i < task_names.size(); ++i )
  {
    if ( task_names[i] == name )
    {
      return task_list[i];
    }
  }
  throw ConfigError( "unknown task '" + std::string( name ) + "'" );
}

TaskSpec TaskSpec::make( Task task, std::size_t w )
{
  if ( w < 2 )
  {
    throw ConfigError( "task width must be at least 2" );
  }
  TaskSpec spec{ task, w, 0, 0 };
  switch ( task )
  {
  case Task::Not:
  case Task::Shl:
  case Task::Shr:
  case Task::Neg:
    spec.input_width = w;
    spec.output_width = w;
    break;
  case Task::And:
  case Task::Or:
  case Task::Xor:
  case Task::Div:
  case Task::Rem:
    spec.input_width = 2 * w;
    spec.output_width = w;
    break;
  case Task::Add:
  case Task::Sub:
    spec.input_width = 2 * w;
    spec.output_width = w + 1;
    break;
  case Task::Mul:
    spec.input_width = 2 * w;
    spec.output_width = 2 * w;
    break;
  case Task::Mux:
    spec.input_width = w + floor_log2( w );
    spec.output_width = 1;
    break;
  case Task::Demux:
    spec.input_width = 1 + floor_log2( w );
    spec.output_width = w;
    break;
  case Task::Dec:
    spec.input_width = floor_log2( w );
    spec.output_width = w;
    break;
  case Task::Enc:
    spec.input_width = w;
    spec.output_width = ceil_log2( w );
    break;
  }
  if ( spec.input_width > 62 )
  {
    throw ConfigError( "task width too large" );
  }
  return spec;
}

std::optional<BitVector> task_oracle( TaskSpec const& spec, BitVector const& x )
{
  if ( x.size() != spec.input_width )
  {
    throw StructuralError( spec.name() + ": expected " + std::to_string( spec.input_width ) + " input bits, got " +
                           std::to_string( x.size() ) );
  }
  auto const w = spec.width;
  auto const out = [&]( std::uint64_t value ) { return BitVector::from_uint( value & mask( spec.output_width ), spec.output_width ); };
  auto const a = [&] { return x.slice( 0, w ); };
  auto const b = [&] { return x.slice( w, w ); };
  switch ( spec.task )
  {
  case Task::Not: return out( ~x.to_uint() );
  case Task::And: return out( a() & b() );
  case Task::Or: return out( a() | b() );
  case Task::Xor: return out( a() ^ b() );
  case Task::Shl: return out( x.to_uint() << 1 );
  case Task::Shr: return out( x.to_uint() >> 1 );
  case Task::Neg: return out( ~x.to_uint() + 1 );
  case Task::Add: return out( static_cast<std::uint64_t>( to_signed( a(), w ) + to_signed( b(), w ) ) );
  case Task::Sub: return out( static_cast<std::uint64_t>( to_signed( a(), w ) - to_signed( b(), w ) ) );
  case Task::Mul: return out( a() * b() );
  case Task::Div:
  case Task::Rem:
  {
    auto const divisor = b();
    if ( divisor == 0 )
    {
      return std::nullopt;
    }
    return out( spec.task == Task::Div ? a() / divisor : a() % divisor );
  }
  case Task::Mux:
  {
    auto const selected = x.slice( w, floor_log2( w ) );
    return out( line( x, 0, w, selected ) ? 1 : 0 );
  }
  case Task::Demux:
  {
    auto const selected = x.slice( 1, floor_log2( w ) );
    return out( x[0] ? ( 1ull << selected ) : 0 );
  }
  case Task::Dec: return out( 1ull << x.to_uint() );
  case Task::Enc:
    for ( std::size_t j = 0; j < w; ++j )
    {
      if ( line( x, 0, w, j ) )
      {
        return out( j );
      }
    }
    return std::nullopt;
  }
  return std::nullopt;
}

TaskDataset generate_task( TaskSpec const& spec )
{
  TaskDataset dataset;
  dataset.spec = spec;
  auto const count = 1ull << spec.input_width;
  for ( std::uint64_t value = 0; value < count; ++value )
  {
    auto input = BitVector::from_uint( value, spec.input_width );
    if ( auto output = task_oracle( spec, input ) )
    {
      dataset.examples.push_back( { std::move( input ), std::move( *output ) } );
    }
  }
  return dataset;
}

std::size_t dropout_count( std::size_t n, int percent )
{
  auto const exact = static_cast<double>( percent ) * static_cast<double>( n ) / 100.0;
  return std::max<std::size_t>( 1, static_cast<std::size_t>( std::llround( exact ) ) );
}

TaskDataset drop_examples( TaskDataset const& full, int percent, std::uint64_t seed )
{
  if ( full.completeness != 100 )
  {
    throw ConfigError( "drop_examples: source dataset must be complete" );
  }
  if ( percent != 5 && percent != 10 )
  {
    throw ConfigError( "drop_examples: percent must be 5 or 10" );
  }
  auto const n = full.size();
  if ( n <= 1 )
  {
    throw ConfigError( "drop_examples: " + full.spec.name() + " has too few examples to drop any" );
  }
  auto const removed = dropout_count( n, percent );
  std::vector<std::size_t> order( n );
  for ( std::size_t i = 0; i < n; ++i )
  {
    order[i] = i;
  }
  // Partial Fisher-Yates: the first `removed` slots are a uniform sample without replacement.
  auto rng = Rng::derived( seed, 0x64726f70 );
  for ( std::size_t i = 0; i < removed; ++i )
  {
    std::swap( order[i], order[i + rng.index( n - i )] );
  }
  std::vector<bool> drop( n, false );
  for ( std::size_t i = 0; i < removed; ++i )
  {
    drop[order[i]] = true;
  }
  TaskDataset out;
  out.spec = full.spec;
  out.completeness = 100 - percent;
  out.dropout_seed = seed;
  for ( std::size_t i = 0; i < n; ++i )
  {
    if ( !drop[i] )
    {
      out.examples.push_back( full.examples[i] );
    }
  }
  return out;
}

std::string dataset_label( std::size_t width, int completeness )
{
  return "EC-" + std::to_string( width ) + "-" + std::to_string( completeness );
}

std::filesystem::path dataset_path( std::filesystem::path const& root, std::size_t width, int completeness, Task task )
{
  return root / dataset_label( width, completeness ) / ( std::string( to_string( task ) ) + ".examples" );
}

std::string format_dataset( TaskDataset const& dataset )
{
  std::ostringstream os;
  os << "task " << dataset.spec.name() << '\n';
  os << "width " << dataset.spec.width << '\n';
  os << "inputs " << dataset.spec.input_width << '\n';
  os << "outputs " << dataset.spec.output_width << '\n';
  os << "completeness " << dataset.completeness << '\n';
  os << "seed " << ( dataset.dropout_seed ? std::to_string( *dataset.dropout_seed ) : std::string( "none" ) ) << '\n';
  os << "examples " << dataset.size() << '\n';
  for ( auto const& ex : dataset.examples )
  {
    os << ex.input.str() << ' ' << ex.output.str() << '\n';
  }
  return os.str();
}

namespace
{

std::string expect_header( std::istringstream& in, std::size_t& line_no, std::string_view key )
{
  std::string line;
  if ( !std::getline( in, line ) )
  {
    throw ParseError( "missing header field '" + std::string( key ) + "'", line_no + 1 );
  }
  ++line_no;
  std::istringstream fields( line );
  std::string name, value, extra;
  if ( !( fields >> name >> value ) || name != key || ( fields >> extra ) )
  {
    throw ParseError( "expected '" + std::string( key ) + " <value>', got '" + line + "'", line_no );
  }
  return value;
}

std::uint64_t parse_number( std::string const& text, std::size_t line_no )
{
  std::uint64_t value = 0;
  std::size_t used = 0;
  try
  {
    value = std::stoull( text, &used );
  }
  catch ( std::exception const& )
  {
    used = 0;
  }
  if ( used == 0 || used != text.size() )
  {
    throw ParseError( "expected a number, got '" + text + "'", line_no );
  }
  return value;
}

} // namespace

TaskDataset parse_dataset( std::string_view text )
{
  std::istringstream in{ std::string( text ) };
  std::size_t line_no = 0;
  TaskDataset dataset;
  Task task;
  try
  {
    task = parse_task( expect_header( in, line_no, "task" ) );
  }
  catch ( ConfigError const& e )
  {
    throw ParseError( e.what(), line_no );
  }
  auto const width = parse_number( expect_header( in, line_no, "width" ), line_no );
  try
  {
    dataset.spec = TaskSpec::make( task, width );
  }
  catch ( ConfigError const& e )
  {
    throw ParseError( e.what(), line_no );
  }
  if ( parse_number( expect_header( in, line_no, "inputs" ), line_no ) != dataset.spec.input_width )
  {
    throw ParseError( "input width does not match task " + dataset.spec.name(), line_no );
  }
  if ( parse_number( expect_header( in, line_no, "outputs" ), line_no ) != dataset.spec.output_width )
  {
    throw ParseError( "output width does not match task " + dataset.spec.name(), line_no );
  }
  auto const completeness = parse_number( expect_header( in, line_no, "completeness" ), line_no );
  if ( completeness != 100 && completeness != 95 && completeness != 90 )
  {
    throw ParseError( "completeness must be 100, 95 or 90", line_no );
  }
  dataset.completeness = static_cast<int>( completeness );
  auto const seed = expect_header( in, line_no, "seed" );
  if ( seed != "none" )
  {
    dataset.dropout_seed = parse_number( seed, line_no );
  }
  auto const count = parse_number( expect_header( in, line_no, "examples" ), line_no );
  std::string line;
  while ( std::getline( in, line ) )
  {
    ++line_no;
    if ( line.empty() )
    {
      continue;
    }
    std::istringstream fields( line );
    std::string input, output, extra;
    if ( !( fields >> input >> output ) || ( fields >> extra ) )
    {
      throw ParseError( "expected '<input bits> <output bits>', got '" + line + "'", line_no );
    }
    Example ex;
    try
    {
      ex.input = BitVector::parse( input );
      ex.output = BitVector::parse( output );
    }
    catch ( ParseError const& e )
    {
      throw ParseError( e.message(), line_no );
    }
    if ( ex.input.size() != dataset.spec.input_width || ex.output.size() != dataset.spec.output_width )
    {
      throw ParseError( "example widths do not match the header", line_no );
    }
    dataset.examples.push_back( std::move( ex ) );
  }
  if ( dataset.examples.size() != count )
  {
    throw ParseError( "header announces " + std::to_string( count ) + " examples, found " +
                          std::to_string( dataset.examples.size() ),
                      line_no );
  }
  return dataset;
}

void save_dataset( TaskDataset const& dataset, std::filesystem::path const& path )
{
  std::error_code ec;
  if ( path.has_parent_path() )
  {
    std::filesystem::create_directories( path.parent_path(), ec );
  }
  std::ofstream out( path );
  if ( !out )
  {
    throw IoError( "cannot write " + path.string() );
  }
  out << format_dataset( dataset );
  if ( !out )
  {
    throw IoError( "failed writing " + path.string() );
  }
}

TaskDataset load_dataset( std::filesystem::path const& path )
{
  std::ifstream in( path );
  if ( !in )
  {
    throw IoError( "cannot read " + path.string() );
  }
  std::ostringstream text;
  text << in.rdbuf();
  try
  {
    return parse_dataset( text.str() );
  }
  catch ( ParseError const& e )
  {
    throw ParseError( e.message(), e.line(), path.string() );
  }
}

std::vector<TaskDataset> generate_family( std::size_t width, int completeness, std::uint64_t seed )
{
  if ( completeness != 100 && completeness != 95 && completeness != 90 )
  {
    throw ConfigError( "completeness must be 100, 95 or 90" );
  }
  std::vector<TaskDataset> family;
  for ( auto task : all_tasks() )
  {
    auto full = generate_task( TaskSpec::make( task, width ) );
    family.push_back( completeness == 100 ? std::move( full ) : drop_examples( full, 100 - completeness, seed ) );
  }
  return family;
}

} // namespace softsynth
