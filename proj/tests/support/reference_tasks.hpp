#pragma once

// Second implementation of every task over strings and arbitrary-precision
// integers, independent of the library oracle. Bit strings are read most
// significant first; line j of a signal slice is the j-th character from the right.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

#include <softsynth/datasets.hpp>

namespace softsynth::testing
{

using boost::multiprecision::cpp_int;

inline cpp_int value_of( std::string const& bits )
{
  cpp_int v = 0;
  for ( char c : bits )
    v = v * 2 + ( c == '1' ? 1 : 0 );
  return v;
}

inline std::string bits_of( cpp_int v, std::size_t width )
{
  cpp_int const modulus = cpp_int( 1 ) << width;
  v %= modulus;
  if ( v < 0 )
    v += modulus;
  std::string out( width, '0' );
  for ( std::size_t i = 0; i < width; ++i )
  {
    if ( ( v & 1 ) != 0 )
      out[width - 1 - i] = '1';
    v >>= 1;
  }
  return out;
}

inline cpp_int signed_of( std::string const& bits )
{
  auto v = value_of( bits );
  if ( bits[0] == '1' )
    v -= cpp_int( 1 ) << bits.size();
  return v;
}

inline std::size_t log2_ceil( std::size_t w )
{
  std::size_t r = 0;
  while ( ( std::size_t{ 1 } << r ) < w )
    ++r;
  return r;
}

inline std::optional<std::string> reference( Task task, std::size_t w, std::string const& x )
{
  auto const a = x.substr( 0, std::min( w, x.size() ) );
  auto const b = x.size() >= 2 * w ? x.substr( w, w ) : std::string();
  switch ( task )
  {
  case Task::Not:
  {
    std::string out = x;
    for ( auto& c : out )
      c = c == '1' ? '0' : '1';
    return out;
  }
  case Task::And:
  case Task::Or:
  case Task::Xor:
  {
    std::string out( w, '0' );
    for ( std::size_t i = 0; i < w; ++i )
    {
      bool const p = a[i] == '1', q = b[i] == '1';
      bool const r = task == Task::And ? ( p && q ) : task == Task::Or ? ( p || q ) : ( p != q );
      out[i] = r ? '1' : '0';
    }
    return out;
  }
  case Task::Shl: return x.substr( 1 ) + "0";
  case Task::Shr: return "0" + x.substr( 0, w - 1 );
  case Task::Neg: return bits_of( -value_of( x ), w );
  case Task::Add: return bits_of( signed_of( a ) + signed_of( b ), w + 1 );
  case Task::Sub: return bits_of( signed_of( a ) - signed_of( b ), w + 1 );
  case Task::Mul: return bits_of( value_of( a ) * value_of( b ), 2 * w );
  case Task::Div:
  case Task::Rem:
    if ( value_of( b ) == 0 )
      return std::nullopt;
    return bits_of( task == Task::Div ? value_of( a ) / value_of( b ) : value_of( a ) % value_of( b ), w );
  case Task::Mux:
  {
    auto const line = static_cast<std::size_t>( value_of( x.substr( w ) ) );
    return std::string( 1, a[w - 1 - line] );
  }
  case Task::Demux:
  {
    std::string out( w, '0' );
    auto const line = static_cast<std::size_t>( value_of( x.substr( 1 ) ) );
    out[w - 1 - line] = x[0];
    return out;
  }
  case Task::Dec:
  {
    std::string out( w, '0' );
    out[w - 1 - static_cast<std::size_t>( value_of( x ) )] = '1';
    return out;
  }
  case Task::Enc:
  {
    auto const pos = x.find_last_of( '1' );
    if ( pos == std::string::npos )
      return std::nullopt;
    return bits_of( cpp_int( w - 1 - pos ), log2_ceil( w ) );
  }
  }
  return std::nullopt;
}

} // namespace softsynth::testing
