#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <utility>

namespace softsynth
{

/// Seeded generator whose derived draws are identical on every platform.
///
/// The standard distributions are implementation-defined, so uniform reals and
/// bounded integers are derived from the raw 64-bit engine output here.
class Rng
{
public:
  explicit Rng( std::uint64_t seed ) : engine_( seed ) {}

  /// Independent stream for a (seed, purpose) pair.
  static Rng derived( std::uint64_t seed, std::uint64_t stream )
  {
    return Rng( mix( seed ^ mix( stream + 0x9e3779b97f4a7c15ull ) ) );
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform01() { return static_cast<double>( next() >> 11 ) * 0x1.0p-53; }

  double uniform( double lo, double hi ) { return lo + ( hi - lo ) * uniform01(); }

  /// Uniform integer in [0, n), rejection-sampled; n must be positive.
  std::size_t index( std::size_t n )
  {
    auto const bound = static_cast<std::uint64_t>( n );
    auto const limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw;
    do
    {
      draw = next();
    } while ( draw >= limit );
    return static_cast<std::size_t>( draw % bound );
  }

  /// Fisher-Yates.
  template<typename T>
  void shuffle( std::span<T> items )
  {
    for ( std::size_t i = items.size(); i > 1; --i )
    {
      std::swap( items[i - 1], items[index( i )] );
    }
  }

  static std::uint64_t mix( std::uint64_t x )
  {
    x += 0x9e3779b97f4a7c15ull;
    x = ( x ^ ( x >> 30 ) ) * 0xbf58476d1ce4e5b9ull;
    x = ( x ^ ( x >> 27 ) ) * 0x94d049bb133111ebull;
    return x ^ ( x >> 31 );
  }

private:
  std::mt19937_64 engine_;
};

} // namespace softsynth
