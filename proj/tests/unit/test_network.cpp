#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <softsynth/error.hpp>
#include <softsynth/network.hpp>

#include "builders.hpp"
#include "gradcheck.hpp"

using namespace softsynth;
using namespace softsynth::testing;

namespace
{

NetworkConfig make_config( UnitKind unit, std::size_t in, std::size_t out, std::vector<std::size_t> widths,
                           OutputMode mode = OutputMode::Hardwired )
{
  NetworkConfig cfg;
  cfg.unit = unit;
  cfg.input_width = in;
  cfg.output_width = out;
  cfg.widths = std::move( widths );
  cfg.output_mode = mode;
  return cfg;
}

std::vector<double> all_signals( SoftNetwork const& net, std::span<double const> x )
{
  auto const raw = net.parameter_values();
  auto const realized = realize<double>( net, raw, false );
  std::vector<double> signals, outputs;
  evaluate<double>( net, realized, x, signals, outputs );
  return signals;
}

std::vector<double> bits_of( unsigned value, std::size_t width )
{
  std::vector<double> out( width );
  for ( std::size_t i = 0; i < width; ++i )
    out[i] = double( ( value >> ( width - 1 - i ) ) & 1u );
  return out;
}

/// Reference wire: softmax over the block, then a weighted sum, in long double.
double reference_wire( std::span<double const> logits, std::span<double const> sources )
{
  long double const top = *std::max_element( logits.begin(), logits.end() );
  long double z = 0.0L, acc = 0.0L;
  for ( std::size_t i = 0; i < logits.size(); ++i )
  {
    auto const e = std::exp( static_cast<long double>( logits[i] ) - top );
    z += e;
    acc += e * sources[i];
  }
  return static_cast<double>( acc / z );
}

} // namespace

TEST_CASE( "build is deterministic per seed" )
{
  auto const cfg = make_config( UnitKind::Lut, 4, 2, { 5, 3 }, OutputMode::Selector );
  auto const a = SoftNetwork::build( cfg, 42 );
  auto const b = SoftNetwork::build( cfg, 42 );
  auto const c = SoftNetwork::build( cfg, 43 );
  CHECK( a.parameter_values() == b.parameter_values() );
  CHECK( a.parameter_values() != c.parameter_values() );
}

TEST_CASE( "initial parameter ranges" )
{
  auto const net = SoftNetwork::build( make_config( UnitKind::Lab, 3, 2, { 4, 4 } ), 7 );
  auto const values = net.parameter_values();
  for ( std::size_t k = 1; k <= 2; ++k )
    for ( std::size_t m = 0; m < 4; ++m )
    {
      auto const t = net.table_offset( k, m );
      for ( std::size_t i = 0; i < 16; ++i )
        CHECK( std::abs( values[t + i] ) <= 1.0 );
      auto const a = net.attention_offset( k, m );
      for ( std::size_t i = 0; i < 3; ++i )
        CHECK( std::abs( values[a + i] ) <= 0.1 );
      for ( std::size_t p = 0; p < 4; ++p )
      {
        auto const w = net.wiring_offset( k, m, p );
        for ( std::size_t i = 0; i < net.source_count( k ); ++i )
          CHECK( std::abs( values[w + i] ) <= 0.1 );
      }
    }
}

TEST_CASE( "wiring choices per unit match the arity" )
{
  for ( auto unit : { UnitKind::Aig, UnitKind::Lut, UnitKind::Lab } )
  {
    auto const net = SoftNetwork::build( make_config( unit, 3, 1, { 3, 2 } ), 1 );
    std::map<NodeRef, std::size_t> wiring;
    for ( auto const& c : net.choices() )
      if ( c.kind == ChoiceKind::Wiring )
        ++wiring[c.owner];
    CHECK( wiring.size() == 5 );
    for ( auto const& [owner, count] : wiring )
      CHECK( count == unit_arity( unit ) );
  }
}

TEST_CASE( "parameter count follows the shape formula" )
{
  // Four layers of 40 LUTs over a 16-bit input: each port of layer k sees
  // w_0 + ... + w_{k-1} sources.
  auto const cfg = make_config( UnitKind::Lut, 16, 8, { 40, 40, 40, 40 } );
  auto const net = SoftNetwork::build( cfg, 0 );
  std::size_t wiring = 0;
  for ( std::size_t k = 1; k <= 4; ++k )
    wiring += 40 * 4 * ( 16 + 40 * ( k - 1 ) );
  CHECK( net.parameter_count() == 40 * 16 * 4 + wiring );

  // Ragged widths, AIG, selector over every signal.
  auto const ragged = make_config( UnitKind::Aig, 3, 2, { 5, 1, 4 }, OutputMode::Selector );
  auto const r = SoftNetwork::build( ragged, 0 );
  CHECK( r.parameter_count() == 5 * 2 * 3 + 1 * 2 * 8 + 4 * 2 * 9 + 2 * 13 );
}

TEST_CASE( "hardwired outputs need a wide enough final layer" )
{
  CHECK_THROWS_AS( SoftNetwork::build( make_config( UnitKind::Lut, 4, 3, { 8, 2 } ), 0 ), ConfigError );
  CHECK_NOTHROW( SoftNetwork::build( make_config( UnitKind::Lut, 4, 3, { 8, 2 }, OutputMode::Selector ), 0 ) );
  CHECK_THROWS_AS( SoftNetwork::build( make_config( UnitKind::Lut, 4, 1, {} ), 0 ), ConfigError );
  CHECK_THROWS_AS( SoftNetwork::build( make_config( UnitKind::Lut, 4, 1, { 3, 0 } ), 0 ), ConfigError );
}

TEST_CASE( "wire_input examples" )
{
  SUBCASE( "single source passes through" )
  {
    auto const net = SoftNetwork::build( make_config( UnitKind::Aig, 1, 1, { 1 } ), 3 );
    std::array<double, 1> const prior{ 0.37 };
    CHECK( wire_input( net, 1, 0, 0, prior ) == doctest::Approx( 0.37 ).epsilon( 1e-15 ) );
  }
  SUBCASE( "uniform over 0 and 1" )
  {
    auto net = SoftNetwork::build( make_config( UnitKind::Aig, 2, 1, { 1 } ), 3 );
    wire( net, 1, 0, 0, { 0, 0 }, 0.0 );
    std::array<double, 2> const prior{ 0.0, 1.0 };
    CHECK( wire_input( net, 1, 0, 0, prior ) == doctest::Approx( 0.5 ).epsilon( 1e-15 ) );
  }
  SUBCASE( "three sources with logits 1, 2, 3" )
  {
    auto net = SoftNetwork::build( make_config( UnitKind::Aig, 3, 1, { 1 } ), 3 );
    auto const offset = net.wiring_offset( 1, 0, 1 );
    std::array<double, 3> const logits{ 1.0, 2.0, 3.0 };
    for ( std::size_t i = 0; i < 3; ++i )
      net.parameters()[offset + i].value = logits[i];
    std::array<double, 3> const prior{ 0.2, 0.4, 0.9 };
    auto const got = wire_input( net, 1, 0, 1, prior );
    CHECK( got == doctest::Approx( reference_wire( logits, prior ) ).epsilon( 1e-13 ) );
    CHECK( got == doctest::Approx( 0.7146 ).epsilon( 1e-4 ) );
  }
}

TEST_CASE( "wired inputs are convex combinations" )
{
  std::mt19937_64 gen( 11 );
  std::uniform_real_distribution<double> u( 0.0, 1.0 );
  auto net = SoftNetwork::build( make_config( UnitKind::Lut, 5, 2, { 4, 3, 2 } ), 11 );
  std::normal_distribution<double> n( 0.0, 3.0 );
  for ( auto& p : net.parameters() )
    p.value = n( gen );
  for ( int trial = 0; trial < 100; ++trial )
  {
    std::vector<double> x( 5 );
    for ( auto& xi : x )
      xi = u( gen );
    auto const signals = all_signals( net, x );
    for ( std::size_t k = 1; k <= 3; ++k )
    {
      std::span<double const> prior( signals.data(), net.source_count( k ) );
      auto const [lo, hi] = std::minmax_element( prior.begin(), prior.end() );
      for ( std::size_t m = 0; m < net.config().width( k ); ++m )
        for ( std::size_t p = 0; p < 4; ++p )
        {
          auto const w = wire_input( net, k, m, p, prior );
          CHECK( w >= *lo - 1e-12 );
          CHECK( w <= *hi + 1e-12 );
          auto const offset = net.wiring_offset( k, m, p );
          auto const values = net.parameter_values();
          std::span<double const> logits( values.data() + offset, prior.size() );
          CHECK( w == doctest::Approx( reference_wire( logits, prior ) ).epsilon( 1e-12 ) );
        }
    }
  }
}

TEST_CASE( "forward examples" )
{
  SUBCASE( "NAND of a bit with itself" )
  {
    auto net = SoftNetwork::build( make_config( UnitKind::Aig, 2, 1, { 1 } ), 5 );
    wire( net, 1, 0, 0, { 0, 0 } );
    wire( net, 1, 0, 1, { 0, 0 } );
    std::array<double, 2> const x{ 1.0, 0.0 };
    CHECK( net.forward( x )[0] == doctest::Approx( 0.0 ).epsilon( 1e-12 ) );
  }
  SUBCASE( "constant LUTs under uniform wiring ignore the input" )
  {
    auto net = SoftNetwork::build( make_config( UnitKind::Lut, 3, 2, { 3, 2 } ), 5 );
    for ( std::size_t k = 1; k <= 2; ++k )
      for ( std::size_t m = 0; m < net.config().width( k ); ++m )
      {
        set_table( net, k, m, 0xffff, 1.3 );
        for ( std::size_t p = 0; p < 4; ++p )
          wire( net, k, m, p, { 0, 0 }, 0.0 );
      }
    auto const base = net.forward( std::array<double, 3>{ 0.0, 0.0, 0.0 } );
    for ( unsigned v = 1; v < 8; ++v )
    {
      auto const out = net.forward( bits_of( v, 3 ) );
      for ( std::size_t j = 0; j < 2; ++j )
        CHECK( out[j] == doctest::Approx( base[j] ).epsilon( 1e-14 ) );
    }
  }
  SUBCASE( "NAND network computes XOR" )
  {
    auto const net = nand_xor();
    for ( unsigned v = 0; v < 4; ++v )
    {
      auto const x = bits_of( v, 2 );
      auto const expected = double( ( x[0] != x[1] ) );
      CHECK( net.forward( x )[0] == doctest::Approx( expected ).epsilon( 1e-12 ) );
    }
  }
  SUBCASE( "input width mismatch" )
  {
    auto const net = nand_xor();
    CHECK_THROWS_AS( net.forward( std::array<double, 3>{ 0.0, 1.0, 1.0 } ), StructuralError );
  }
}

TEST_CASE( "select_outputs" )
{
  SUBCASE( "hardwired takes the first units of the final layer" )
  {
    auto const net = SoftNetwork::build( make_config( UnitKind::Aig, 2, 2, { 3, 3 } ), 5 );
    std::vector<double> signals( net.signal_count() );
    std::iota( signals.begin(), signals.end(), 0.0 );
    for ( auto& s : signals )
      s /= 10.0;
    auto const out = select_outputs( net, signals );
    REQUIRE( out.size() == 2 );
    CHECK( out[0] == signals[5] );
    CHECK( out[1] == signals[6] );

    auto const full = SoftNetwork::build( make_config( UnitKind::Aig, 2, 3, { 3, 3 } ), 5 );
    auto const same = select_outputs( full, signals );
    CHECK( same == std::vector<double>( signals.begin() + 5, signals.end() ) );
  }
  SUBCASE( "sharp selector copies one signal" )
  {
    auto net = SoftNetwork::build( make_config( UnitKind::Aig, 2, 2, { 3, 3 }, OutputMode::Selector ), 5 );
    select( net, 0, { 1, 2 } );
    select( net, 1, { 0, 1 } );
    std::vector<double> const signals{ 0.1, 0.9, 0.3, 0.4, 0.8, 0.2, 0.6, 0.7 };
    auto const out = select_outputs( net, signals );
    CHECK( out[0] == doctest::Approx( 0.8 ).epsilon( 1e-12 ) );
    CHECK( out[1] == doctest::Approx( 0.9 ).epsilon( 1e-12 ) );
  }
  SUBCASE( "uniform selector over two signals" )
  {
    auto cfg = make_config( UnitKind::Aig, 1, 1, { 2 }, OutputMode::Selector );
    cfg.selector_last_layer_only = true;
    auto net = SoftNetwork::build( cfg, 5 );
    select( net, 0, { 1, 0 }, 0.0 );
    std::vector<double> const signals{ 0.3, 0.0, 1.0 };
    CHECK( select_outputs( net, signals )[0] == doctest::Approx( 0.5 ).epsilon( 1e-15 ) );
  }
}

TEST_CASE( "sharp networks give binary outputs" )
{
  std::mt19937_64 gen( 29 );
  for ( auto unit : { UnitKind::Aig, UnitKind::Lut, UnitKind::Lab } )
  {
    auto net = SoftNetwork::build( make_config( unit, 3, 2, { 4, 3 }, OutputMode::Selector ), 29 );
    std::uniform_int_distribution<int> table( 0, 0xffff );
    for ( auto const& c : net.choices() )
    {
      std::uniform_int_distribution<std::size_t> pick( 0, c.size - 1 );
      auto const chosen = pick( gen );
      for ( std::size_t i = 0; i < c.size; ++i )
        net.parameters()[c.offset + i].value = i == chosen ? 30.0 : 0.0;
    }
    if ( unit != UnitKind::Aig )
      for ( std::size_t k = 1; k <= 2; ++k )
        for ( std::size_t m = 0; m < net.config().width( k ); ++m )
          set_table( net, k, m, static_cast<std::uint16_t>( table( gen ) ), 30.0 );
    for ( unsigned v = 0; v < 8; ++v )
    {
      auto const out = net.forward( bits_of( v, 3 ) );
      for ( auto o : out )
        CHECK( std::min( o, 1.0 - o ) < 1e-6 );
    }
  }
}

TEST_CASE( "relabeling units within a layer leaves outputs unchanged" )
{
  std::mt19937_64 gen( 31 );
  std::normal_distribution<double> n( 0.0, 2.0 );
  for ( auto unit : { UnitKind::Aig, UnitKind::Lut, UnitKind::Lab } )
  {
    auto const cfg = make_config( unit, 3, 2, { 4, 3, 2 } );
    auto net = SoftNetwork::build( cfg, 31 );
    for ( auto& p : net.parameters() )
      p.value = n( gen );

    // Permute layer 1: new unit m is old unit perm[m].
    std::array<std::size_t, 4> const perm{ 2, 0, 3, 1 };
    auto moved = SoftNetwork::build( cfg, 0 );
    auto const old = net.parameter_values();
    auto dst = moved.parameters();
    auto const own = unit_parameter_count( unit );
    auto const arity = unit_arity( unit );
    for ( std::size_t k = 1; k <= 3; ++k )
      for ( std::size_t m = 0; m < cfg.width( k ); ++m )
      {
        auto const from_m = k == 1 ? perm[m] : m;
        for ( std::size_t i = 0; i < own; ++i )
          dst[moved.table_offset( k, m ) + i].value = old[net.table_offset( k, from_m ) + i];
        for ( std::size_t p = 0; p < arity; ++p )
          for ( std::size_t s = 0; s < net.source_count( k ); ++s )
          {
            auto ref = net.source_ref( s );
            // The signal now at (1, i) used to be (1, perm[i]).
            if ( ref.layer == 1 )
              ref.index = perm[ref.index];
            dst[moved.wiring_offset( k, m, p ) + s].value = old[net.wiring_offset( k, from_m, p ) + net.flat_index( ref )];
          }
      }
    for ( unsigned v = 0; v < 8; ++v )
    {
      auto const x = bits_of( v, 3 );
      auto const a = net.forward( x );
      auto const b = moved.forward( x );
      CHECK( a[0] == doctest::Approx( b[0] ).epsilon( 1e-12 ) );
      CHECK( a[1] == doctest::Approx( b[1] ).epsilon( 1e-12 ) );
    }
  }
}

TEST_CASE( "end-to-end gradients match finite differences" )
{
  std::mt19937_64 gen( 37 );
  std::normal_distribution<double> n( 0.0, 1.0 );
  std::uniform_real_distribution<double> u( 0.05, 0.95 );
  for ( auto unit : { UnitKind::Aig, UnitKind::Lut, UnitKind::Lab } )
  {
    auto net = SoftNetwork::build( make_config( unit, 3, 2, { 3, 2 }, OutputMode::Selector ), 37 );
    for ( auto& p : net.parameters() )
      p.value = n( gen );
    std::vector<double> const x{ u( gen ), u( gen ), u( gen ) };
    std::array<double, 2> const target{ 1.0, 0.0 };

    auto const loss_of = [&]( std::span<double const> raw ) {
      auto const realized = realize<double>( net, raw, true );
      std::vector<double> signals, outputs;
      evaluate<double>( net, realized, x, signals, outputs );
      double loss = 0.25 * realized.sharpening;
      for ( std::size_t j = 0; j < 2; ++j )
        loss -= target[j] * std::log( outputs[j] ) + ( 1.0 - target[j] ) * std::log( 1.0 - outputs[j] );
      return loss;
    };

    Tape tape;
    std::vector<Value> leaves;
    for ( auto& p : net.parameters() )
      leaves.push_back( tape.bind( p ) );
    std::vector<Value> xs;
    for ( auto xi : x )
      xs.push_back( tape.constant( xi ) );
    auto const realized = realize<Value>( net, leaves, true );
    std::vector<Value> signals, outputs;
    evaluate<Value>( net, realized, xs, signals, outputs );
    auto loss = 0.25 * realized.sharpening;
    for ( std::size_t j = 0; j < 2; ++j )
      loss = loss - ( target[j] * log( outputs[j] ) + ( 1.0 - target[j] ) * log( 1.0 - outputs[j] ) );
    CHECK( loss.data() == doctest::Approx( loss_of( net.parameter_values() ) ).epsilon( 1e-12 ) );
    tape.backward( loss );

    std::vector<double> grad;
    for ( auto const& p : net.parameters() )
      grad.push_back( p.grad );
    auto const fd = numeric_gradient( loss_of, net.parameter_values() );
    double worst_wiring = 0.0;
    for ( auto const& c : net.choices() )
      for ( std::size_t i = c.offset; i < c.offset + c.size; ++i )
        worst_wiring = std::max( worst_wiring, relative_error( grad[i], fd[i] ) );
    CHECK( worst_wiring < 1e-3 );
    CHECK( max_relative_error( grad, fd ) < 1e-3 );
  }
}

TEST_CASE( "summarize_choices" )
{
  auto net = nand_xor();
  for ( auto const& s : summarize_choices( net ) )
  {
    CHECK( s.max_prob > 0.999 );
    CHECK( s.entropy < 1e-10 );
  }
  wire( net, 2, 1, 0, { 0, 0 }, 0.0 );
  auto const summary = summarize_choices( net );
  auto const it = std::max_element( summary.begin(), summary.end(),
                                    []( auto const& a, auto const& b ) { return a.entropy < b.entropy; } );
  CHECK( it->entropy == doctest::Approx( std::log( 3.0 ) ) );
  CHECK( it->max_prob == doctest::Approx( 1.0 / 3.0 ) );
}

TEST_CASE( "parameter dump round-trip" )
{
  for ( auto mode : { OutputMode::Hardwired, OutputMode::Selector } )
  {
    auto cfg = make_config( UnitKind::Lab, 4, 2, { 3, 5, 2 }, mode );
    cfg.selector_last_layer_only = mode == OutputMode::Selector;
    auto const net = SoftNetwork::build( cfg, 77 );
    auto const text = dump_network( net, { { "task", "ADD" }, { "config", "3" } } );
    auto const back = network_from_dump( text );
    CHECK( back.config() == net.config() );
    CHECK( back.parameter_values() == net.parameter_values() );
    auto const meta = dump_metadata( text );
    CHECK( meta.at( "task" ) == "ADD" );
    CHECK( meta.at( "config" ) == "3" );
  }
  CHECK_THROWS_AS( network_from_dump( "{" ), ParseError );
  CHECK_THROWS_AS( network_from_dump( R"({"format": "other"})" ), ParseError );
}

TEST_CASE( "parameter names" )
{
  auto const net = SoftNetwork::build( make_config( UnitKind::Lab, 2, 1, { 2 }, OutputMode::Selector ), 1 );
  CHECK( net.parameter_name( net.table_offset( 1, 1 ) + 7 ).find( "table[1.1]" ) != std::string::npos );
  CHECK( net.parameter_name( net.wiring_offset( 1, 0, 2 ) + 1 ).find( "wiring[1.0.2]" ) != std::string::npos );
  CHECK( net.parameter_name( net.selector_offset( 0 ) ).find( "selector" ) != std::string::npos );
}
