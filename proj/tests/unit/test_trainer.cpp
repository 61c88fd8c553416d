#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <random>

#include <softsynth/error.hpp>
#include <softsynth/trainer.hpp>

#include "builders.hpp"
#include "gradcheck.hpp"

using namespace softsynth;
using namespace softsynth::testing;

namespace
{

/// One layer of LUTs, each reading a single input on all four ports.
SoftNetwork single_input_luts( std::size_t width, std::vector<std::uint16_t> const& tables )
{
  NetworkConfig cfg;
  cfg.unit = UnitKind::Lut;
  cfg.input_width = width;
  cfg.output_width = width;
  cfg.widths = { width };
  auto net = SoftNetwork::build( cfg, 3 );
  for ( std::size_t m = 0; m < width; ++m )
  {
    for ( std::size_t p = 0; p < 4; ++p )
      wire( net, 1, m, p, { 0, m } );
    set_table( net, 1, m, tables[m] );
  }
  return net;
}

// Port 0 is the most significant table index, so entries 0..7 see port 0 low.
constexpr std::uint16_t lut_not = 0x00ff;
constexpr std::uint16_t lut_buf = 0xff00;

bool same_rows( GridRow const& a, GridRow const& b )
{
  return a.dataset == b.dataset && a.task == b.task && a.unit == b.unit && a.config_id == b.config_id &&
         a.train.signal == b.train.signal && a.train.example == b.train.example && a.full.signal == b.full.signal &&
         a.full.example == b.full.example && a.epochs == b.epochs && a.early_stopped == b.early_stopped &&
         a.max_residual_entropy == b.max_residual_entropy;
}

GridTask complete_task( Task task, std::size_t w = 2 )
{
  auto const ds = generate_task( TaskSpec::make( task, w ) );
  return { ds, ds };
}

} // namespace

TEST_CASE( "bce_loss examples" )
{
  auto const one = BitVector::parse( "1" );
  std::array<double, 1> const sure{ 1.0 - 1e-7 };
  CHECK( bce_loss( one, sure ) == doctest::Approx( 1e-7 ).epsilon( 1e-3 ) );
  std::array<double, 1> const exact{ 1.0 };
  CHECK( bce_loss( one, exact ) == doctest::Approx( -std::log1p( -1e-7 ) ) );
  std::array<double, 1> const half{ 0.5 };
  CHECK( bce_loss( one, half ) == doctest::Approx( std::log( 2.0 ) ).epsilon( 1e-15 ) );
  std::array<double, 2> const halves{ 0.5, 0.5 };
  CHECK( bce_loss( BitVector::parse( "10" ), halves ) == doctest::Approx( std::log( 2.0 ) ).epsilon( 1e-15 ) );
  std::array<double, 1> const wrong{ 0.0 };
  CHECK( bce_loss( one, wrong ) == doctest::Approx( -std::log( 1e-7 ) ) );
  CHECK_THROWS_AS( bce_loss( one, halves ), StructuralError );
}

TEST_CASE( "bce_loss gradient matches finite differences" )
{
  std::mt19937_64 gen( 41 );
  std::uniform_real_distribution<double> u( 0.05, 0.95 );
  double worst = 0.0;
  for ( int trial = 0; trial < 100; ++trial )
  {
    auto const truth = BitVector::from_uint( gen() & 7u, 3 );
    std::vector<double> p{ u( gen ), u( gen ), u( gen ) };
    Tape tape;
    std::vector<Value> v;
    for ( auto pi : p )
      v.push_back( tape.variable( pi ) );
    auto loss = bce_loss( truth, std::span<Value const>( v ) );
    CHECK( loss.data() == doctest::Approx( bce_loss( truth, std::span<double const>( p ) ) ).epsilon( 1e-14 ) );
    tape.backward( loss );
    std::vector<double> grad;
    for ( auto vi : v )
      grad.push_back( vi.grad() );
    auto const fd = numeric_gradient( [&]( std::span<double const> x ) { return bce_loss( truth, x ); }, p );
    worst = std::max( worst, max_relative_error( grad, fd ) );
  }
  CHECK( worst < 1e-4 );
}

TEST_CASE( "sharpening_loss" )
{
  CHECK( sharpening_loss( nand_xor() ) == doctest::Approx( 0.0 ).epsilon( 1e-12 ) );

  // A single uniform four-way choice: one AIG unit whose ports see two inputs
  // would give ln 2 twice, so use a LUT over four inputs with one port uniform.
  NetworkConfig cfg;
  cfg.unit = UnitKind::Lut;
  cfg.input_width = 4;
  cfg.output_width = 1;
  cfg.widths = { 1 };
  auto net = SoftNetwork::build( cfg, 1 );
  wire( net, 1, 0, 0, { 0, 0 }, 200.0 );
  wire( net, 1, 0, 1, { 0, 1 }, 200.0 );
  wire( net, 1, 0, 2, { 0, 2 }, 200.0 );
  wire( net, 1, 0, 3, { 0, 0 }, 0.0 );
  CHECK( sharpening_loss( net ) == doctest::Approx( std::log( 4.0 ) ).epsilon( 1e-12 ) );

  std::mt19937_64 gen( 43 );
  std::normal_distribution<double> n( 0.0, 5.0 );
  for ( int trial = 0; trial < 20; ++trial )
  {
    for ( auto& p : net.parameters() )
      p.value = n( gen );
    CHECK( sharpening_loss( net ) >= 0.0 );
  }
}

TEST_CASE( "total_loss follows the sharpening schedule" )
{
  auto net = SoftNetwork::build(
      network_config( { UnitKind::Lut, { 3 } }, TaskSpec::make( Task::Not, 2 ), OutputMode::Selector ), 5 );
  auto const truth = BitVector::parse( "10" );
  std::array<double, 2> const p{ 0.7, 0.4 };
  auto const bce = bce_loss( truth, p );
  auto const h = sharpening_loss( net );
  REQUIRE( h > 0.1 );
  TrainConfig cfg;
  CHECK( effective_sigma( cfg, 0 ) == 0.0 );
  CHECK( effective_sigma( cfg, 49 ) == 0.0 );
  CHECK( effective_sigma( cfg, 50 ) == 1.0 );
  CHECK( total_loss( truth, p, net, 0, cfg ) == bce );
  CHECK( total_loss( truth, p, net, 50, cfg ) == doctest::Approx( bce + h ).epsilon( 1e-15 ) );
  cfg.sigma = 0.0;
  for ( std::size_t epoch : { 0u, 50u, 99u } )
    CHECK( total_loss( truth, p, net, epoch, cfg ) == bce );
}

TEST_CASE( "accuracy metrics" )
{
  auto const not2 = generate_task( TaskSpec::make( Task::Not, 2 ) );
  SUBCASE( "perfect network" )
  {
    auto const net = single_input_luts( 2, { lut_not, lut_not } );
    auto const acc = accuracy( net, not2 );
    CHECK( acc.signal == 1.0 );
    CHECK( acc.example == 1.0 );
  }
  SUBCASE( "constant zero on NOT" )
  {
    auto const net = single_input_luts( 2, { 0, 0 } );
    CHECK( signal_accuracy( net, not2 ) == 0.5 );
    CHECK( example_accuracy( net, not2 ) == 0.25 );
  }
  SUBCASE( "three of four bits right on every example" )
  {
    auto const not4 = generate_task( TaskSpec::make( Task::Not, 4 ) );
    auto const net = single_input_luts( 4, { lut_not, lut_not, lut_not, lut_buf } );
    CHECK( signal_accuracy( net, not4 ) == 0.75 );
    CHECK( example_accuracy( net, not4 ) == 0.0 );
  }
  SUBCASE( "exactly one half reads as one" )
  {
    auto net = single_input_luts( 2, { 0, 0 } );
    for ( std::size_t m = 0; m < 2; ++m )
      for ( std::size_t i = 0; i < 16; ++i )
        net.parameters()[net.table_offset( 1, m ) + i].value = 0.0;
    auto ones = not2;
    for ( auto& ex : ones.examples )
      ex.output = BitVector::parse( "11" );
    CHECK( signal_accuracy( net, ones ) == 1.0 );
  }
}

TEST_CASE( "metrics are consistent and order invariant" )
{
  std::mt19937_64 gen( 47 );
  for ( auto task : { Task::Add, Task::Mux, Task::Enc } )
  {
    auto ds = generate_task( TaskSpec::make( task, 2 ) );
    for ( int trial = 0; trial < 10; ++trial )
    {
      auto const net = SoftNetwork::build(
          network_config( { UnitKind::Lut, { 4, 4 } }, ds.spec, OutputMode::Hardwired ), gen() );
      auto const a = accuracy( net, ds );
      CHECK( a.example <= a.signal );
      CHECK( a.signal >= 0.0 );
      CHECK( a.signal <= 1.0 );
      auto shuffled = ds;
      std::shuffle( shuffled.examples.begin(), shuffled.examples.end(), gen );
      auto const b = accuracy( net, shuffled );
      CHECK( a.signal == doctest::Approx( b.signal ).epsilon( 1e-15 ) );
      CHECK( a.example == doctest::Approx( b.example ).epsilon( 1e-15 ) );
    }
  }
}

TEST_CASE( "TrainConfig validation" )
{
  TrainConfig cfg;
  CHECK_NOTHROW( cfg.validate() );
  cfg.batch_size = 32;
  CHECK_THROWS_AS( cfg.validate(), ConfigError );
  CHECK_NOTHROW( cfg.validate( false ) );
  cfg = {};
  cfg.learning_rate = 0.6;
  CHECK_THROWS_AS( cfg.validate(), ConfigError );
  cfg = {};
  cfg.decay = 0.9;
  CHECK_THROWS_AS( cfg.validate(), ConfigError );
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS( cfg.validate( false ), ConfigError );
}

TEST_CASE( "default grid" )
{
  auto const grid = default_grid();
  REQUIRE( grid.size() == 20 );
  for ( auto const& cfg : grid )
    CHECK_NOTHROW( cfg.validate() );
  CHECK( grid[0].decay == 0.95 );
  CHECK( grid[0].learning_rate == 0.15 );
  CHECK( grid[0].batch_size == 4 );
  CHECK( grid[0].output_mode == OutputMode::Hardwired );
  CHECK( grid[1].output_mode == OutputMode::Selector );
  CHECK( grid[1].decay == 0.95 );
  CHECK( grid[2].decay == 1.0 );
  CHECK( grid[2].output_mode == OutputMode::Hardwired );
  CHECK( grid[4].learning_rate == 0.3 );
  CHECK( grid[8].learning_rate == 0.5 );
  CHECK( grid[11].batch_size == 4 );
  CHECK( grid[12].batch_size == 8 );
  CHECK( grid[19].batch_size == 8 );
  CHECK( grid[19].learning_rate == 0.3 );
  CHECK( grid[19].decay == 1.0 );
  CHECK( grid[19].output_mode == OutputMode::Selector );
  for ( std::size_t i = 0; i < grid.size(); ++i )
    for ( std::size_t j = i + 1; j < grid.size(); ++j )
      CHECK_FALSE( grid[i] == grid[j] );
  CHECK( default_grid( 5 ).size() == 5 );
  CHECK( default_grid( 100 ).size() == 36 );
}

TEST_CASE( "training learns NOT" )
{
  auto const task = complete_task( Task::Not );
  NetworkShape const shape{ UnitKind::Aig, { 4, 4 } };
  auto const grid = default_grid( 5, 11 );
  bool solved = false;
  for ( std::size_t i = 0; i < grid.size(); ++i )
  {
    auto const row = run_single( task, shape, grid[i], i );
    CHECK( row.epochs <= 100 );
    solved = solved || row.full.example == 1.0;
  }
  CHECK( solved );
}

TEST_CASE( "training is deterministic and follows the schedule" )
{
  auto const ds = generate_task( TaskSpec::make( Task::Xor, 2 ) );
  TrainConfig cfg;
  cfg.seed = 19;
  cfg.max_epochs = 60;
  cfg.stop_on_accuracy_only = false;
  auto const net_cfg = network_config( { UnitKind::Lut, { 4 } }, ds.spec, OutputMode::Selector );
  auto a = SoftNetwork::build( net_cfg, cfg.seed );
  auto b = SoftNetwork::build( net_cfg, cfg.seed );
  auto const ra = train( a, ds, cfg );
  auto const rb = train( b, ds, cfg );
  CHECK( ra == rb );
  CHECK( a.parameter_values() == b.parameter_values() );
  REQUIRE( ra.history.size() == ra.epochs );
  for ( std::size_t e = 0; e < std::min<std::size_t>( 50, ra.epochs ); ++e )
    CHECK( ra.history[e].entropy == 0.0 );
  for ( auto const& h : ra.history )
  {
    CHECK( h.entropy >= 0.0 );
    CHECK( h.bce >= 0.0 );
  }
  if ( ra.epochs > 50 )
    CHECK( ra.history[50].entropy > 0.0 );
  CHECK( ra.train.example <= ra.train.signal );
  CHECK( ra.max_residual_entropy >= 0.0 );
  CHECK( ra.min_choice_sharpness > 0.0 );
  CHECK( ra.min_choice_sharpness <= 1.0 );
}

TEST_CASE( "early stopping" )
{
  auto const ds = generate_task( TaskSpec::make( Task::Not, 2 ) );
  auto const net_cfg = network_config( { UnitKind::Lut, { 2 } }, ds.spec, OutputMode::Hardwired );
  TrainConfig cfg;
  cfg.seed = 2;
  cfg.stop_on_accuracy_only = true;
  auto quick = SoftNetwork::build( net_cfg, cfg.seed );
  auto const fast = train( quick, ds, cfg );
  REQUIRE( fast.train.example == 1.0 );
  CHECK( fast.early_stopped );
  CHECK( fast.epochs < 50 );

  // Without the flag, stopping waits for the sharpening phase.
  cfg.stop_on_accuracy_only = false;
  auto slow = SoftNetwork::build( net_cfg, cfg.seed );
  auto const sharp = train( slow, ds, cfg );
  CHECK( sharp.epochs > 50 );
  if ( sharp.early_stopped )
    CHECK( sharp.max_residual_entropy < cfg.stop_entropy );

  cfg.sigma = 0.0;
  auto plain = SoftNetwork::build( net_cfg, cfg.seed );
  auto const no_sigma = train( plain, ds, cfg );
  CHECK( no_sigma.early_stopped );
  CHECK( no_sigma.epochs == fast.epochs );
}

TEST_CASE( "training rejects mismatched data" )
{
  auto const ds = generate_task( TaskSpec::make( Task::Add, 2 ) );
  auto net = SoftNetwork::build(
      network_config( { UnitKind::Aig, { 4 } }, TaskSpec::make( Task::Not, 2 ), OutputMode::Hardwired ), 1 );
  CHECK_THROWS_AS( train( net, ds, TrainConfig{} ), ConfigError );
}

TEST_CASE( "loss decreases early for some configuration on every EC-2 task" )
{
  auto grid = default_grid( 4, 3 );
  for ( auto& cfg : grid )
    cfg.max_epochs = 11;
  NetworkShape const shape{ UnitKind::Lut, { 6, 6 } };
  for ( auto task : all_tasks() )
  {
    auto const ds = generate_task( TaskSpec::make( task, 2 ) );
    double best = 1e9;
    for ( auto cfg : grid )
    {
      cfg.stop_on_accuracy_only = false;
      cfg.sigma = 0.0;
      cfg.stop_entropy = -1.0;
      auto net = SoftNetwork::build( network_config( shape, ds.spec, cfg.output_mode ), cfg.seed );
      // sigma = 0 may stop early once the set is fit; a fitted set already has a lower loss.
      auto const r = train( net, ds, cfg );
      REQUIRE( r.history.size() >= 2 );
      auto const last = std::min<std::size_t>( 10, r.history.size() - 1 );
      best = std::min( best, r.history[last].total - r.history[0].total );
    }
    INFO( to_string( task ) );
    CHECK( best < 0.0 );
  }
}

TEST_CASE( "result rows" )
{
  GridRow row;
  row.dataset = "EC-2-90";
  row.task = "MUX";
  row.unit = UnitKind::Lab;
  row.config_id = 13;
  row.train = { 0.75, 0.5 };
  row.full = { 0.6875, 0.375 };
  row.epochs = 77;
  row.early_stopped = true;
  row.max_residual_entropy = 0.00123456789;
  auto const back = parse_row( format_row( row ) );
  CHECK( same_rows( back, row ) );
  CHECK( results_header() ==
         "dataset,task,unit,config_id,signal_acc_train,example_acc_train,signal_acc_full,example_acc_full,epochs,"
         "stopped_early,max_residual_entropy" );
  CHECK_THROWS_AS( parse_row( "EC-2-100,NOT,AIG" ), ParseError );
}

TEST_CASE( "aggregate takes the best per task then the mean" )
{
  auto make = []( std::string task, double s, double e ) {
    GridRow r;
    r.task = std::move( task );
    r.full = { s, e };
    return r;
  };
  auto const report = aggregate( { make( "NOT", 0.5, 0.25 ), make( "NOT", 1.0, 0.0 ), make( "AND", 0.75, 0.5 ),
                                   make( "AND", 0.25, 0.75 ) } );
  REQUIRE( report.per_task.size() == 2 );
  CHECK( report.per_task[0].task == "NOT" );
  CHECK( report.per_task[0].best.signal == 1.0 );
  CHECK( report.per_task[0].best.example == 0.25 );
  CHECK( report.per_task[1].best.example == 0.75 );
  CHECK( report.mean.signal == doctest::Approx( 0.875 ) );
  CHECK( report.mean.example == doctest::Approx( 0.5 ) );
  CHECK( aggregate( {} ).per_task.empty() );
}

TEST_CASE( "run_grid" )
{
  std::vector<GridTask> const tasks{ complete_task( Task::Not ), complete_task( Task::And ) };
  NetworkShape const shape{ UnitKind::Lut, { 4 } };
  auto cfg = default_grid( 1, 7 )[0];
  cfg.max_epochs = 30;
  std::vector<TrainConfig> const grid{ cfg, cfg, cfg };

  std::size_t callbacks = 0;
  GridOptions options;
  options.jobs = 2;
  std::mutex mutex;
  options.on_run = [&]( GridRow const&, SoftNetwork const& ) {
    std::lock_guard lock( mutex );
    ++callbacks;
  };
  auto const report = run_grid( tasks, shape, grid, options );
  REQUIRE( report.rows.size() == 6 );
  CHECK( callbacks == 6 );
  for ( std::size_t t = 0; t < 2; ++t )
  {
    auto const first = std::find_if( report.rows.begin(), report.rows.end(),
                                     [&]( GridRow const& r ) { return r.task == tasks[t].train.spec.name(); } );
    REQUIRE( first != report.rows.end() );
    for ( auto const& row : report.rows )
      if ( row.task == first->task )
        CHECK( same_rows( row, GridRow{ row.dataset, row.task, row.unit, row.config_id, row.config, first->train,
                                        first->full, first->epochs, first->early_stopped,
                                        first->max_residual_entropy } ) );
  }
  auto const serial = run_grid( tasks, shape, grid );
  for ( std::size_t i = 0; i < 6; ++i )
    CHECK( same_rows( serial.rows[i], report.rows[i] ) );
}

TEST_CASE( "induction reports both sets" )
{
  auto const full = generate_task( TaskSpec::make( Task::Or, 2 ) );
  GridTask const task{ drop_examples( full, 10, 5 ), full };
  auto cfg = default_grid( 1 )[0];
  cfg.max_epochs = 20;
  auto const row = run_single( task, { UnitKind::Lab, { 4 } }, cfg, 0 );
  CHECK( row.dataset == "EC-2-90" );
  CHECK( row.train.signal >= 0.0 );
  CHECK( row.full.signal >= 0.0 );
  // 15 seen + 1 held-out example.
  auto const held_out_bits = double( full.spec.output_width );
  auto const max_gap = held_out_bits / ( 16.0 * full.spec.output_width );
  CHECK( std::abs( row.full.signal - row.train.signal * 15.0 / 16.0 ) <= max_gap + 1e-12 );
}
