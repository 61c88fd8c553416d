#include <benchmark/benchmark.h>

#include <softsynth/datasets.hpp>
#include <softsynth/network.hpp>
#include <softsynth/trainer.hpp>

namespace
{

using namespace softsynth;

NetworkConfig lut_config( std::size_t width )
{
  NetworkConfig cfg;
  cfg.unit = UnitKind::Lut;
  cfg.input_width = 8;
  cfg.output_width = 5;
  cfg.widths = { width, width, width };
  return cfg;
}

void tape_backward( benchmark::State& state )
{
  auto const n = static_cast<std::size_t>( state.range( 0 ) );
  Tape tape;
  for ( auto _ : state )
  {
    tape.clear();
    std::vector<Value> xs;
    for ( std::size_t i = 0; i < n; ++i )
      xs.push_back( tape.variable( 0.001 * double( i ) ) );
    auto const probs = softmax( std::span<Value const>( xs ) );
    auto const loss = dot( std::span<Value const>( probs ), std::span<Value const>( xs ) );
    tape.backward( loss );
    benchmark::DoNotOptimize( xs[0].grad() );
  }
  state.SetItemsProcessed( state.iterations() * static_cast<std::int64_t>( n ) );
}
BENCHMARK( tape_backward )->Arg( 64 )->Arg( 1024 );

void soft_forward( benchmark::State& state )
{
  auto const net = SoftNetwork::build( lut_config( static_cast<std::size_t>( state.range( 0 ) ) ), 1 );
  auto const raw = net.parameter_values();
  std::vector<double> const x{ 1, 0, 1, 1, 0, 0, 1, 0 };
  std::vector<double> signals, outputs;
  for ( auto _ : state )
  {
    auto const realized = realize<double>( net, raw, false );
    evaluate<double>( net, realized, x, signals, outputs );
    benchmark::DoNotOptimize( outputs.data() );
  }
}
BENCHMARK( soft_forward )->Arg( 8 )->Arg( 40 );

void train_epoch( benchmark::State& state )
{
  auto const ds = generate_task( TaskSpec::make( Task::Add, 4 ) );
  TrainConfig cfg;
  cfg.max_epochs = 1;
  cfg.batch_size = 16;
  auto const net_cfg = network_config( { UnitKind::Lut, { static_cast<std::size_t>( state.range( 0 ) ), 8 } }, ds.spec,
                                       OutputMode::Hardwired );
  for ( auto _ : state )
  {
    state.PauseTiming();
    auto net = SoftNetwork::build( net_cfg, 1 );
    state.ResumeTiming();
    benchmark::DoNotOptimize( train( net, ds, cfg ) );
  }
}
BENCHMARK( train_epoch )->Arg( 8 )->Arg( 16 )->Unit( benchmark::kMillisecond );

} // namespace

BENCHMARK_MAIN();
