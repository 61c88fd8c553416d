#include "softsynth/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "softsynth/error.hpp"
#include "softsynth/rng.hpp"

namespace softsynth
{

namespace
{

constexpr double prediction_floor = 1e-7;

} // namespace

void TrainConfig::validate( bool strict_ranges ) const
{
  if ( batch_size == 0 )
    throw ConfigError( "train config: batch size must be positive" );
  if ( !( learning_rate > 0.0 ) )
    throw ConfigError( "train config: learning rate must be positive" );
  if ( !( decay > 0.0 && decay <= 1.0 ) )
    throw ConfigError( "train config: decay must lie in (0, 1]" );
  if ( !( sigma >= 0.0 ) )
    throw ConfigError( "train config: sigma must be nonnegative" );
  if ( !( tau > 0.0 && tau < 1.0 ) )
    throw ConfigError( "train config: tau must lie in (0, 1)" );
  if ( !strict_ranges )
    return;
  if ( batch_size < 4 || batch_size > 16 )
    throw ConfigError( "train config: batch size must lie in [4, 16]" );
  if ( !( learning_rate > 0.1 && learning_rate < 0.6 ) )
    throw ConfigError( "train config: learning rate must lie in (0.1, 0.6)" );
  if ( !( decay > 0.9 ) )
    throw ConfigError( "train config: decay must lie in (0.9, 1]" );
}

double bce_loss( BitVector const& truth, std::span<double const> predictions )
{
  if ( truth.size() != predictions.size() || truth.size() == 0 )
  {
    throw StructuralError( "bce_loss: " + std::to_string( truth.size() ) + " targets vs " +
                           std::to_string( predictions.size() ) + " predictions" );
  }
  double total = 0.0;
  for ( std::size_t i = 0; i < predictions.size(); ++i )
  {
    auto const p = clamp( predictions[i], prediction_floor, 1.0 - prediction_floor );
    total -= truth[i] ? std::log( p ) : std::log( 1.0 - p );
  }
  return total / static_cast<double>( predictions.size() );
}

Value bce_loss( BitVector const& truth, std::span<Value const> predictions )
{
  if ( truth.size() != predictions.size() || truth.size() == 0 )
  {
    throw StructuralError( "bce_loss: " + std::to_string( truth.size() ) + " targets vs " +
                           std::to_string( predictions.size() ) + " predictions" );
  }
  std::vector<Value> terms;
  terms.reserve( predictions.size() );
  for ( std::size_t i = 0; i < predictions.size(); ++i )
  {
    auto const p = clamp( predictions[i], prediction_floor, 1.0 - prediction_floor );
    terms.push_back( truth[i] ? log( p ) : log( 1.0 - p ) );
  }
  return sum( terms ) * ( -1.0 / static_cast<double>( predictions.size() ) );
}

double sharpening_loss( SoftNetwork const& net )
{
  double total = 0.0;
  for ( auto const& s : summarize_choices( net ) )
  {
    total += s.entropy;
  }
  return total;
}

double effective_sigma( TrainConfig const& config, std::size_t epoch )
{
  return epoch < config.sigma_start_epoch ? 0.0 : config.sigma;
}

double total_loss( BitVector const& truth, std::span<double const> predictions, SoftNetwork const& net,
                   std::size_t epoch, TrainConfig const& config )
{
  auto const sigma = effective_sigma( config, epoch );
  auto const bce = bce_loss( truth, predictions );
  return sigma == 0.0 ? bce : bce + sigma * sharpening_loss( net );
}

Accuracy accuracy( SoftNetwork const& net, TaskDataset const& dataset )
{
  auto const& cfg = net.config();
  if ( dataset.spec.input_width != cfg.input_width || dataset.spec.output_width != cfg.output_width )
  {
    throw StructuralError( "accuracy: dataset " + dataset.spec.name() + " widths do not match the network" );
  }
  if ( dataset.examples.empty() )
  {
    return {};
  }
  auto const raw = net.parameter_values();
  auto const realized = realize<double>( net, raw, false );
  std::vector<double> signals, outputs;
  std::size_t bits_right = 0;
  std::size_t examples_right = 0;
  for ( auto const& ex : dataset.examples )
  {
    auto const x = ex.input.as_reals();
    evaluate<double>( net, realized, x, signals, outputs );
    bool all = true;
    for ( std::size_t j = 0; j < outputs.size(); ++j )
    {
      bool const right = ( outputs[j] >= 0.5 ) == ex.output[j];
      bits_right += right;
      all = all && right;
    }
    examples_right += all;
  }
  auto const n = static_cast<double>( dataset.size() );
  return { static_cast<double>( bits_right ) / ( n * static_cast<double>( cfg.output_width ) ),
           static_cast<double>( examples_right ) / n };
}

double signal_accuracy( SoftNetwork const& net, TaskDataset const& dataset ) { return accuracy( net, dataset ).signal; }

double example_accuracy( SoftNetwork const& net, TaskDataset const& dataset ) { return accuracy( net, dataset ).example; }

RunResult train( SoftNetwork& net, TaskDataset const& dataset, TrainConfig const& config )
{
  config.validate( false );
  auto const& cfg = net.config();
  if ( dataset.spec.input_width != cfg.input_width || dataset.spec.output_width != cfg.output_width )
  {
    throw ConfigError( "train: task " + dataset.spec.name() + " is " + std::to_string( dataset.spec.input_width ) +
                       "->" + std::to_string( dataset.spec.output_width ) + " but the network is " +
                       std::to_string( cfg.input_width ) + "->" + std::to_string( cfg.output_width ) );
  }
  if ( dataset.examples.empty() )
  {
    throw ConfigError( "train: dataset " + dataset.spec.name() + " has no examples" );
  }

  RunResult result;
  auto shuffler = Rng::derived( config.seed, 0x73687566 );
  std::vector<std::size_t> order( dataset.size() );
  std::iota( order.begin(), order.end(), std::size_t{ 0 } );
  std::vector<std::vector<double>> inputs;
  for ( auto const& ex : dataset.examples )
  {
    inputs.push_back( ex.input.as_reals() );
  }

  Tape tape;
  std::vector<Value> leaves;
  std::vector<Value> x;
  std::vector<Value> signals, outputs;
  std::vector<Value> per_example;
  auto const params = net.parameters();
  auto const name_of = [&net]( std::size_t i ) { return net.parameter_name( i ); };

  for ( std::size_t epoch = 0; epoch < config.max_epochs; ++epoch )
  {
    auto const lr = decayed_lr( config.learning_rate, config.decay, epoch );
    auto const sigma = effective_sigma( config, epoch );
    shuffler.shuffle( std::span<std::size_t>( order ) );
    EpochLosses epoch_losses;
    std::size_t batches = 0;
    for ( std::size_t begin = 0; begin < order.size(); begin += config.batch_size )
    {
      auto const end = std::min( order.size(), begin + config.batch_size );
      tape.clear();
      leaves.clear();
      for ( auto& p : params )
      {
        leaves.push_back( tape.bind( p ) );
      }
      auto const realized = realize<Value>( net, leaves, sigma > 0.0 );
      per_example.clear();
      for ( auto i = begin; i < end; ++i )
      {
        x.clear();
        for ( auto bit : inputs[order[i]] )
        {
          x.push_back( tape.constant( bit ) );
        }
        evaluate<Value>( net, realized, x, signals, outputs );
        per_example.push_back( bce_loss( dataset.examples[order[i]].output, outputs ) );
      }
      auto const bce = sum( per_example ) / static_cast<double>( end - begin );
      auto const loss = sigma > 0.0 ? bce + sigma * realized.sharpening : bce;
      if ( !std::isfinite( loss.data() ) )
      {
        throw NumericalError( "train: non-finite loss on task " + dataset.spec.name() + " at epoch " +
                              std::to_string( epoch ) + ", batch starting at " + std::to_string( begin ) );
      }
      tape.backward( loss );
      adam_step( params, lr, {}, name_of );
      epoch_losses.total += loss.data();
      epoch_losses.bce += bce.data();
      epoch_losses.entropy += loss.data() - bce.data();
      ++batches;
    }
    epoch_losses.total /= static_cast<double>( batches );
    epoch_losses.bce /= static_cast<double>( batches );
    epoch_losses.entropy /= static_cast<double>( batches );
    result.history.push_back( epoch_losses );
    result.epochs = epoch + 1;

    if ( accuracy( net, dataset ).example < 1.0 )
    {
      continue;
    }
    bool stop = config.stop_on_accuracy_only || config.sigma == 0.0;
    if ( !stop && sigma > 0.0 )
    {
      auto const summary = summarize_choices( net );
      stop = std::all_of( summary.begin(), summary.end(),
                          [&]( ChoiceSummary const& s ) { return s.entropy < config.stop_entropy; } );
    }
    if ( stop )
    {
      result.early_stopped = result.epochs < config.max_epochs;
      break;
    }
  }

  result.train = accuracy( net, dataset );
  result.min_choice_sharpness = 1.0;
  for ( auto const& s : summarize_choices( net ) )
  {
    result.max_residual_entropy = std::max( result.max_residual_entropy, s.entropy );
    result.min_choice_sharpness = std::min( result.min_choice_sharpness, s.max_prob );
  }
  return result;
}

NetworkConfig network_config( NetworkShape const& shape, TaskSpec const& spec, OutputMode mode )
{
  NetworkConfig cfg;
  cfg.unit = shape.unit;
  cfg.input_width = spec.input_width;
  cfg.output_width = spec.output_width;
  cfg.widths = shape.widths;
  cfg.output_mode = mode;
  cfg.selector_last_layer_only = shape.selector_last_layer_only;
  return cfg;
}

std::vector<TrainConfig> default_grid( std::size_t count, std::uint64_t seed )
{
  std::vector<TrainConfig> grid;
  for ( std::size_t batch : { 4u, 8u, 16u } )
  {
    for ( double lr : { 0.15, 0.3, 0.5 } )
    {
      for ( double decay : { 0.95, 1.0 } )
      {
        for ( auto mode : { OutputMode::Hardwired, OutputMode::Selector } )
        {
          TrainConfig c;
          c.batch_size = batch;
          c.learning_rate = lr;
          c.decay = decay;
          c.output_mode = mode;
          c.seed = seed;
          grid.push_back( c );
        }
      }
    }
  }
  grid.resize( std::min( count, grid.size() ) );
  return grid;
}

GridReport aggregate( std::vector<GridRow> rows )
{
  GridReport report;
  report.rows = std::move( rows );
  for ( auto const& row : report.rows )
  {
    auto it = std::find_if( report.per_task.begin(), report.per_task.end(),
                            [&]( TaskSummary const& t ) { return t.task == row.task; } );
    if ( it == report.per_task.end() )
    {
      report.per_task.push_back( { row.task, row.full } );
      continue;
    }
    it->best.signal = std::max( it->best.signal, row.full.signal );
    it->best.example = std::max( it->best.example, row.full.example );
  }
  for ( auto const& t : report.per_task )
  {
    report.mean.signal += t.best.signal;
    report.mean.example += t.best.example;
  }
  if ( !report.per_task.empty() )
  {
    report.mean.signal /= static_cast<double>( report.per_task.size() );
    report.mean.example /= static_cast<double>( report.per_task.size() );
  }
  return report;
}

GridRow run_single( GridTask const& task, NetworkShape const& shape, TrainConfig const& config, std::size_t config_id,
                    std::optional<SoftNetwork>* trained )
{
  auto net = SoftNetwork::build( network_config( shape, task.train.spec, config.output_mode ), config.seed );
  auto const result = train( net, task.train, config );
  GridRow row;
  row.dataset = dataset_label( task.train.spec.width, task.train.completeness );
  row.task = task.train.spec.name();
  row.unit = shape.unit;
  row.config_id = config_id;
  row.config = config;
  row.train = result.train;
  row.full = accuracy( net, task.full );
  row.epochs = result.epochs;
  row.early_stopped = result.early_stopped;
  row.max_residual_entropy = result.max_residual_entropy;
  if ( trained )
  {
    *trained = std::move( net );
  }
  return row;
}

GridReport run_grid( std::span<GridTask const> tasks, NetworkShape const& shape, std::span<TrainConfig const> grid,
                     GridOptions const& options )
{
  if ( grid.empty() )
  {
    throw ConfigError( "run_grid: empty configuration grid" );
  }
  auto const total = tasks.size() * grid.size();
  std::vector<GridRow> rows( total );
  std::atomic<std::size_t> next{ 0 };
  std::mutex callback_mutex;
  std::exception_ptr failure;

  auto const worker = [&] {
    for ( auto job = next++; job < total; job = next++ )
    {
      try
      {
        auto const& task = tasks[job / grid.size()];
        auto const config_id = job % grid.size();
        std::optional<SoftNetwork> net;
        rows[job] = run_single( task, shape, grid[config_id], config_id, &net );
        if ( options.on_run )
        {
          std::lock_guard lock( callback_mutex );
          options.on_run( rows[job], *net );
        }
      }
      catch ( ... )
      {
        std::lock_guard lock( callback_mutex );
        if ( !failure )
          failure = std::current_exception();
        next = total;
      }
    }
  };

  auto const jobs = std::max<std::size_t>( 1, std::min( options.jobs, total ) );
  std::vector<std::thread> threads;
  for ( std::size_t i = 1; i < jobs; ++i )
  {
    threads.emplace_back( worker );
  }
  worker();
  for ( auto& t : threads )
  {
    t.join();
  }
  if ( failure )
  {
    std::rethrow_exception( failure );
  }
  return aggregate( std::move( rows ) );
}

std::string results_header()
{
  return "dataset,task,unit,config_id,signal_acc_train,example_acc_train,signal_acc_full,example_acc_full,epochs,"
         "stopped_early,max_residual_entropy";
}

std::string format_row( GridRow const& row )
{
  std::ostringstream os;
  os.precision( 17 );
  os << row.dataset << ',' << row.task << ',' << to_string( row.unit ) << ',' << row.config_id << ',' << row.train.signal
     << ',' << row.train.example << ',' << row.full.signal << ',' << row.full.example << ',' << row.epochs << ','
     << ( row.early_stopped ? "yes" : "no" ) << ',' << row.max_residual_entropy;
  return os.str();
}

GridRow parse_row( std::string_view line )
{
  std::vector<std::string> fields;
  std::string current;
  for ( auto c : line )
  {
    if ( c == ',' )
    {
      fields.push_back( current );
      current.clear();
    }
    else if ( c != '\r' )
    {
      current += c;
    }
  }
  fields.push_back( current );
  if ( fields.size() != 11 )
  {
    throw ParseError( "result row needs 11 fields, got " + std::to_string( fields.size() ), 0 );
  }
  try
  {
    GridRow row;
    row.dataset = fields[0];
    row.task = fields[1];
    row.unit = parse_unit_kind( fields[2] );
    row.config_id = std::stoul( fields[3] );
    row.train = { std::stod( fields[4] ), std::stod( fields[5] ) };
    row.full = { std::stod( fields[6] ), std::stod( fields[7] ) };
    row.epochs = std::stoul( fields[8] );
    if ( fields[9] != "yes" && fields[9] != "no" )
      throw ParseError( "stopped_early must be yes or no", 0 );
    row.early_stopped = fields[9] == "yes";
    row.max_residual_entropy = std::stod( fields[10] );
    return row;
  }
  catch ( std::logic_error const& )
  {
    throw ParseError( "malformed numeric field in result row", 0 );
  }
  catch ( ConfigError const& e )
  {
    throw ParseError( e.what(), 0 );
  }
}

} // namespace softsynth
