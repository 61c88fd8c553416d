#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <json.hpp>

#include <softsynth/error.hpp>
#include <softsynth/extractor.hpp>
#include <softsynth/network.hpp>

namespace softsynth::cli
{

namespace fs = std::filesystem;
using nlohmann::json;

namespace
{

std::string read_file( fs::path const& path )
{
  std::ifstream in( path );
  if ( !in )
  {
    throw IoError( "cannot read " + path.string() );
  }
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void write_file( fs::path const& path, std::string const& text )
{
  std::error_code ec;
  if ( path.has_parent_path() )
  {
    fs::create_directories( path.parent_path(), ec );
  }
  std::ofstream out( path );
  if ( !out || !( out << text ) )
  {
    throw IoError( "cannot write " + path.string() );
  }
}

json config_to_json( TrainConfig const& c )
{
  return { { "batch_size", c.batch_size },
           { "learning_rate", c.learning_rate },
           { "decay", c.decay },
           { "max_epochs", c.max_epochs },
           { "sigma", c.sigma },
           { "sigma_start_epoch", c.sigma_start_epoch },
           { "output_mode", std::string( to_string( c.output_mode ) ) },
           { "stop_on_accuracy_only", c.stop_on_accuracy_only },
           { "stop_entropy", c.stop_entropy } };
}

template<typename T>
void read_key( json const& doc, char const* key, T& out )
{
  if ( doc.contains( key ) )
  {
    out = doc.at( key ).get<T>();
  }
}

void reject_unknown( json const& doc, std::set<std::string> const& known, std::string const& where )
{
  for ( auto const& [key, value] : doc.items() )
  {
    if ( !known.count( key ) )
    {
      throw ConfigError( where + ": unknown key '" + key + "'" );
    }
  }
}

TrainConfig config_from_json( json const& doc )
{
  reject_unknown( doc,
                  { "batch_size", "learning_rate", "decay", "max_epochs", "sigma", "sigma_start_epoch", "output_mode",
                    "stop_on_accuracy_only", "stop_entropy" },
                  "manifest config" );
  TrainConfig c;
  read_key( doc, "batch_size", c.batch_size );
  read_key( doc, "learning_rate", c.learning_rate );
  read_key( doc, "decay", c.decay );
  read_key( doc, "max_epochs", c.max_epochs );
  read_key( doc, "sigma", c.sigma );
  read_key( doc, "sigma_start_epoch", c.sigma_start_epoch );
  if ( doc.contains( "output_mode" ) )
  {
    c.output_mode = parse_output_mode( doc.at( "output_mode" ).get<std::string>() );
  }
  read_key( doc, "stop_on_accuracy_only", c.stop_on_accuracy_only );
  read_key( doc, "stop_entropy", c.stop_entropy );
  return c;
}

std::string fixed( double v, int digits = 3 )
{
  std::ostringstream os;
  os << std::fixed << std::setprecision( digits ) << v;
  return os.str();
}

std::string two_digits( std::size_t id )
{
  std::ostringstream os;
  os << std::setw( 2 ) << std::setfill( '0' ) << id;
  return os.str();
}

/// Reads rows of a results table, skipping its header.
std::vector<GridRow> read_rows( fs::path const& path )
{
  std::istringstream in( read_file( path ) );
  std::vector<GridRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while ( std::getline( in, line ) )
  {
    ++line_no;
    if ( line.empty() || line == results_header() )
    {
      continue;
    }
    try
    {
      rows.push_back( parse_row( line ) );
    }
    catch ( ParseError const& e )
    {
      throw ParseError( e.message(), line_no, path.string() );
    }
  }
  return rows;
}

std::string rows_text( std::vector<GridRow> const& rows )
{
  std::string text = results_header() + "\n";
  for ( auto const& row : rows )
  {
    text += format_row( row ) + "\n";
  }
  return text;
}

TaskDataset complete_dataset( fs::path const& data_dir, TaskSpec const& spec, std::ostream& log )
{
  auto const path = dataset_path( data_dir, spec.width, 100, spec.task );
  if ( fs::exists( path ) )
  {
    return load_dataset( path );
  }
  log << "note: " << path.string() << " not found, regenerating the complete " << spec.name() << " dataset\n";
  return generate_task( spec );
}

/// Parsed "EC-<w>-<ccc>".
struct Label
{
  std::size_t width = 0;
  int completeness = 0;
};

std::optional<Label> parse_label( std::string const& text )
{
  Label label;
  char tail = 0;
  if ( std::sscanf( text.c_str(), "EC-%zu-%d%c", &label.width, &label.completeness, &tail ) != 2 )
  {
    return std::nullopt;
  }
  return label;
}

/// Accuracy on examples the run did not train on, from the seen-subset and
/// full-set accuracies and the dropout rule.
std::optional<Accuracy> held_out( GridRow const& row )
{
  auto const label = parse_label( row.dataset );
  if ( !label || label->completeness == 100 )
  {
    return std::nullopt;
  }
  auto const n_full = generate_task( TaskSpec::make( parse_task( row.task ), label->width ) ).size();
  auto const dropped = dropout_count( n_full, 100 - label->completeness );
  auto const n_seen = n_full - dropped;
  auto const part = [&]( double full, double seen ) {
    return ( full * double( n_full ) - seen * double( n_seen ) ) / double( dropped );
  };
  return Accuracy{ part( row.full.signal, row.train.signal ), part( row.full.example, row.train.example ) };
}

} // namespace

std::string format_manifest( ExperimentManifest const& m )
{
  json doc;
  doc["dataset"] = { { "width", m.width }, { "completeness", m.completeness }, { "seed", m.data_seed } };
  doc["data_dir"] = m.data_dir.string();
  doc["unit"] = std::string( to_string( m.unit ) );
  doc["widths"] = m.widths;
  doc["selector_last_layer_only"] = m.selector_last_layer_only;
  std::vector<std::string> tasks;
  for ( auto t : m.tasks )
  {
    tasks.emplace_back( to_string( t ) );
  }
  doc["tasks"] = tasks;
  if ( m.config )
  {
    doc["config"] = config_to_json( *m.config );
  }
  else
  {
    doc["grid"] = m.grid;
  }
  doc["seed"] = m.seed;
  doc["tau"] = m.tau;
  doc["out"] = m.out.string();
  return doc.dump( 2 ) + "\n";
}

ExperimentManifest parse_manifest( std::string const& text )
{
  json doc;
  try
  {
    doc = json::parse( text );
  }
  catch ( json::parse_error const& e )
  {
    throw ParseError( std::string( "manifest: " ) + e.what(), 0 );
  }
  try
  {
    reject_unknown( doc,
                    { "dataset", "data_dir", "unit", "widths", "selector_last_layer_only", "tasks", "grid", "config",
                      "seed", "tau", "out" },
                    "manifest" );
    ExperimentManifest m;
    if ( doc.contains( "dataset" ) )
    {
      auto const& d = doc.at( "dataset" );
      reject_unknown( d, { "width", "completeness", "seed" }, "manifest dataset" );
      read_key( d, "width", m.width );
      read_key( d, "completeness", m.completeness );
      read_key( d, "seed", m.data_seed );
    }
    if ( doc.contains( "data_dir" ) )
    {
      m.data_dir = doc.at( "data_dir" ).get<std::string>();
    }
    if ( doc.contains( "unit" ) )
    {
      m.unit = parse_unit_kind( doc.at( "unit" ).get<std::string>() );
    }
    read_key( doc, "widths", m.widths );
    read_key( doc, "selector_last_layer_only", m.selector_last_layer_only );
    if ( doc.contains( "tasks" ) )
    {
      for ( auto const& t : doc.at( "tasks" ) )
      {
        m.tasks.push_back( parse_task( t.get<std::string>() ) );
      }
    }
    read_key( doc, "grid", m.grid );
    if ( doc.contains( "config" ) )
    {
      m.config = config_from_json( doc.at( "config" ) );
    }
    read_key( doc, "seed", m.seed );
    read_key( doc, "tau", m.tau );
    if ( doc.contains( "out" ) )
    {
      m.out = doc.at( "out" ).get<std::string>();
    }
    if ( m.completeness != 100 && m.completeness != 95 && m.completeness != 90 )
    {
      throw ConfigError( "manifest: completeness must be 100, 95 or 90" );
    }
    if ( m.widths.empty() )
    {
      throw ConfigError( "manifest: widths must list at least one layer" );
    }
    if ( !m.config && m.grid == 0 )
    {
      throw ConfigError( "manifest: grid must contain at least one configuration" );
    }
    return m;
  }
  catch ( json::exception const& e )
  {
    throw ConfigError( std::string( "manifest: " ) + e.what() );
  }
}

ExperimentManifest load_manifest( fs::path const& path ) { return parse_manifest( read_file( path ) ); }

void save_manifest( ExperimentManifest const& manifest, fs::path const& path )
{
  write_file( path, format_manifest( manifest ) );
}

std::vector<TrainConfig> manifest_grid( ExperimentManifest const& m )
{
  std::vector<TrainConfig> grid;
  if ( m.config )
  {
    grid.push_back( *m.config );
    grid.back().seed = m.seed;
    grid.back().validate( false );
  }
  else
  {
    grid = default_grid( m.grid, m.seed );
  }
  for ( auto& c : grid )
  {
    c.tau = m.tau;
  }
  return grid;
}

std::vector<Task> manifest_tasks( ExperimentManifest const& m )
{
  if ( !m.tasks.empty() )
  {
    return m.tasks;
  }
  return { all_tasks().begin(), all_tasks().end() };
}

fs::path run_directory( ExperimentManifest const& m )
{
  return m.out / dataset_label( m.width, m.completeness ) / std::string( to_string( m.unit ) );
}

std::vector<fs::path> cmd_gen_data( std::size_t width, int completeness, std::uint64_t seed, fs::path const& out,
                                    std::ostream& log )
{
  auto const family = generate_family( width, completeness, seed );
  std::vector<fs::path> written;
  log << dataset_label( width, completeness ) << ":\n";
  for ( auto const& ds : family )
  {
    auto const path = dataset_path( out, width, completeness, ds.spec.task );
    save_dataset( ds, path );
    written.push_back( path );
    log << "  " << std::left << std::setw( 6 ) << ds.spec.name() << std::right << std::setw( 7 ) << ds.size()
        << " examples\n";
  }
  return written;
}

TrainSummary cmd_train( ExperimentManifest const& manifest, std::size_t jobs, std::ostream& log )
{
  auto const grid = manifest_grid( manifest );
  auto const tasks = manifest_tasks( manifest );
  NetworkShape const shape{ manifest.unit, manifest.widths, manifest.selector_last_layer_only };

  // Load and check everything before the first run starts.
  std::vector<GridTask> work;
  for ( auto task : tasks )
  {
    auto const path = dataset_path( manifest.data_dir, manifest.width, manifest.completeness, task );
    if ( !fs::exists( path ) )
    {
      throw IoError( "missing dataset " + path.string() + " (run gen-data first)" );
    }
    auto train_set = load_dataset( path );
    if ( train_set.spec != TaskSpec::make( task, manifest.width ) )
    {
      throw ConfigError( path.string() + ": dataset does not match width " + std::to_string( manifest.width ) );
    }
    auto full = manifest.completeness == 100 ? train_set : complete_dataset( manifest.data_dir, train_set.spec, log );
    for ( std::size_t i = 0; i < grid.size(); ++i )
    {
      try
      {
        network_config( shape, train_set.spec, grid[i].output_mode ).validate();
      }
      catch ( ConfigError const& e )
      {
        throw ConfigError( "task " + train_set.spec.name() + ", config " + std::to_string( i ) + ": " + e.what() );
      }
    }
    work.push_back( { std::move( train_set ), std::move( full ) } );
  }

  auto const dir = run_directory( manifest );
  fs::create_directories( dir );
  save_manifest( manifest, dir / "manifest.json" );
  auto const data_dir = fs::absolute( manifest.data_dir ).lexically_normal().string();

  TrainSummary summary;
  std::vector<GridRow> all_rows;
  for ( auto const& task : work )
  {
    auto const name = task.train.spec.name();
    auto const task_dir = dir / name;
    auto const rows_path = task_dir / "rows.csv";
    if ( fs::exists( task_dir / "done" ) && fs::exists( rows_path ) )
    {
      auto rows = read_rows( rows_path );
      all_rows.insert( all_rows.end(), rows.begin(), rows.end() );
      ++summary.skipped_tasks;
      log << name << ": already done, skipping\n";
      continue;
    }
    fs::create_directories( task_dir );
    std::mutex log_mutex;
    GridOptions options;
    options.jobs = jobs;
    options.on_run = [&]( GridRow const& row, SoftNetwork const& net ) {
      std::map<std::string, std::string> const meta{
          { "dataset", row.dataset },
          { "task", row.task },
          { "unit", std::string( to_string( row.unit ) ) },
          { "config_id", std::to_string( row.config_id ) },
          { "width", std::to_string( task.train.spec.width ) },
          { "completeness", std::to_string( task.train.completeness ) },
          { "data_dir", data_dir },
          { "batch_size", std::to_string( row.config.batch_size ) },
          { "learning_rate", fixed( row.config.learning_rate, 4 ) },
          { "decay", fixed( row.config.decay, 4 ) },
          { "output_mode", std::string( to_string( row.config.output_mode ) ) },
          { "seed", std::to_string( row.config.seed ) },
          { "epochs", std::to_string( row.epochs ) },
          { "tau", fixed( row.config.tau, 4 ) } };
      write_file( task_dir / ( "config-" + two_digits( row.config_id ) + ".json" ), dump_network( net, meta ) );
      std::lock_guard lock( log_mutex );
      log << name << " config " << row.config_id << ": signal " << fixed( row.full.signal ) << ", example "
          << fixed( row.full.example ) << ", " << row.epochs << " epochs\n";
    };
    auto const report = run_grid( std::span<GridTask const>( &task, 1 ), shape, grid, options );
    write_file( rows_path, rows_text( report.rows ) );
    write_file( task_dir / "done", "" );
    all_rows.insert( all_rows.end(), report.rows.begin(), report.rows.end() );
    ++summary.trained_tasks;
  }
  summary.results = dir / "results.csv";
  write_file( summary.results, rows_text( all_rows ) );
  log << "wrote " << summary.results.string() << " (" << all_rows.size() << " rows)\n";
  return summary;
}

ExtractSummary cmd_extract( fs::path const& dump, ExtractOptionsCli const& options, std::ostream& log )
{
  auto const text = read_file( dump );
  auto const net = network_from_dump( text );
  auto const meta = dump_metadata( text );

  ExtractOptions extract_options;
  extract_options.tau = options.tau;
  extract_options.argmax_fallback = options.argmax_fallback;
  auto const circuit = extract( net, extract_options );

  auto const meta_value = [&]( std::string const& key ) -> std::string {
    auto it = meta.find( key );
    if ( it == meta.end() )
    {
      throw ConfigError( dump.string() + ": dump metadata lacks '" + key + "'" );
    }
    return it->second;
  };
  auto const task = parse_task( meta_value( "task" ) );
  auto const width = static_cast<std::size_t>( std::stoul( meta_value( "width" ) ) );
  auto const data_dir = options.data_dir ? *options.data_dir : fs::path( meta_value( "data_dir" ) );
  auto const dataset = complete_dataset( data_dir, TaskSpec::make( task, width ), log );
  auto const verification = verify( circuit, dataset );

  auto const out_dir = options.out ? *options.out : dump.parent_path();
  auto const stem = dump.stem().string();
  ExtractSummary summary;
  summary.equivalent = verification.equivalent;
  summary.netlist = out_dir / ( stem + ".circuit" );
  summary.dot = out_dir / ( stem + ".dot" );
  summary.report = out_dir / ( stem + ".report" );
  summary.warnings = circuit.warnings.size();
  write_file( summary.netlist, format_circuit( circuit ) );
  write_file( summary.dot, format_dot( circuit ) );

  std::ostringstream report;
  report << "dump " << dump.string() << '\n';
  report << "task " << to_string( task ) << " width " << width << '\n';
  report << "tau " << options.tau << '\n';
  report << "units " << circuit.units.size() << '\n';
  report << "wires " << circuit.wires.size() << '\n';
  report << "examples " << dataset.size() << '\n';
  report << "mismatches " << verification.mismatches << '\n';
  report << "signal_accuracy " << fixed( verification.signal_accuracy, 6 ) << '\n';
  report << "example_accuracy " << fixed( verification.example_accuracy, 6 ) << '\n';
  report << "verdict " << ( verification.equivalent ? "equivalent" : "not equivalent" ) << '\n';
  for ( std::size_t i = 0; i < dataset.size(); ++i )
  {
    if ( !verification.matches[i] )
    {
      auto const got = simulate( circuit, dataset.examples[i].input );
      report << "mismatch " << dataset.examples[i].input.str() << " expected " << dataset.examples[i].output.str()
             << " got " << got.str() << '\n';
    }
  }
  for ( auto const& w : circuit.warnings )
  {
    report << "warning " << w << '\n';
  }
  write_file( summary.report, report.str() );

  for ( auto const& w : circuit.warnings )
  {
    log << "warning: " << w << '\n';
  }
  log << to_string( task ) << ": " << circuit.units.size() << " units, " << circuit.wires.size() << " wires, "
      << ( verification.equivalent ? "equivalent" : "not equivalent" ) << " (" << verification.mismatches
      << " mismatches over " << dataset.size() << " examples)\n";
  log << "wrote " << summary.netlist.string() << ", " << summary.dot.string() << ", " << summary.report.string()
      << '\n';
  return summary;
}

std::string cmd_report( fs::path const& dir, bool per_task, std::ostream& log )
{
  std::vector<GridRow> rows;
  if ( fs::is_directory( dir ) )
  {
    std::vector<fs::path> files;
    for ( auto const& entry : fs::recursive_directory_iterator( dir ) )
    {
      if ( entry.is_regular_file() && entry.path().filename() == "results.csv" )
      {
        files.push_back( entry.path() );
      }
    }
    std::sort( files.begin(), files.end() );
    for ( auto const& f : files )
    {
      auto more = read_rows( f );
      rows.insert( rows.end(), more.begin(), more.end() );
    }
  }
  if ( rows.empty() )
  {
    throw ConfigError( "no results found under " + dir.string() );
  }

  // (dataset, unit) -> rows
  std::map<std::pair<std::string, UnitKind>, std::vector<GridRow>> groups;
  std::set<UnitKind> units;
  std::vector<std::string> datasets;
  for ( auto const& r : rows )
  {
    groups[{ r.dataset, r.unit }].push_back( r );
    units.insert( r.unit );
    if ( std::find( datasets.begin(), datasets.end(), r.dataset ) == datasets.end() )
    {
      datasets.push_back( r.dataset );
    }
  }
  std::sort( datasets.begin(), datasets.end(), []( std::string const& a, std::string const& b ) {
    auto const la = parse_label( a ), lb = parse_label( b );
    if ( la && lb )
    {
      return std::make_pair( la->width, -la->completeness ) < std::make_pair( lb->width, -lb->completeness );
    }
    return a < b;
  } );

  // Cells keyed by (dataset, row name, unit).
  struct Line
  {
    std::string dataset;
    std::string metric;
    std::string set;
    std::map<UnitKind, double> values;
  };
  auto const build = [&]( std::optional<std::string> const& only_task ) {
    std::vector<Line> lines;
    for ( auto const& ds : datasets )
    {
      auto const reduced = parse_label( ds ) && parse_label( ds )->completeness != 100;
      std::vector<std::string> sets{ "full" };
      if ( reduced )
      {
        sets = { "full", "seen", "held-out" };
      }
      for ( auto const& set : sets )
      {
        Line sig{ ds, "signal", set, {} }, ex{ ds, "example", set, {} };
        for ( auto unit : units )
        {
          auto it = groups.find( { ds, unit } );
          if ( it == groups.end() )
            continue;
          std::vector<GridRow> view;
          for ( auto row : it->second )
          {
            if ( only_task && row.task != *only_task )
              continue;
            if ( set == "seen" )
              row.full = row.train;
            else if ( set == "held-out" )
              row.full = held_out( row ).value_or( row.full );
            view.push_back( row );
          }
          if ( view.empty() )
            continue;
          auto const report = aggregate( view );
          sig.values[unit] = report.mean.signal;
          ex.values[unit] = report.mean.example;
        }
        lines.push_back( sig );
        lines.push_back( ex );
      }
    }
    return lines;
  };

  std::ostringstream text;
  std::ostringstream csv;
  csv << "scope,dataset,metric,set,unit,value\n";
  auto const render = [&]( std::string const& scope, std::vector<Line> const& lines ) {
    text << std::left << std::setw( 30 ) << ( scope == "all" ? "Dataset / metric" : "Task " + scope );
    for ( auto u : units )
      text << std::right << std::setw( 8 ) << to_string( u );
    text << '\n';
    for ( auto const& line : lines )
    {
      auto label = line.dataset + " " + line.metric;
      if ( line.set != "full" )
        label += " (" + line.set + ")";
      text << std::left << std::setw( 30 ) << label;
      for ( auto u : units )
      {
        auto it = line.values.find( u );
        text << std::right << std::setw( 8 ) << ( it == line.values.end() ? std::string( "-" ) : fixed( it->second ) );
        if ( it != line.values.end() )
          csv << scope << ',' << line.dataset << ',' << line.metric << ',' << line.set << ',' << to_string( u ) << ','
              << fixed( it->second, 6 ) << '\n';
      }
      text << '\n';
    }
  };
  render( "all", build( std::nullopt ) );
  if ( per_task )
  {
    std::vector<std::string> tasks;
    for ( auto const& r : rows )
      if ( std::find( tasks.begin(), tasks.end(), r.task ) == tasks.end() )
        tasks.push_back( r.task );
    for ( auto const& t : tasks )
    {
      text << '\n';
      render( t, build( t ) );
    }
  }
  write_file( dir / "summary.csv", csv.str() );
  log << text.str();
  return text.str();
}

} // namespace softsynth::cli
