#include <iostream>

#include <CLI11.hpp>

#include <softsynth/error.hpp>

#include "commands.hpp"

namespace
{

constexpr int exit_error = 1;
constexpr int exit_ambiguous = 3;

} // namespace

int main( int argc, char** argv )
{
  using namespace softsynth;
  CLI::App app{ "softsynth: train soft logic networks and read out circuits" };
  app.require_subcommand( 1 );

  std::size_t width = 2;
  int completeness = 100;
  std::uint64_t seed = 0;
  std::string out = "data";
  auto* gen = app.add_subcommand( "gen-data", "write the task datasets of one EC-w-ccc family" );
  gen->add_option( "-w,--width", width, "base width w" )->check( CLI::Range( 2, 30 ) );
  gen->add_option( "-c,--completeness", completeness, "100, 95 or 90" )->check( CLI::IsMember( { 100, 95, 90 } ) );
  gen->add_option( "--seed", seed, "dropout seed" );
  gen->add_option( "--out", out, "dataset root directory" );

  std::string manifest_path;
  std::size_t jobs = 1;
  std::optional<std::size_t> grid;
  std::optional<std::uint64_t> train_seed;
  std::optional<double> train_tau;
  std::optional<std::string> train_out;
  auto* train = app.add_subcommand( "train", "train every task and configuration of a manifest" );
  train->add_option( "manifest", manifest_path, "experiment manifest (JSON)" )->required()->check( CLI::ExistingFile );
  train->add_option( "--jobs", jobs, "parallel training runs" )->check( CLI::PositiveNumber );
  train->add_option( "--grid", grid, "override the number of default-grid configurations" );
  train->add_option( "--seed", train_seed, "override the manifest seed" );
  train->add_option( "--tau", train_tau, "override the presence threshold" );
  train->add_option( "--out", train_out, "override the output directory" );

  std::string dump;
  cli::ExtractOptionsCli extract_options;
  std::optional<std::string> extract_out, extract_data;
  auto* extract = app.add_subcommand( "extract", "read a circuit out of a parameter dump and verify it" );
  extract->add_option( "dump", dump, "parameter dump (JSON)" )->required()->check( CLI::ExistingFile );
  extract->add_option( "--tau", extract_options.tau, "presence threshold in (0.5, 1)" );
  extract->add_flag( "--argmax-fallback", extract_options.argmax_fallback, "resolve unsharp choices by argmax" );
  extract->add_option( "--data", extract_data, "dataset root (defaults to the one recorded in the dump)" );
  extract->add_option( "--out", extract_out, "output directory (defaults to the dump's directory)" );

  std::string results = "runs";
  bool per_task = false;
  auto* report = app.add_subcommand( "report", "aggregate result tables" );
  report->add_option( "results", results, "directory searched for results.csv files" );
  report->add_flag( "--per-task", per_task, "also print one table per task" );

  CLI11_PARSE( app, argc, argv );

  try
  {
    if ( *gen )
    {
      cli::cmd_gen_data( width, completeness, seed, out, std::cout );
    }
    else if ( *train )
    {
      auto manifest = cli::load_manifest( manifest_path );
      if ( grid )
      {
        manifest.grid = *grid;
        manifest.config.reset();
      }
      if ( train_seed )
        manifest.seed = *train_seed;
      if ( train_tau )
        manifest.tau = *train_tau;
      if ( train_out )
        manifest.out = *train_out;
      cli::cmd_train( manifest, jobs, std::cout );
    }
    else if ( *extract )
    {
      if ( extract_out )
        extract_options.out = *extract_out;
      if ( extract_data )
        extract_options.data_dir = *extract_data;
      cli::cmd_extract( dump, extract_options, std::cout );
    }
    else if ( *report )
    {
      cli::cmd_report( results, per_task, std::cout );
    }
  }
  catch ( AmbiguousWiring const& e )
  {
    std::cerr << "error: ambiguous wiring: " << e.what() << "\n(raise sharpness, lower --tau or pass --argmax-fallback)\n";
    return exit_ambiguous;
  }
  catch ( AmbiguousOutput const& e )
  {
    std::cerr << "error: ambiguous output: " << e.what() << "\n(raise sharpness, lower --tau or pass --argmax-fallback)\n";
    return exit_ambiguous;
  }
  catch ( Error const& e )
  {
    std::cerr << "error: " << e.what() << '\n';
    return exit_error;
  }
  return 0;
}
