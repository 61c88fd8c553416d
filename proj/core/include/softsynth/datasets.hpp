#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace softsynth
{

/// Bits in display order: index 0 is the leftmost, most significant bit.
class BitVector
{
public:
  BitVector() = default;
  explicit BitVector( std::vector<bool> bits ) : bits_( std::move( bits ) ) {}
  /// `width` bits of `value`, most significant first.
  static BitVector from_uint( std::uint64_t value, std::size_t width );
  /// Parse "1011"; throws ParseError on other characters or an empty string.
  static BitVector parse( std::string_view text );

  std::size_t size() const { return bits_.size(); }
  bool operator[]( std::size_t i ) const { return bits_[i]; }
  std::vector<bool> const& bits() const { return bits_; }

  /// Unsigned value of the bit range [begin, begin + width).
  std::uint64_t slice( std::size_t begin, std::size_t width ) const;
  std::uint64_t to_uint() const { return slice( 0, size() ); }
  std::string str() const;
  std::vector<double> as_reals() const;

  friend bool operator==( BitVector const&, BitVector const& ) = default;
  friend auto operator<=>( BitVector const& a, BitVector const& b ) { return a.str() <=> b.str(); }

private:
  std::vector<bool> bits_;
};

enum class Task
{
  Not,
  And,
  Or,
  Xor,
  Shl,
  Shr,
  Neg,
  Add,
  Sub,
  Mul,
  Div,
  Rem,
  Mux,
  Demux,
  Dec,
  Enc
};

std::span<Task const> all_tasks();
std::string_view to_string( Task task );
Task parse_task( std::string_view name );

struct TaskSpec
{
  Task task = Task::Not;
  std::size_t width = 2;
  std::size_t input_width = 0;
  std::size_t output_width = 0;

  /// Widths derived from the task and base width w >= 2.
  static TaskSpec make( Task task, std::size_t width );
  std::string name() const { return std::string( to_string( task ) ); }

  friend bool operator==( TaskSpec const&, TaskSpec const& ) = default;
};

/// f(x) for the task, or nullopt for inputs the task leaves undefined
/// (zero divisor for DIV/REM, all-zero lines for ENC).
std::optional<BitVector> task_oracle( TaskSpec const& spec, BitVector const& x );

struct Example
{
  BitVector input;
  BitVector output;

  friend bool operator==( Example const&, Example const& ) = default;
};

struct TaskDataset
{
  TaskSpec spec;
  std::vector<Example> examples;
  /// 100, 95 or 90.
  int completeness = 100;
  std::optional<std::uint64_t> dropout_seed;

  std::size_t size() const { return examples.size(); }
  friend bool operator==( TaskDataset const&, TaskDataset const& ) = default;
};

/// Every defined input in ascending numeric order.
TaskDataset generate_task( TaskSpec const& spec );

/// Examples removed for a `percent` dropout of `n` examples: max(1, round(percent * n / 100)).
std::size_t dropout_count( std::size_t n, int percent );

/// Remove dropout_count(N, percent) examples by seeded sampling without
/// replacement. The kept examples keep their original order.
TaskDataset drop_examples( TaskDataset const& full, int percent, std::uint64_t seed );

/// "EC-<w>-<ccc>"
std::string dataset_label( std::size_t width, int completeness );
/// `<root>/EC-<w>-<ccc>/<task>.examples`
std::filesystem::path dataset_path( std::filesystem::path const& root, std::size_t width, int completeness, Task task );

std::string format_dataset( TaskDataset const& dataset );
TaskDataset parse_dataset( std::string_view text );
void save_dataset( TaskDataset const& dataset, std::filesystem::path const& path );
TaskDataset load_dataset( std::filesystem::path const& path );

/// One dataset per task: complete for completeness 100, otherwise with
/// per-task dropout of (100 - completeness) percent.
std::vector<TaskDataset> generate_family( std::size_t width, int completeness, std::uint64_t seed );

} // namespace softsynth
