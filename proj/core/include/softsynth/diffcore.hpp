#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace softsynth
{

/// Trainable scalar together with its Adam state.
struct Parameter
{
  double value = 0.0;
  double grad = 0.0;
  double first_moment = 0.0;
  double second_moment = 0.0;
  std::uint64_t steps = 0;
};

class Tape;

/// Operation that produced a tape node.
enum class Op : std::uint8_t
{
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Exp,
  Log,
  Sigmoid,
  Interpolate,
  Sum,
  Dot,
  Clamp
};

char const* op_name( Op op );

/// Handle to a scalar node recorded on a Tape.
///
/// Values are cheap to copy; they stay valid until the owning tape is cleared.
class Value
{
public:
  Value() = default;
  Value( Tape* tape, std::uint32_t id ) : tape_( tape ), id_( id ) {}

  double data() const;
  double grad() const;
  Op op() const;
  /// Parent nodes in recording order.
  std::vector<Value> parents() const;

  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }

private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Reverse-mode recording of a scalar computation graph.
///
/// Each node stores the local partial derivative towards each of its parents
/// at recording time, so backward() is a single reverse sweep. Nodes can only
/// reference earlier nodes, which keeps the graph acyclic.
class Tape
{
public:
  Tape() = default;
  Tape( Tape const& ) = delete;
  Tape& operator=( Tape const& ) = delete;

  Value variable( double data );
  Value constant( double data );
  /// Leaf whose gradient is added to `param.grad` by backward().
  Value bind( Parameter& param );

  /// Record a node from (parent, partial derivative) pairs.
  Value record( Op op, double data, std::span<Value const> parents, std::span<double const> partials );
  Value record( Op op, double data, std::initializer_list<std::pair<Value, double>> edges );

  /// Accumulate d(root)/d(node) into every ancestor of `root`, then into bound parameters.
  void backward( Value root );

  void zero_grad();
  /// Drop all nodes and bindings while keeping allocated capacity.
  void clear();

  std::size_t size() const { return data_.size(); }
  double data( std::uint32_t id ) const { return data_[id]; }
  double grad( std::uint32_t id ) const { return grad_[id]; }
  Op op( std::uint32_t id ) const { return op_[id]; }
  std::vector<Value> parents( std::uint32_t id );

private:
  std::uint32_t push_node( Op op, double data );

  std::vector<double> data_;
  std::vector<double> grad_;
  std::vector<Op> op_;
  std::vector<std::uint32_t> edge_begin_{ 0u };
  std::vector<std::uint32_t> edge_parent_;
  std::vector<double> edge_partial_;
  std::vector<std::pair<std::uint32_t, Parameter*>> bindings_;
};

Value operator+( Value a, Value b );
Value operator+( Value a, double b );
Value operator+( double a, Value b );
Value operator-( Value a, Value b );
Value operator-( Value a, double b );
Value operator-( double a, Value b );
Value operator-( Value a );
Value operator*( Value a, Value b );
Value operator*( Value a, double b );
Value operator*( double a, Value b );
Value operator/( Value a, Value b );
Value operator/( Value a, double b );

Value exp( Value a );
Value log( Value a );
Value sigmoid( Value a );
/// `select * high + (1 - select) * low`.
Value interpolate( Value select, Value high, Value low );
/// Clamp the value into [lo, hi]; saturated values carry no gradient.
Value clamp( Value a, double lo, double hi );
Value sum( std::span<Value const> xs );
Value dot( std::span<Value const> a, std::span<Value const> b );

inline double sigmoid( double a ) { return 1.0 / ( 1.0 + std::exp( -a ) ); }
inline double interpolate( double select, double high, double low ) { return select * high + ( 1.0 - select ) * low; }
inline double clamp( double a, double lo, double hi ) { return a < lo ? lo : ( a > hi ? hi : a ); }
double sum( std::span<double const> xs );
double dot( std::span<double const> a, std::span<double const> b );

/// Probabilities of a softmax choice along with the entropy of the distribution.
template<typename T>
struct SoftmaxResult
{
  std::vector<T> probs;
  T entropy;
};

/// Max-subtracted softmax. Throws InvalidInput on an empty or non-finite input.
std::vector<double> softmax( std::span<double const> logits );
std::vector<Value> softmax( std::span<Value const> logits );

/// Softmax plus its Shannon entropy (nats), computed from the shifted logits
/// as log Z - sum_j p_j (c_j - max c) so that vanishing probabilities stay finite.
SoftmaxResult<double> softmax_with_entropy( std::span<double const> logits );
SoftmaxResult<Value> softmax_with_entropy( std::span<Value const> logits );

/// Entropy of an explicit probability vector; zero entries contribute nothing.
double entropy( std::span<double const> probs );

struct AdamOptions
{
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam update of every parameter, then zero the gradients.
///
/// A NaN gradient aborts the whole step (no parameter is touched) with a
/// NumericalError naming the parameter via `name_of`.
void adam_step( std::span<Parameter> params, double learning_rate, AdamOptions const& options = {},
                std::function<std::string( std::size_t )> const& name_of = {} );

/// lr0 * gamma^epoch; gamma must lie in (0, 1].
double decayed_lr( double lr0, double gamma, std::size_t epoch );

} // namespace softsynth
