#include "softsynth/diffcore.hpp"

#include <algorithm>
#include <cassert>
#include <limits>

#include "softsynth/error.hpp"

namespace softsynth
{

char const* op_name( Op op )
{
  switch ( op )
  {
  case Op::Leaf: return "leaf";
  case Op::Constant: return "constant";
  case Op::Add: return "add";
  case Op::Sub: return "sub";
  case Op::Mul: return "mul";
  case Op::Div: return "div";
  case Op::Neg: return "neg";
  case Op::Exp: return "exp";
  case Op::Log: return "log";
  case Op::Sigmoid: return "sigmoid";
  case Op::Interpolate: return "interpolate";
  case Op::Sum: return "sum";
  case Op::Dot: return "dot";
  case Op::Clamp: return "clamp";
  }
  return "?";
}

double Value::data() const { return tape_->data( id_ ); }
double Value::grad() const { return tape_->grad( id_ ); }
Op Value::op() const { return tape_->op( id_ ); }
std::vector<Value> Value::parents() const { return tape_->parents( id_ ); }

std::uint32_t Tape::push_node( Op op, double data )
{
  auto const id = static_cast<std::uint32_t>( data_.size() );
  data_.push_back( data );
  grad_.push_back( 0.0 );
  op_.push_back( op );
  return id;
}

Value Tape::variable( double data )
{
  auto const id = push_node( Op::Leaf, data );
  edge_begin_.push_back( static_cast<std::uint32_t>( edge_parent_.size() ) );
  return { this, id };
}

Value Tape::constant( double data )
{
  auto const id = push_node( Op::Constant, data );
  edge_begin_.push_back( static_cast<std::uint32_t>( edge_parent_.size() ) );
  return { this, id };
}

Value Tape::bind( Parameter& param )
{
  auto v = variable( param.value );
  bindings_.emplace_back( v.id(), &param );
  return v;
}

Value Tape::record( Op op, double data, std::span<Value const> parents, std::span<double const> partials )
{
  assert( parents.size() == partials.size() );
  auto const id = push_node( op, data );
  for ( std::size_t i = 0; i < parents.size(); ++i )
  {
    assert( parents[i].tape() == this );
    edge_parent_.push_back( parents[i].id() );
    edge_partial_.push_back( partials[i] );
  }
  edge_begin_.push_back( static_cast<std::uint32_t>( edge_parent_.size() ) );
  return { this, id };
}

Value Tape::record( Op op, double data, std::initializer_list<std::pair<Value, double>> edges )
{
  auto const id = push_node( op, data );
  for ( auto const& [parent, partial] : edges )
  {
    assert( parent.tape() == this );
    edge_parent_.push_back( parent.id() );
    edge_partial_.push_back( partial );
  }
  edge_begin_.push_back( static_cast<std::uint32_t>( edge_parent_.size() ) );
  return { this, id };
}

std::vector<Value> Tape::parents( std::uint32_t id )
{
  std::vector<Value> out;
  for ( auto e = edge_begin_[id]; e < edge_begin_[id + 1]; ++e )
  {
    out.emplace_back( this, edge_parent_[e] );
  }
  return out;
}

void Tape::backward( Value root )
{
  if ( root.tape() != this || root.id() >= data_.size() )
  {
    throw StructuralError( "backward: root does not belong to this tape" );
  }
  grad_[root.id()] += 1.0;
  for ( auto node = static_cast<std::int64_t>( root.id() ); node >= 0; --node )
  {
    auto const g = grad_[node];
    if ( g == 0.0 )
    {
      continue;
    }
    for ( auto e = edge_begin_[node]; e < edge_begin_[node + 1]; ++e )
    {
      auto const parent = edge_parent_[e];
      if ( parent >= node )
      {
        throw StructuralError( "backward: cycle detected at node " + std::to_string( node ) );
      }
      grad_[parent] += g * edge_partial_[e];
    }
  }
  for ( auto const& [id, param] : bindings_ )
  {
    param->grad += grad_[id];
  }
}

void Tape::zero_grad() { std::fill( grad_.begin(), grad_.end(), 0.0 ); }

void Tape::clear()
{
  data_.clear();
  grad_.clear();
  op_.clear();
  edge_begin_.assign( 1, 0u );
  edge_parent_.clear();
  edge_partial_.clear();
  bindings_.clear();
}

namespace
{

Tape& same_tape( Value a, [[maybe_unused]] Value b )
{
  assert( a.tape() == b.tape() );
  return *a.tape();
}

void check_finite( std::span<double const> logits )
{
  if ( logits.empty() )
  {
    throw InvalidInput( "softmax: empty logit vector" );
  }
  for ( auto x : logits )
  {
    if ( !std::isfinite( x ) )
    {
      throw InvalidInput( "softmax: non-finite logit" );
    }
  }
}

} // namespace

Value operator+( Value a, Value b ) { return same_tape( a, b ).record( Op::Add, a.data() + b.data(), { { a, 1.0 }, { b, 1.0 } } ); }
Value operator+( Value a, double b ) { return a.tape()->record( Op::Add, a.data() + b, { { a, 1.0 } } ); }
Value operator+( double a, Value b ) { return b + a; }
Value operator-( Value a, Value b ) { return same_tape( a, b ).record( Op::Sub, a.data() - b.data(), { { a, 1.0 }, { b, -1.0 } } ); }
Value operator-( Value a, double b ) { return a.tape()->record( Op::Sub, a.data() - b, { { a, 1.0 } } ); }
Value operator-( double a, Value b ) { return b.tape()->record( Op::Sub, a - b.data(), { { b, -1.0 } } ); }
Value operator-( Value a ) { return a.tape()->record( Op::Neg, -a.data(), { { a, -1.0 } } ); }
Value operator*( Value a, Value b )
{
  return same_tape( a, b ).record( Op::Mul, a.data() * b.data(), { { a, b.data() }, { b, a.data() } } );
}
Value operator*( Value a, double b ) { return a.tape()->record( Op::Mul, a.data() * b, { { a, b } } ); }
Value operator*( double a, Value b ) { return b * a; }
Value operator/( Value a, Value b )
{
  auto const q = a.data() / b.data();
  return same_tape( a, b ).record( Op::Div, q, { { a, 1.0 / b.data() }, { b, -q / b.data() } } );
}
Value operator/( Value a, double b ) { return a.tape()->record( Op::Div, a.data() / b, { { a, 1.0 / b } } ); }

Value exp( Value a )
{
  auto const e = std::exp( a.data() );
  return a.tape()->record( Op::Exp, e, { { a, e } } );
}

Value log( Value a ) { return a.tape()->record( Op::Log, std::log( a.data() ), { { a, 1.0 / a.data() } } ); }

Value sigmoid( Value a )
{
  auto const s = sigmoid( a.data() );
  return a.tape()->record( Op::Sigmoid, s, { { a, s * ( 1.0 - s ) } } );
}

Value interpolate( Value select, Value high, Value low )
{
  auto const t = select.data();
  auto& tape = same_tape( select, high );
  return tape.record( Op::Interpolate, interpolate( t, high.data(), low.data() ),
                      { { select, high.data() - low.data() }, { high, t }, { low, 1.0 - t } } );
}

Value clamp( Value a, double lo, double hi )
{
  auto const x = a.data();
  if ( x < lo || x > hi )
  {
    return a.tape()->record( Op::Clamp, clamp( x, lo, hi ), { { a, 0.0 } } );
  }
  return a;
}

Value sum( std::span<Value const> xs )
{
  assert( !xs.empty() );
  double total = 0.0;
  for ( auto x : xs )
  {
    total += x.data();
  }
  thread_local std::vector<double> ones;
  ones.assign( xs.size(), 1.0 );
  return xs.front().tape()->record( Op::Sum, total, xs, ones );
}

Value dot( std::span<Value const> a, std::span<Value const> b )
{
  assert( a.size() == b.size() && !a.empty() );
  thread_local std::vector<Value> parents;
  thread_local std::vector<double> partials;
  parents.resize( 2 * a.size() );
  partials.resize( 2 * a.size() );
  double total = 0.0;
  for ( std::size_t i = 0; i < a.size(); ++i )
  {
    total += a[i].data() * b[i].data();
    parents[2 * i] = a[i];
    partials[2 * i] = b[i].data();
    parents[2 * i + 1] = b[i];
    partials[2 * i + 1] = a[i].data();
  }
  return a.front().tape()->record( Op::Dot, total, parents, partials );
}

double sum( std::span<double const> xs )
{
  double total = 0.0;
  for ( auto x : xs )
  {
    total += x;
  }
  return total;
}

double dot( std::span<double const> a, std::span<double const> b )
{
  assert( a.size() == b.size() );
  double total = 0.0;
  for ( std::size_t i = 0; i < a.size(); ++i )
  {
    total += a[i] * b[i];
  }
  return total;
}

SoftmaxResult<double> softmax_with_entropy( std::span<double const> logits )
{
  check_finite( logits );
  auto const top = *std::max_element( logits.begin(), logits.end() );
  SoftmaxResult<double> out{ std::vector<double>( logits.size() ), 0.0 };
  double z = 0.0;
  for ( std::size_t i = 0; i < logits.size(); ++i )
  {
    out.probs[i] = std::exp( logits[i] - top );
    z += out.probs[i];
  }
  double weighted = 0.0;
  for ( std::size_t i = 0; i < logits.size(); ++i )
  {
    out.probs[i] /= z;
    weighted += out.probs[i] * ( logits[i] - top );
  }
  out.entropy = std::max( 0.0, std::log( z ) - weighted );
  return out;
}

std::vector<double> softmax( std::span<double const> logits ) { return softmax_with_entropy( logits ).probs; }

SoftmaxResult<Value> softmax_with_entropy( std::span<Value const> logits )
{
  if ( logits.empty() )
  {
    throw InvalidInput( "softmax: empty logit vector" );
  }
  double top = -std::numeric_limits<double>::infinity();
  for ( auto c : logits )
  {
    if ( !std::isfinite( c.data() ) )
    {
      throw InvalidInput( "softmax: non-finite logit" );
    }
    top = std::max( top, c.data() );
  }
  // The shift is a constant: softmax is invariant to it, so it carries no gradient.
  std::vector<Value> shifted;
  std::vector<Value> exps;
  shifted.reserve( logits.size() );
  exps.reserve( logits.size() );
  for ( auto c : logits )
  {
    shifted.push_back( c - top );
    exps.push_back( exp( shifted.back() ) );
  }
  auto const z = sum( exps );
  SoftmaxResult<Value> out;
  out.probs.reserve( logits.size() );
  for ( auto e : exps )
  {
    out.probs.push_back( e / z );
  }
  out.entropy = log( z ) - dot( out.probs, shifted );
  return out;
}

std::vector<Value> softmax( std::span<Value const> logits ) { return softmax_with_entropy( logits ).probs; }

double entropy( std::span<double const> probs )
{
  double h = 0.0;
  for ( auto p : probs )
  {
    if ( p > 0.0 )
    {
      h -= p * std::log( p );
    }
  }
  return h;
}

void adam_step( std::span<Parameter> params, double learning_rate, AdamOptions const& options,
                std::function<std::string( std::size_t )> const& name_of )
{
  if ( !( learning_rate > 0.0 ) )
  {
    throw ConfigError( "adam_step: learning rate must be positive" );
  }
  for ( std::size_t i = 0; i < params.size(); ++i )
  {
    if ( std::isnan( params[i].grad ) )
    {
      throw NumericalError( "adam_step: NaN gradient for parameter " +
                            ( name_of ? name_of( i ) : "#" + std::to_string( i ) ) );
    }
  }
  for ( auto& p : params )
  {
    p.steps += 1;
    p.first_moment = options.beta1 * p.first_moment + ( 1.0 - options.beta1 ) * p.grad;
    p.second_moment = options.beta2 * p.second_moment + ( 1.0 - options.beta2 ) * p.grad * p.grad;
    auto const t = static_cast<double>( p.steps );
    auto const m_hat = p.first_moment / ( 1.0 - std::pow( options.beta1, t ) );
    auto const v_hat = p.second_moment / ( 1.0 - std::pow( options.beta2, t ) );
    p.value -= learning_rate * m_hat / ( std::sqrt( v_hat ) + options.epsilon );
    p.grad = 0.0;
  }
}

double decayed_lr( double lr0, double gamma, std::size_t epoch )
{
  if ( !( gamma > 0.0 && gamma <= 1.0 ) )
  {
    throw ConfigError( "decayed_lr: decay factor must lie in (0, 1]" );
  }
  if ( !( lr0 > 0.0 ) )
  {
    throw ConfigError( "decayed_lr: initial learning rate must be positive" );
  }
  return lr0 * std::pow( gamma, static_cast<double>( epoch ) );
}

} // namespace softsynth
