#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace softsynth
{

/// Base class of every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite or out-of-domain argument.
class InvalidInput : public Error
{
public:
  using Error::Error;
};

/// Arity, width or graph-shape mismatch.
class StructuralError : public Error
{
public:
  using Error::Error;
};

class ConfigError : public Error
{
public:
  using Error::Error;
};

/// NaN/inf produced during training or optimisation.
class NumericalError : public Error
{
public:
  using Error::Error;
};

class IoError : public Error
{
public:
  using Error::Error;
};

class ParseError : public Error
{
public:
  /// `where` names the document (usually a file path) and may be empty.
  ParseError( std::string const& message, std::size_t line, std::string const& where = {} )
      : Error( format( message, line, where ) ), message_( message ), line_( line )
  {
  }

  /// 1-based line number, 0 when not tied to a line.
  std::size_t line() const noexcept { return line_; }
  std::string const& message() const noexcept { return message_; }

private:
  static std::string format( std::string const& message, std::size_t line, std::string const& where )
  {
    std::string out = where;
    if ( line != 0 )
      out += ( where.empty() ? "line " : ":" ) + std::to_string( line );
    return out.empty() ? message : out + ": " + message;
  }

  std::string message_;
  std::size_t line_;
};

/// A reachable unit port has no softmax entry above the presence threshold.
class AmbiguousWiring : public Error
{
public:
  using Error::Error;
};

/// An output selector has no softmax entry above the presence threshold.
class AmbiguousOutput : public Error
{
public:
  using Error::Error;
};

} // namespace softsynth
