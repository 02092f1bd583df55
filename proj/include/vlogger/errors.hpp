#pragma once

#include <stdexcept>
#include <string>

namespace vlogger {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct NonFiniteError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct StageOrderError : Error {
  using Error::Error;
};
struct TransportError : Error {
  using Error::Error;
};
struct EmptyReply : Error {
  using Error::Error;
};
struct DimMismatch : Error {
  using Error::Error;
};
struct OrderError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

}  // namespace vlogger
