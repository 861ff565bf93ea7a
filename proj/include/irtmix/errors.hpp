#pragma once

#include <stdexcept>
#include <string>

namespace irtmix {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A mathematical function was called outside its domain (non-finite input).
class DomainError : public Error {
public:
  using Error::Error;
};

/// A strictly-increasing (or strictly-decreasing) requirement was violated.
/// `index` is the first offending position (1-based on the threshold scale).
class OrderingError : public Error {
public:
  OrderingError(const std::string& what, int index) : Error(what), index(index) {}
  int index;
};

/// A transform was requested for a family/CdF combination that does not admit it.
class UnsupportedTransformError : public Error {
public:
  using Error::Error;
};

/// Model specification is internally inconsistent or incompatible with its inputs.
class SpecificationError : public Error {
public:
  using Error::Error;
};

/// A category index is outside the item's range.
class CategoryError : public Error {
public:
  using Error::Error;
};

/// The dataset violates a structural requirement (duplicates, degenerate items, ...).
class DataError : public Error {
public:
  using Error::Error;
};

/// Standard errors or test statistics cannot be formed (zero/undefined se).
class InferenceError : public Error {
public:
  using Error::Error;
};

/// Two fits being compared do not refer to the same dataset.
class ComparisonError : public Error {
public:
  using Error::Error;
};

/// Input file could not be parsed; `line` is the offending 1-based line number (0 = n/a).
class ParseError : public Error {
public:
  ParseError(const std::string& what, long line = 0) : Error(what), line(line) {}
  long line;
};

}  // namespace irtmix
