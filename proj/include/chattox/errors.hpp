#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace chattox {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input record. `line()` is 1-based; 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Bad caption cue. `cue_index()` is 1-based in file order.
class CueError : public ParseError {
 public:
  CueError(const std::string& what, std::size_t cue_index)
      : ParseError("cue " + std::to_string(cue_index) + ": " + what, 0), cue_index_(cue_index) {}

  std::size_t cue_index() const noexcept { return cue_index_; }

 private:
  std::size_t cue_index_;
};

/// Input is not in the expected container format (missing header, bad schema version).
class FormatError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A model, vocabulary or lexicon could not be loaded.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Inference failed while executing a batch.
class ModelError : public Error {
 public:
  ModelError(const std::string& what, std::size_t batch)
      : Error("batch " + std::to_string(batch) + ": " + what), batch_(batch) {}

  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t batch_;
};

/// Operation not permitted in the object's current state.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace chattox
