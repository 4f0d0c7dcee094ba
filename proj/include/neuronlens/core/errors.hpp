#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "neuronlens/core/types.hpp"

namespace neuronlens {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class MissingFile : public Error {
 public:
  explicit MissingFile(std::string path)
      : Error("file not found: " + path), path_(std::move(path)) {}
  [[nodiscard]] const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class SchemaViolation : public Error {
 public:
  SchemaViolation(std::size_t line, std::string field, const std::string& what)
      : Error("line " + std::to_string(line) + ", field '" + field + "': " + what),
        line_(line),
        field_(std::move(field)) {}
  [[nodiscard]] std::size_t line() const { return line_; }
  [[nodiscard]] const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class AllZeroNeuron : public Error {
 public:
  AllZeroNeuron(NeuronId id, std::size_t line)
      : Error("neuron " + to_string(id) + " (line " + std::to_string(line) +
              ") has no positive activation in its top excerpts"),
        id_(id),
        line_(line) {}
  [[nodiscard]] NeuronId id() const { return id_; }
  [[nodiscard]] std::size_t line() const { return line_; }

 private:
  NeuronId id_;
  std::size_t line_;
};

class InsufficientNeurons : public Error {
 public:
  InsufficientNeurons(std::optional<int> layer, std::size_t wanted, std::size_t available)
      : Error(message(layer, wanted, available)),
        layer_(layer),
        wanted_(wanted),
        available_(available) {}
  [[nodiscard]] std::optional<int> layer() const { return layer_; }
  [[nodiscard]] std::size_t wanted() const { return wanted_; }
  [[nodiscard]] std::size_t available() const { return available_; }

 private:
  static std::string message(std::optional<int> layer, std::size_t wanted, std::size_t available) {
    std::string where = layer ? "layer " + std::to_string(*layer) : std::string("dataset");
    return "insufficient neurons in " + where + ": wanted " + std::to_string(wanted) +
           ", available " + std::to_string(available);
  }
  std::optional<int> layer_;
  std::size_t wanted_;
  std::size_t available_;
};

class EmptyGroup : public Error {
 public:
  using Error::Error;
};

}  // namespace neuronlens
