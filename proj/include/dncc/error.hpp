#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dncc {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible shapes, invalid axis, wrong batch width.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Argument outside the mathematical domain of an operation (log of a
// non-positive value, point outside dom(phi)).
class DomainError : public Error {
public:
    DomainError(const std::string& what, std::size_t index)
        : Error(what), index_(index) {}
    explicit DomainError(const std::string& what) : Error(what) {}
    std::size_t index() const { return index_; }

private:
    std::size_t index_ = 0;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
public:
    using Error::Error;
};

// Violated precondition of an API call.
class ContractError : public Error {
public:
    using Error::Error;
};

// Inconsistent model / training configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed input file. `offset` is a byte offset for binary formats and a
// 1-based line number for text formats.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// Classifier weight row with zero norm; cosine similarity undefined.
class DegenerateWeightError : public Error {
public:
    DegenerateWeightError(std::size_t head, std::size_t cls)
        : Error("zero-norm weight row for head " + std::to_string(head) + ", class " +
                std::to_string(cls)),
          head_(head), cls_(cls) {}
    std::size_t head() const { return head_; }
    std::size_t class_index() const { return cls_; }

private:
    std::size_t head_;
    std::size_t cls_;
};

// An identity that must hold by construction did not. Signals a bug.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

// Training aborted (non-finite loss, etc.).
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, int epoch, int step)
        : Error(what + " (epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ")"),
          epoch_(epoch), step_(step) {}
    int epoch() const { return epoch_; }
    int step() const { return step_; }

private:
    int epoch_;
    int step_;
};

}  // namespace dncc
