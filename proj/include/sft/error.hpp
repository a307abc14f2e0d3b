#pragma once

#include <stdexcept>
#include <string>

namespace sft {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/operand dimensions do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A caller violated an operation precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

// Bad or inconsistent run/model configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// File level problems: missing, truncated, wrong magic/version.
class IoError : public Error {
public:
    using Error::Error;
};

// Payload bytes do not match the digest recorded in the header.
class DigestError : public IoError {
public:
    using IoError::IoError;
};

// Checkpoint/mask shapes disagree with the receiving tree.
class ShapeDiffError : public IoError {
public:
    using IoError::IoError;
};

// A parameter path that no taxonomy rule covers.
class ClassifyError : public Error {
public:
    using Error::Error;
};

// CTC target cannot be aligned within the available frames.
class InfeasibleAlignmentError : public Error {
public:
    using Error::Error;
};

// A token id outside the configured vocabulary.
class VocabularyError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss; state was rolled back.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// A function under test evaluated to a non-finite value.
class EvaluationError : public Error {
public:
    using Error::Error;
};

}  // namespace sft
