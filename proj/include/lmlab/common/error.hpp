#pragma once

#include <stdexcept>
#include <string>

namespace lmlab {

// Wrong tensor shape or incompatible operands.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN or Inf produced by a forward op, loss, or optimizer step.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Misuse of the autograd graph (non-scalar loss, detached graph, double backward).
class GraphError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Malformed user input: configs, corpora, CSV/JSON artifacts.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lmlab
