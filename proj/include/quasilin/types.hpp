#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace quasilin {

using Index = Eigen::Index;

/// Scalar field on the vertices of a GraphSpace (one entry per vertex).
using VertexFunction = Eigen::VectorXd;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rejected input: malformed descriptor, violated precondition, bad file.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A numerical procedure did not reach its target.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace quasilin
