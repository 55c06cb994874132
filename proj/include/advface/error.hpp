#pragma once

#include <stdexcept>
#include <string>

namespace advface {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller supplied an out-of-range parameter or violated a precondition.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Malformed file content (image codec, weight file, JSON artifact).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Tensor or vector dimensions that do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Landmarks or polygons that violate their geometric invariants.
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or other bad data found while processing a corpus.
class DataError : public Error {
public:
    using Error::Error;
};

/// Evaluation protocol preconditions (subject counts, empty classes).
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Wrong combination of inputs (e.g. missing landmarks for a face-level distortion).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Filesystem failures, carrying the offending path in the message.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace advface
