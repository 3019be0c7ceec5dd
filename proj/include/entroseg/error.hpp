#pragma once

#include <stdexcept>
#include <string>

namespace entroseg {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A precondition on an argument was violated (sizes, ranges, unknown ids).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Unreadable or malformed external input: image files, ground truth, config.
class InputError : public Error {
public:
    using Error::Error;
};

// The pipeline could not produce a result (e.g. every detector failed).
class PipelineError : public Error {
public:
    using Error::Error;
};

}  // namespace entroseg
