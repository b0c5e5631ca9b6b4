#pragma once

#include <stdexcept>
#include <string>

namespace memcovert {

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input that violates a documented precondition or invariant.
class InvalidInput : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t index)
        : Error(what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

class CalibrationError : public Error {
public:
    using Error::Error;
};

class NoChannelFound : public Error {
public:
    using Error::Error;
};

class ActuatorError : public Error {
public:
    using Error::Error;
};

}  // namespace memcovert
