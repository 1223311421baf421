#pragma once

#include <stdexcept>
#include <string>

namespace vmp {

// Base for everything this library throws on bad input or bad state.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed program text. Messages carry 1-based line numbers.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Runtime faults: step limit, bad memory index, non-executable opcode.
class ExecError : public Error {
public:
    explicit ExecError(const std::string& msg) : Error(msg) {}
};

} // namespace vmp
