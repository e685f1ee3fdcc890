#pragma once

#include <stdexcept>
#include <string>

namespace mcs {

// Precondition / input validation failures. Maps to exit code 1 at the CLI.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Failures while executing an otherwise valid request. Exit code 2.
class PipelineError : public std::runtime_error {
public:
    explicit PipelineError(const std::string& what) : std::runtime_error(what) {}
};

// File format / filesystem problems.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mcs
