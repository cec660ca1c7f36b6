#ifndef QNMSAW_ERRORS_HPP
#define QNMSAW_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace qnmsaw {

// Bad user input: geometry, recipe fields, config values, CLI ranges.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// A numerical procedure did not reach its tolerance.
class SolverError : public std::runtime_error {
public:
    explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

// Unreadable input or unwritable output.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace qnmsaw

#endif // QNMSAW_ERRORS_HPP
