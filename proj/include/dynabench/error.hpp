#pragma once

#include <stdexcept>
#include <string>

namespace dynabench {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class DegenerateInputError : public Error {
public:
    using Error::Error;
};

class EmbeddingError : public Error {
public:
    EmbeddingError(const std::string& what, std::size_t minimum_steps)
        : Error(what), minimum_steps_(minimum_steps) {}
    std::size_t minimum_steps() const noexcept { return minimum_steps_; }

private:
    std::size_t minimum_steps_;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t trial)
        : Error(what), trial_(trial) {}
    std::size_t trial() const noexcept { return trial_; }

private:
    std::size_t trial_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace dynabench
