#pragma once

#include <stdexcept>
#include <string>

namespace propdet {

// Bad or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or unusable input data (CLI exit code 3).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss (CLI exit code 4).
class TrainingDivergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace propdet
