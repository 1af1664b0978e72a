#pragma once

#include <stdexcept>
#include <string>

namespace sidetect {

// Each error family maps onto one CLI exit code (see tools/sidetect.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
    virtual const char* category() const noexcept { return "error"; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
    const char* category() const noexcept override { return "config"; }
};

class DataError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
    const char* category() const noexcept override { return "data"; }
};

class TrainingError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
    const char* category() const noexcept override { return "training"; }
};

class EvaluationError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 5; }
    const char* category() const noexcept override { return "evaluation"; }
};

}  // namespace sidetect
