#pragma once

#include <stdexcept>
#include <string>

namespace sepll {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kData = 2,
    kNumerical = 3,
};

/// Base class for all errors raised by the library. Each error knows the
/// exit code the CLI should report for it.
class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Invalid configuration, bad flag, unknown config key.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ExitCode::kUsage, what) {}
};

/// Malformed or inconsistent input data. Carries optional file/line context.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}

    DataError(const std::string& file, long line, const std::string& what)
        : Error(ExitCode::kData, file + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
          file_(file),
          line_(line) {}

    const std::string& file() const noexcept { return file_; }
    long line() const noexcept { return line_; }

private:
    std::string file_;
    long line_ = 0;
};

/// Non-finite values in a forward pass, gradient or parameter update.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ExitCode::kNumerical, what) {}
};

}  // namespace sepll
