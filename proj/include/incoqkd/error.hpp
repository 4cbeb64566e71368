#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace incoqkd {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Input outside an operation's domain (zero Jones vector, s0 = 0, bad basis, ...).
class DomainError : public Error {
  public:
    using Error::Error;
};

/// Scenario validation failure; carries every violated field.
class ConfigError : public Error {
  public:
    explicit ConfigError(std::vector<std::string> problems);
    explicit ConfigError(const std::string& problem)
        : ConfigError(std::vector<std::string>{problem}) {}

    const std::vector<std::string>& problems() const noexcept { return problems_; }

  private:
    std::vector<std::string> problems_;
};

/// No significant correlation peak between Bob's records and Alice's frame.
class SyncError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

}  // namespace incoqkd
