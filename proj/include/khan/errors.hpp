#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace khan {

/// Problems caused by user input (files, configs, flags). The CLI maps these
/// to exit code 2; everything else is an internal failure.
class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public UserError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : UserError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace khan
