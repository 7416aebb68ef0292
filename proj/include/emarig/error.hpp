#pragma once

#include <stdexcept>
#include <string>

namespace emarig {

// Every failure carries the module that raised it and a stable code, so the
// CLI can print `error:<module>:<code>: <message>`.
class Error : public std::runtime_error {
 public:
  Error(std::string module, std::string code, const std::string& message);

  const std::string& module() const noexcept { return module_; }
  const std::string& code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string module_;
  std::string code_;
  std::string message_;
};

}  // namespace emarig
