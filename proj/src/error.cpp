#include "emarig/error.hpp"

namespace emarig {

Error::Error(std::string module, std::string code, const std::string& message)
    : std::runtime_error("error:" + module + ":" + code + ": " + message),
      module_(std::move(module)),
      code_(std::move(code)),
      message_(message) {}

}  // namespace emarig
