#include "lsm/error.hpp"

namespace lsm {

Error::Error(std::string code, const std::string& message)
    : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

}  // namespace lsm
