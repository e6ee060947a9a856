#pragma once

#include <stdexcept>
#include <string>

namespace fedmes {

// Invalid experiment/stream/CLI configuration; the CLI maps this to exit code 1.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fedmes
