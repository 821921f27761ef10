#pragma once

#include <stdexcept>
#include <string>

namespace clmac {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Schema or invariant violation in user-supplied configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Non-finite value surfaced by the network. `layer()` names where it appeared.
class NumericError : public Error {
public:
    NumericError(std::string layer, const std::string& what)
        : Error("non-finite value in " + layer + ": " + what), layer_(std::move(layer)) {}

    const std::string& layer() const noexcept { return layer_; }

private:
    std::string layer_;
};

}  // namespace clmac
