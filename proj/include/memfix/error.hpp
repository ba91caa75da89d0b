#pragma once

#include <stdexcept>
#include <string>

namespace memfix {

/// Base class for every error the toolkit raises.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace memfix
