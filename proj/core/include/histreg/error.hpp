#pragma once

#include <stdexcept>
#include <string>

namespace histreg {

/// Base class for every failure raised by the library. The message is the
/// short stable tag callers match on ("empty image", "singular transform", ...),
/// optionally followed by ": detail".
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace histreg
