#pragma once

#include <stdexcept>
#include <string>

namespace tard {

// Shape/dimension/configuration problems: wrong matrix sizes, invalid
// hyperparameters, inconsistent manifests.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// API misuse: calling backward without a forward cache, corrected_predict
// without an adaptive module, smoothing a series shorter than the window.
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed external input: CSV cells, manifests, bundle files. Carries the
// offending field/location in the message.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, std::size_t epoch)
        : std::runtime_error(what), epoch(epoch) {}
    std::size_t epoch;
};

// Broken internal guarantee (e.g. frozen-backbone checksum changed).
class InternalError : public std::logic_error {
public:
    explicit InternalError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace tard
