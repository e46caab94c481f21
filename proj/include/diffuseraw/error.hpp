#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace diffuseraw {

enum class error_code {
    dimension,
    parameter,
    io,
    format,
    training,
    validation,
};

constexpr std::string_view to_string(error_code c) {
    switch (c) {
    case error_code::dimension: return "dimension";
    case error_code::parameter: return "parameter";
    case error_code::io: return "io";
    case error_code::format: return "format";
    case error_code::training: return "training";
    case error_code::validation: return "validation";
    }
    return "unknown";
}

// Base of every exception thrown by the library. The code is stable and
// machine readable; what() carries the human message.
class error : public std::runtime_error {
public:
    error(error_code code, const std::string& msg)
        : std::runtime_error(msg), code_(code) {}

    error_code code() const noexcept { return code_; }

private:
    error_code code_;
};

struct dimension_error : error {
    explicit dimension_error(const std::string& msg) : error(error_code::dimension, msg) {}
};

struct parameter_error : error {
    explicit parameter_error(const std::string& msg) : error(error_code::parameter, msg) {}
};

struct io_error : error {
    explicit io_error(const std::string& msg) : error(error_code::io, msg) {}
};

struct format_error : error {
    explicit format_error(const std::string& msg) : error(error_code::format, msg) {}
};

struct training_error : error {
    explicit training_error(const std::string& msg) : error(error_code::training, msg) {}
};

struct validation_error : error {
    explicit validation_error(const std::string& msg) : error(error_code::validation, msg) {}
};

} // namespace diffuseraw
