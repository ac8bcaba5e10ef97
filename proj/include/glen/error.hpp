#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace glen {

// Categorized failure. The CLI renders it as one line: "error: <category>: <message>".
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

[[noreturn]] inline void fail(const std::string& category, const std::string& message) {
    throw Error(category, message);
}

// Diagnostics go to stderr so command outputs stay byte-stable.
inline void warn(const std::string& message) {
    std::fprintf(stderr, "warning: %s\n", message.c_str());
}

}  // namespace glen
