#pragma once

#include <functional>
#include <optional>

#include "core/common.hpp"

namespace testutil {

// Runs f and reports which error code it raised (nullopt when it returned).
inline std::optional<fastbvp::ErrorCode> code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const fastbvp::Error& e) {
        return e.code();
    }
    return std::nullopt;
}

}  // namespace testutil
