#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>

namespace gfts {

using WarningSink = std::function<void(std::string_view)>;

namespace detail {

struct WarningState {
    std::mutex mutex;
    WarningSink sink = [](std::string_view msg) { std::cerr << "gfts: warning: " << msg << '\n'; };
};

inline WarningState& warning_state() {
    static WarningState state;
    return state;
}

}  // namespace detail

/// Replace the process-wide warning sink; returns the previous one.
inline WarningSink set_warning_sink(WarningSink sink) {
    auto& st = detail::warning_state();
    std::lock_guard lock(st.mutex);
    return std::exchange(st.sink, std::move(sink));
}

inline void warn(std::string_view msg) {
    auto& st = detail::warning_state();
    std::lock_guard lock(st.mutex);
    if (st.sink) st.sink(msg);
}

/// Silences warnings for the lifetime of the guard.
class ScopedWarningSink {
public:
    explicit ScopedWarningSink(WarningSink sink = {}) : prev_(set_warning_sink(std::move(sink))) {}
    ~ScopedWarningSink() { set_warning_sink(std::move(prev_)); }
    ScopedWarningSink(const ScopedWarningSink&) = delete;
    ScopedWarningSink& operator=(const ScopedWarningSink&) = delete;

private:
    WarningSink prev_;
};

}  // namespace gfts
