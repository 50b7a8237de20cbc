#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace meshcomp {

/// Incremental 64-bit FNV-1a.
class Fnv1a {
public:
    void update(std::span<const std::byte> bytes);
    void update(std::string_view text);
    template <typename T>
    void update_value(const T& value) {
        update(std::as_bytes(std::span<const T, 1>(&value, 1)));
    }
    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t value);

}  // namespace meshcomp
