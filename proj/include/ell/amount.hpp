#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace ell {

/// Exact token quantity in base units.
///
/// Meme-token supplies routinely exceed 2^64 base units (10^15 tokens at 9
/// decimals), so the value is held in an unsigned 128-bit integer.
class TokenAmount {
public:
    using value_type = unsigned __int128;

    constexpr TokenAmount() = default;
    constexpr explicit TokenAmount(value_type v) : value_(v) {}

    constexpr value_type value() const { return value_; }
    double to_double() const { return static_cast<double>(value_); }
    long double to_long_double() const { return static_cast<long double>(value_); }

    // Accepts an optional leading '+', digits only. Returns nullopt on
    // negative, fractional, empty or overflowing input.
    static std::optional<TokenAmount> parse(std::string_view text) {
        if (!text.empty() && text.front() == '+') text.remove_prefix(1);
        if (text.empty()) return std::nullopt;
        value_type v = 0;
        constexpr value_type max = ~value_type{0};
        for (char c : text) {
            if (c < '0' || c > '9') return std::nullopt;
            const auto digit = static_cast<value_type>(c - '0');
            if (v > (max - digit) / 10) return std::nullopt;
            v = v * 10 + digit;
        }
        return TokenAmount(v);
    }

    std::string to_string() const {
        if (value_ == 0) return "0";
        std::string out;
        for (value_type v = value_; v != 0; v /= 10) out.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
        return {out.rbegin(), out.rend()};
    }

    constexpr TokenAmount& operator+=(TokenAmount o) {
        value_ += o.value_;
        return *this;
    }
    // Caller guarantees o <= *this.
    constexpr TokenAmount& operator-=(TokenAmount o) {
        value_ -= o.value_;
        return *this;
    }
    friend constexpr TokenAmount operator+(TokenAmount a, TokenAmount b) { return a += b; }
    friend constexpr auto operator<=>(TokenAmount a, TokenAmount b) = default;

private:
    value_type value_ = 0;
};

}  // namespace ell
