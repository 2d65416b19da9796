#pragma once

#include <string>

namespace uqlens {

// Locale-independent "%.17g" rendering: round-trip exact, lowercase exponent.
// Used for every floating-point value written to CSV or fixed-schema JSON.
std::string format_double(double value);

}  // namespace uqlens
