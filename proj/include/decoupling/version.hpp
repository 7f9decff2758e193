#pragma once

#define DECOUPLING_VERSION "0.1.0"

namespace decoupling {
inline constexpr const char* kVersion = DECOUPLING_VERSION;
}
