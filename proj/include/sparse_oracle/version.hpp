#pragma once

namespace sparse_oracle {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sparse_oracle
