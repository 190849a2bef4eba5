#pragma once

namespace isa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

int run(int argc, char** argv);

}  // namespace isa::cli
