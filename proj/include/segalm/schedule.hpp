// Learning-rate schedule: linear warmup over the first 1% of steps, then
// linear decay to zero.
#pragma once

#include <cstdint>

#include "segalm/common.hpp"

namespace segalm {

inline std::uint64_t warmup_steps(std::uint64_t total_steps) {
    return (total_steps + 99) / 100;  // ceil(0.01 * total)
}

inline double lr_at(std::uint64_t step, std::uint64_t total_steps, double peak_lr) {
    if (step > total_steps) throw Error("step beyond total_steps");
    if (total_steps == 0) return 0.0;
    const std::uint64_t warmup = warmup_steps(total_steps);
    if (step <= warmup)
        return peak_lr * (static_cast<double>(step) / static_cast<double>(warmup));
    return peak_lr *
           (static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup));
}

}  // namespace segalm
