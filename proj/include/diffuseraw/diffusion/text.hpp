#pragma once

// Template prompt vocabulary. Each prompt is a single token id; id 0 is the
// null prompt used for unconditional predictions.

#include <cmath>
#include <string>
#include <vector>

#include "diffuseraw/error.hpp"

namespace diffuseraw::diffusion {

inline constexpr int null_prompt = 0;

inline const std::vector<std::string>& prompt_templates() {
    static const std::vector<std::string> templates{
        "",
        "a photo taken at night",
        "a low-light photo amplified x100",
        "a low-light photo amplified x250",
        "a low-light photo amplified x300",
    };
    return templates;
}

inline int vocabulary_size() { return static_cast<int>(prompt_templates().size()); }

inline int prompt_id(const std::string& text) {
    const auto& t = prompt_templates();
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] == text) return static_cast<int>(i);
    }
    throw parameter_error("unknown prompt \"" + text + "\"");
}

// Ratio-specific template when one exists, otherwise the generic night prompt.
inline int prompt_for_ratio(double ratio) {
    for (int r : {100, 250, 300}) {
        if (std::abs(ratio - r) < 1e-9) return prompt_id("a low-light photo amplified x" + std::to_string(r));
    }
    return 1;
}

} // namespace diffuseraw::diffusion
