#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace toothseg {

struct GradCheckEntry {
    std::string name;
    int checked = 0;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = 1e-4;
    bool pass = false;
};

/// Central-difference verification (step 1e-5) of every differentiable op and
/// of the full toy network (input 1 x 16 x 16 x 32, widths 4/8/16/32), up to
/// `samples_per_layer` randomly chosen parameters per case. A sample passes
/// when |analytic - numeric| / max(|analytic|, |numeric|) <= tolerance, or
/// when both magnitudes are below 1e-4 and the absolute gap is below 1e-8.
GradCheckReport run_gradcheck(std::uint64_t seed, double tolerance = 1e-4,
                              int samples_per_layer = 50);

}  // namespace toothseg
