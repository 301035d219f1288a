#pragma once

#include <optional>
#include <string>
#include <vector>

#include "treeloc/thresholds.hpp"

namespace treeloc {

// Published critical couplings g_c(K, E=0) for the two canonical disorder
// families, with per-method comparison tolerances. Methods A/B/D/E carry the
// reference precision of 0.001 widened to 0.002 to absorb discretization
// choices; method C carries its quoted statistical error.
struct ReferenceCell {
    int K;
    Method method;
    std::optional<double> g_c;   // empty: no value exists (method D, Cauchy K=2)
    double tolerance;
};

inline const std::vector<ReferenceCell>& reference_table(DisorderKind kind) {
    static const std::vector<ReferenceCell> uniform_table = {
        {2, Method::A, 0.150, 0.002},  {2, Method::B, 0.153, 0.002},
        {2, Method::C, 0.154, 0.010},  {2, Method::D, 0.154, 0.002},
        {2, Method::E, 0.149, 0.002},
        {3, Method::A, 0.187, 0.002},  {3, Method::B, 0.188, 0.002},
        {3, Method::C, 0.189, 0.010},  {3, Method::D, 0.194, 0.002},
        {3, Method::E, 0.187, 0.002},
        {4, Method::A, 0.207, 0.002},  {4, Method::B, 0.208, 0.002},
        {4, Method::C, 0.204, 0.010},  {4, Method::D, 0.213, 0.002},
        {4, Method::E, 0.207, 0.002},
        {5, Method::A, 0.220, 0.002},  {5, Method::B, 0.220, 0.002},
        {5, Method::C, 0.219, 0.010},  {5, Method::D, 0.225, 0.002},
        {5, Method::E, 0.220, 0.002},
        {6, Method::A, 0.230, 0.002},  {6, Method::B, 0.231, 0.002},
        {6, Method::C, 0.227, 0.010},  {6, Method::D, 0.234, 0.002},
        {6, Method::E, 0.230, 0.002},
        {8, Method::A, 0.243, 0.002},  {8, Method::B, 0.243, 0.002},
        {8, Method::D, 0.247, 0.002},  {8, Method::E, 0.243, 0.002},
        {12, Method::A, 0.261, 0.002}, {12, Method::B, 0.261, 0.002},
        {12, Method::D, 0.263, 0.002}, {12, Method::E, 0.260, 0.002},
    };
    static const std::vector<ReferenceCell> cauchy_table = {
        {2, Method::A, 0.317, 0.002},  {2, Method::B, 0.334, 0.002},
        {2, Method::C, 0.334, 0.010},  {2, Method::D, std::nullopt, 0.002},
        {2, Method::E, 0.367, 0.002},
        {3, Method::A, 0.364, 0.002},  {3, Method::B, 0.372, 0.002},
        {3, Method::C, 0.370, 0.010},  {3, Method::D, 0.418, 0.002},
        {3, Method::E, 0.384, 0.002},
        {4, Method::A, 0.389, 0.002},  {4, Method::B, 0.394, 0.002},
        {4, Method::C, 0.394, 0.010},  {4, Method::D, 0.423, 0.002},
        {4, Method::E, 0.403, 0.002},
        {5, Method::A, 0.406, 0.002},  {5, Method::B, 0.410, 0.002},
        {5, Method::C, 0.404, 0.010},  {5, Method::D, 0.432, 0.002},
        {5, Method::E, 0.417, 0.002},
        {6, Method::A, 0.419, 0.002},  {6, Method::B, 0.421, 0.002},
        {6, Method::C, 0.422, 0.010},  {6, Method::D, 0.440, 0.002},
        {6, Method::E, 0.428, 0.002},
        {8, Method::A, 0.436, 0.002},  {8, Method::B, 0.437, 0.002},
        {8, Method::D, 0.453, 0.002},  {8, Method::E, 0.444, 0.002},
        {12, Method::A, 0.456, 0.002}, {12, Method::B, 0.457, 0.002},
        {12, Method::D, 0.470, 0.002}, {12, Method::E, 0.463, 0.002},
    };
    static const std::vector<ReferenceCell> empty;
    switch (kind) {
        case DisorderKind::uniform: return uniform_table;
        case DisorderKind::cauchy: return cauchy_table;
        default: return empty;
    }
}

inline const ReferenceCell* find_reference(DisorderKind kind, int K, Method m) {
    for (const auto& c : reference_table(kind))
        if (c.K == K && c.method == m) return &c;
    return nullptr;
}

} // namespace treeloc
