#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "critwin/common.hpp"

namespace critwin {

enum class CurveKind { membership_prob, same_answer_prob, tv, exact };

std::string to_string(CurveKind kind);
CurveKind curve_kind_from_string(const std::string& s);

struct CurvePoint {
    double t = 0.0;
    double value = 0.0;
    double stderr_ = 0.0;
    std::int64_t n = 0;
};

// t strictly increasing; stderr = 0 iff kind == exact.
struct Curve {
    std::vector<CurvePoint> points;
    CurveKind kind = CurveKind::membership_prob;

    void validate() const;
};

}  // namespace critwin
