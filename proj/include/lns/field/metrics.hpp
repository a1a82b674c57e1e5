#pragma once

#include <vector>

#include "lns/field/field.hpp"

namespace lns {

/// Relative L2 norm between a predicted and a reference sequence:
/// sqrt( sum((pred-ref)^2) / sum(ref^2) ) over all elements.
/// Shapes must match exactly; an all-zero reference is an error.
double relative_l2(const Tensor& pred, const Tensor& ref);

/// Per-channel z-score statistics. std must stay positive.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
};

/// (x - mean) / std per channel.
DiscretizedField normalize(const DiscretizedField& f, const NormStats& stats);
/// x * std + mean per channel; inverse of normalize.
DiscretizedField denormalize(const DiscretizedField& f, const NormStats& stats);

Tensor normalize_values(const Tensor& chw, const NormStats& stats);
Tensor denormalize_values(const Tensor& chw, const NormStats& stats);

} // namespace lns
