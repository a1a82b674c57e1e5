#include "lns/field/metrics.hpp"

#include <cmath>

namespace lns {

double relative_l2(const Tensor& pred, const Tensor& ref) {
    check(pred.same_shape(ref), ErrorCode::ShapeMismatch,
          "relative_l2: shape mismatch " + pred.shape_str() + " vs " + ref.shape_str());
    double num = 0.0, den = 0.0;
    const double* p = pred.data();
    const double* r = ref.data();
    for (int64_t i = 0; i < pred.size(); ++i) {
        double d = p[i] - r[i];
        num += d * d;
        den += r[i] * r[i];
    }
    check(den > 0.0, ErrorCode::NumericError, "relative_l2: reference is identically zero");
    return std::sqrt(num / den);
}

namespace {
void check_stats(const NormStats& stats, int64_t channels) {
    check(static_cast<int64_t>(stats.mean.size()) == channels &&
              static_cast<int64_t>(stats.std.size()) == channels,
          ErrorCode::ShapeMismatch, "norm stats: channel count mismatch");
    for (double s : stats.std)
        check(s > 0.0, ErrorCode::NumericError, "norm stats: std must be > 0");
}
} // namespace

Tensor normalize_values(const Tensor& chw, const NormStats& stats) {
    check(chw.ndim() == 3, ErrorCode::ShapeMismatch, "normalize: values must be (C,H,W)");
    int64_t c = chw.shape(0), hw = chw.shape(1) * chw.shape(2);
    check_stats(stats, c);
    Tensor out(chw.shape());
    for (int64_t ch = 0; ch < c; ++ch) {
        double m = stats.mean[static_cast<size_t>(ch)];
        double inv = 1.0 / stats.std[static_cast<size_t>(ch)];
        const double* src = chw.data() + ch * hw;
        double* dst = out.data() + ch * hw;
        for (int64_t i = 0; i < hw; ++i) dst[i] = (src[i] - m) * inv;
    }
    return out;
}

Tensor denormalize_values(const Tensor& chw, const NormStats& stats) {
    check(chw.ndim() == 3, ErrorCode::ShapeMismatch, "denormalize: values must be (C,H,W)");
    int64_t c = chw.shape(0), hw = chw.shape(1) * chw.shape(2);
    check_stats(stats, c);
    Tensor out(chw.shape());
    for (int64_t ch = 0; ch < c; ++ch) {
        double m = stats.mean[static_cast<size_t>(ch)];
        double s = stats.std[static_cast<size_t>(ch)];
        const double* src = chw.data() + ch * hw;
        double* dst = out.data() + ch * hw;
        for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] * s + m;
    }
    return out;
}

DiscretizedField normalize(const DiscretizedField& f, const NormStats& stats) {
    return DiscretizedField(normalize_values(f.values, stats), f.channel_names, f.boundary);
}

DiscretizedField denormalize(const DiscretizedField& f, const NormStats& stats) {
    return DiscretizedField(denormalize_values(f.values, stats), f.channel_names, f.boundary);
}

} // namespace lns
