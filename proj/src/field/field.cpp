#include "lns/field/field.hpp"

#include <cmath>

namespace lns {

std::string boundary_name(Boundary b) {
    switch (b) {
    case Boundary::PeriodicXY: return "periodic_xy";
    case Boundary::PeriodicXOnly: return "periodic_x_only";
    case Boundary::Closed: return "closed";
    }
    return "periodic_xy";
}

Boundary boundary_from_name(const std::string& s) {
    if (s == "periodic_xy") return Boundary::PeriodicXY;
    if (s == "periodic_x_only") return Boundary::PeriodicXOnly;
    if (s == "closed") return Boundary::Closed;
    throw Error(ErrorCode::ConfigError, "unknown boundary kind: " + s);
}

DiscretizedField::DiscretizedField(Tensor v, std::vector<std::string> names, Boundary b)
    : values(std::move(v)), channel_names(std::move(names)), boundary(b) {
    check(values.ndim() == 3, ErrorCode::ShapeMismatch,
          "DiscretizedField: values must be (channel, y, x)");
    check(static_cast<int64_t>(channel_names.size()) == values.shape(0),
          ErrorCode::ShapeMismatch, "DiscretizedField: channel name count mismatch");
}

void DiscretizedField::validate_finite() const {
    const double* p = values.data();
    for (int64_t i = 0; i < values.size(); ++i)
        check(std::isfinite(p[i]), ErrorCode::NumericError,
              "DiscretizedField: non-finite value");
}

LatentField::LatentField(Tensor v) : values(std::move(v)) {
    check(values.ndim() == 3, ErrorCode::ShapeMismatch,
          "LatentField: values must be (channel, y', x')");
}

void Trajectory::validate() const {
    check(frames.size() >= 2, ErrorCode::ShapeMismatch,
          "Trajectory: needs at least 2 frames (T >= 1)");
    const auto& f0 = frames.front();
    for (const auto& f : frames) {
        check(f.values.same_shape(f0.values), ErrorCode::ShapeMismatch,
              "Trajectory: frame shape mismatch");
        check(f.channel_names == f0.channel_names, ErrorCode::ShapeMismatch,
              "Trajectory: channel name mismatch");
        check(f.boundary == f0.boundary, ErrorCode::ShapeMismatch,
              "Trajectory: boundary mismatch");
    }
}

} // namespace lns
