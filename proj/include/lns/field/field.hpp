#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lns/core/tensor.hpp"

namespace lns {

/// Boundary treatment of the sampled domain; decides conv padding modes.
enum class Boundary { PeriodicXY, PeriodicXOnly, Closed };

std::string boundary_name(Boundary b);
Boundary boundary_from_name(const std::string& s);

/// Multi-channel scalar/vector field on a uniform rectangular grid.
/// values layout: (channel, y, x).
struct DiscretizedField {
    Tensor values;
    std::vector<std::string> channel_names;
    Boundary boundary = Boundary::PeriodicXY;

    DiscretizedField() = default;
    DiscretizedField(Tensor v, std::vector<std::string> names,
                     Boundary b = Boundary::PeriodicXY);

    int64_t channels() const { return values.shape(0); }
    int64_t ny() const { return values.shape(1); }
    int64_t nx() const { return values.shape(2); }

    /// Throws NumericError if any value is NaN/Inf.
    void validate_finite() const;
};

/// Mesh-reduced embedding on the coarsest grid, (channel, y', x').
struct LatentField {
    Tensor values;

    LatentField() = default;
    explicit LatentField(Tensor v);

    int64_t latent_dim() const { return values.shape(0); }
    int64_t ny() const { return values.shape(1); }
    int64_t nx() const { return values.shape(2); }
};

/// Time-ordered frames at fixed dt with an optional scalar system parameter.
struct Trajectory {
    std::vector<DiscretizedField> frames;
    double dt = 1.0;
    std::optional<double> theta;

    int64_t num_frames() const { return static_cast<int64_t>(frames.size()); }

    /// Checks shared grid/channels/boundary and frame count >= 2.
    void validate() const;
};

} // namespace lns
