#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lns/field/field.hpp"
#include "lns/field/metrics.hpp"

namespace lns {

/// On-disk dataset description. manifest.json + one binary payload per
/// trajectory holding float32 little-endian values in (t, channel, y, x)
/// row-major order. This is also the ingestion contract for externally
/// generated trajectories.
struct DatasetManifest {
    int version = 1;
    int64_t ny = 0, nx = 0;
    std::vector<std::string> channels;
    Boundary boundary = Boundary::PeriodicXY;
    double dt = 1.0;
    int64_t frames_per_trajectory = 0; // T+1 frames stored per trajectory
    int64_t n_train = 0;
    int64_t n_test = 0;
    bool theta_present = false;
    NormStats norm; // computed from the train split only
    std::vector<double> theta_train, theta_test;
    std::string provenance; // free-form generator config echo
};

enum class Split { Train, Test };

/// Directory-backed trajectory store. Reads are thread-safe; a store is
/// written once by a single writer.
class DatasetStore {
public:
    static DatasetStore write(const std::vector<Trajectory>& train,
                              const std::vector<Trajectory>& test,
                              const std::filesystem::path& root,
                              const std::string& provenance = "");

    static DatasetStore open(const std::filesystem::path& root);

    const DatasetManifest& manifest() const { return manifest_; }
    const std::filesystem::path& root() const { return root_; }

    int64_t count(Split s) const {
        return s == Split::Train ? manifest_.n_train : manifest_.n_test;
    }

    Trajectory load(Split s, int64_t index) const;

private:
    DatasetManifest manifest_;
    std::filesystem::path root_;
};

} // namespace lns
