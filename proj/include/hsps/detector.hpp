#pragma once

#include <optional>

#include "hsps/errors.hpp"

namespace hsps {

/// Two-beam-splitter, three-detector tree. A photon goes to channel 1 with probability r1,
/// otherwise to channel 2 with probability r2, otherwise to channel 3.
struct DetectorConfig {
    double r1 = 0.4;
    double r2 = 0.5;
    /// Per-detector dead time within a pulse. Empty means a detector registers at most one
    /// count per pulse; zero means photon-number resolving (nothing is ever dropped).
    std::optional<double> dead_time_ns;
    double jitter_sigma_ps = 0.0;

    void validate() const {
        if (!(r1 >= 0.0 && r1 <= 1.0) || !(r2 >= 0.0 && r2 <= 1.0)) {
            throw ConfigError("detector reflectivities must be in [0,1]");
        }
        if (dead_time_ns && !(*dead_time_ns >= 0.0)) {
            throw ConfigError("detector dead time must be >= 0");
        }
        if (!(jitter_sigma_ps >= 0.0)) {
            throw ConfigError("detector jitter must be >= 0");
        }
    }

    /// No counts are lost to dead time, so photon numbers need no correction.
    bool photon_number_resolving() const { return dead_time_ns && *dead_time_ns == 0.0; }

    /// A single photon-number-resolving detector on channel 1.
    static DetectorConfig ideal() { return DetectorConfig{1.0, 0.5, 0.0, 0.0}; }
};

}  // namespace hsps
