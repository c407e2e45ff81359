#pragma once

#include <cstddef>
#include <vector>

namespace ulmpac {

struct TrackPoint {
    int frame = 0;
    double x = 0.0, z = 0.0;  // m
};

// Time-ordered microbubble positions; frame indices are contiguous.
struct Track {
    int id = 0;
    std::vector<TrackPoint> points;

    std::size_t length() const { return points.size(); }
    double mean_x() const;
    double mean_z() const;
    double mean_velocity(double frame_rate) const;  // m/s along the path
};

}  // namespace ulmpac
