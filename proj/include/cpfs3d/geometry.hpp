#pragma once

#include "cpfs3d/core.hpp"

#include <vector>

namespace cpfs3d {

// Farthest point sampling over row-vector positions. Starts at row 0 and
// breaks max-min-distance ties toward the lowest index, so the selection is
// a pure function of the point array. Returns k row indices in pick order.
std::vector<int> farthest_point_sample(const Mat3X& points, int k);

// Indices of up to `nsample` rows of `points` within `radius` of `center`,
// taken in row order. If the ball is empty, returns the single nearest row
// (ties toward the lowest index) so every group is non-empty.
std::vector<int> ball_query(const Mat3X& points, const Vec3f& center, float radius,
                            int nsample);

}  // namespace cpfs3d
