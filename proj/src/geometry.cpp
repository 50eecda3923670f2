#include "cpfs3d/geometry.hpp"

#include <limits>

namespace cpfs3d {

std::vector<int> farthest_point_sample(const Mat3X& points, int k) {
  const int n = static_cast<int>(points.rows());
  if (k > n) throw NumericError("farthest_point_sample: k exceeds point count");
  std::vector<int> picked;
  picked.reserve(static_cast<size_t>(k));
  if (k == 0) return picked;

  std::vector<float> min_d2(static_cast<size_t>(n), std::numeric_limits<float>::max());
  int current = 0;
  picked.push_back(current);
  for (int step = 1; step < k; ++step) {
    const Eigen::RowVector3f c = points.row(current);
    int best = -1;
    float best_d2 = -1.0f;
    for (int i = 0; i < n; ++i) {
      const float d2 = (points.row(i) - c).squaredNorm();
      if (d2 < min_d2[static_cast<size_t>(i)]) min_d2[static_cast<size_t>(i)] = d2;
      if (min_d2[static_cast<size_t>(i)] > best_d2) {
        best_d2 = min_d2[static_cast<size_t>(i)];
        best = i;
      }
    }
    current = best;
    picked.push_back(current);
  }
  return picked;
}

std::vector<int> ball_query(const Mat3X& points, const Vec3f& center, float radius,
                            int nsample) {
  if (nsample < 1) throw NumericError("ball_query: nsample must be >= 1");
  std::vector<int> out;
  const int n = static_cast<int>(points.rows());
  const float r2 = radius * radius;
  int nearest = 0;
  float nearest_d2 = std::numeric_limits<float>::max();
  for (int i = 0; i < n; ++i) {
    const float d2 = (points.row(i).transpose() - center).squaredNorm();
    if (d2 <= r2 && static_cast<int>(out.size()) < nsample) out.push_back(i);
    if (d2 < nearest_d2) {
      nearest_d2 = d2;
      nearest = i;
    }
  }
  if (out.empty()) out.push_back(nearest);
  return out;
}

}  // namespace cpfs3d
