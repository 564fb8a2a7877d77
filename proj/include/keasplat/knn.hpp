// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "keasplat/se3.hpp"

namespace keasplat {

/// Static 3D k-d tree over a point set. Ties in distance resolve to the lower index.
class KdTree3 {
public:
    explicit KdTree3(std::vector<Vec3> points);

    std::size_t size() const { return points_.size(); }

    /// Indices of the k nearest points to q, nearest first, skipping `exclude`.
    std::vector<int> nearest(const Vec3& q, int k, int exclude = -1) const;
    /// Index of the nearest point (tree must be non-empty).
    int nearest_one(const Vec3& q) const;

private:
    struct Node {
        int point = -1;
        int axis = 0;
        int left = -1;
        int right = -1;
    };

    int build(std::vector<int>& idx, int lo, int hi, int depth);

    std::vector<Vec3> points_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

} // namespace keasplat
