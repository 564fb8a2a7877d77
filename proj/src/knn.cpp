// SPDX-License-Identifier: Apache-2.0
#include "keasplat/knn.hpp"

#include <algorithm>
#include <numeric>

namespace keasplat {

namespace {

struct Candidate {
    double dist2;
    int index;
    bool operator<(const Candidate& o) const {
        return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
    }
};

// Bounded sorted list of the best k candidates.
class BestK {
public:
    explicit BestK(int k) : k_(k) { items_.reserve(k + 1); }

    void offer(Candidate c) {
        if (static_cast<int>(items_.size()) == k_ && !(c < items_.back())) return;
        items_.insert(std::upper_bound(items_.begin(), items_.end(), c), c);
        if (static_cast<int>(items_.size()) > k_) items_.pop_back();
    }
    bool full() const { return static_cast<int>(items_.size()) == k_; }
    double worst() const { return items_.back().dist2; }
    const std::vector<Candidate>& items() const { return items_; }

private:
    int k_;
    std::vector<Candidate> items_;
};

} // namespace

KdTree3::KdTree3(std::vector<Vec3> points) : points_(std::move(points)) {
    std::vector<int> idx(points_.size());
    std::iota(idx.begin(), idx.end(), 0);
    nodes_.reserve(points_.size());
    root_ = build(idx, 0, static_cast<int>(idx.size()), 0);
}

int KdTree3::build(std::vector<int>& idx, int lo, int hi, int depth) {
    if (lo >= hi) return -1;
    const int axis = depth % 3;
    const int mid = (lo + hi) / 2;
    std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi, [&](int a, int b) {
        return points_[a][axis] < points_[b][axis] || (points_[a][axis] == points_[b][axis] && a < b);
    });
    const int node = static_cast<int>(nodes_.size());
    nodes_.push_back({idx[mid], axis, -1, -1});
    const int left = build(idx, lo, mid, depth + 1);
    const int right = build(idx, mid + 1, hi, depth + 1);
    nodes_[node].left = left;
    nodes_[node].right = right;
    return node;
}

std::vector<int> KdTree3::nearest(const Vec3& q, int k, int exclude) const {
    std::vector<int> out;
    if (k <= 0 || root_ < 0) return out;
    BestK best(k);
    // Iterative descent with an explicit stack of (node, plane distance^2).
    std::vector<std::pair<int, double>> stack;
    stack.emplace_back(root_, 0.0);
    while (!stack.empty()) {
        const auto [n, plane_d2] = stack.back();
        stack.pop_back();
        if (n < 0) continue;
        if (best.full() && plane_d2 > best.worst()) continue;
        const Node& node = nodes_[n];
        const Vec3& p = points_[node.point];
        if (node.point != exclude) best.offer({(p - q).squaredNorm(), node.point});
        const double diff = q[node.axis] - p[node.axis];
        const int near = diff <= 0.0 ? node.left : node.right;
        const int far = diff <= 0.0 ? node.right : node.left;
        stack.emplace_back(far, diff * diff);
        stack.emplace_back(near, 0.0);
    }
    for (const auto& c : best.items()) out.push_back(c.index);
    return out;
}

int KdTree3::nearest_one(const Vec3& q) const {
    const auto r = nearest(q, 1);
    return r.empty() ? -1 : r.front();
}

} // namespace keasplat
