#pragma once

#include "bodyfit/body_model.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <numbers>
#include <random>

namespace bodyfit {

namespace detail {

inline double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

// Skinning blend zones along each bone, as fractions of the bone length.
inline constexpr double kChildBlendStart = 0.8;
inline constexpr double kParentBlendEnd = 0.2;

struct ToySegment {
  int owner;       // part whose rotation drives the segment
  int child;       // joint at the far end, -1 for end caps
  Eigen::Vector3d start;
  Eigen::Vector3d end;
  double radius;
};

/// Two unit vectors orthogonal to `axis` and to each other.
inline std::pair<Eigen::Vector3d, Eigen::Vector3d> orthonormal_frame(const Eigen::Vector3d& axis) {
  const Eigen::Vector3d a = axis.normalized();
  const Eigen::Vector3d helper = std::abs(a.z()) < 0.9 ? Eigen::Vector3d::UnitZ() : Eigen::Vector3d::UnitX();
  const Eigen::Vector3d u = a.cross(helper).normalized();
  return {u, a.cross(u)};
}

}  // namespace detail

/// Synthetic humanoid stand-in for licensed body-model assets: a pelvis root with a
/// spine chain, two arm chains hanging off the top of the spine and two leg chains,
/// vertices on capsule-like surfaces around every bone, smooth skinning weights, and
/// a joint regressor averaging the vertices around each joint. Deterministic in `seed`.
inline BodyModel make_toy_model(std::uint64_t seed, int n_verts, int n_joints, int n_betas) {
  require(n_joints >= 2, ErrorKind::InvalidArgument, "toy model needs at least 2 joints");
  require(n_verts >= 4 * n_joints, ErrorKind::InvalidArgument, "toy model needs n_verts >= 4 * n_joints");
  require(n_betas >= 0, ErrorKind::InvalidArgument, "n_betas must be nonnegative");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto jitter = [&](double scale) { return 1.0 + scale * unit(rng); };

  // spine, left leg, right leg, left arm, right arm
  enum Chain { kSpine, kLeftLeg, kRightLeg, kLeftArm, kRightArm, kNumChains };
  std::array<int, kNumChains> counts{};
  const int remaining = n_joints - 1;
  for (int c = 0; c < kNumChains; ++c) {
    counts[c] = remaining / kNumChains + (c < remaining % kNumChains ? 1 : 0);
  }

  std::vector<int> parent{BodyModel::kRootParent};
  std::vector<Eigen::Vector3d> joints{Eigen::Vector3d(0.0, 0.95 * jitter(0.05), 0.0)};
  std::vector<double> radius{0.11 * jitter(0.1)};
  std::vector<int> chain_of{-1};
  auto add_joint = [&](int p, const Eigen::Vector3d& position, double r, int chain) {
    parent.push_back(p);
    joints.push_back(position);
    radius.push_back(r);
    chain_of.push_back(chain);
    return static_cast<int>(joints.size()) - 1;
  };
  auto add_chain = [&](int chain, int root, const Eigen::Vector3d& first_offset, const Eigen::Vector3d& direction,
                       double total_length, int count, double r) {
    int last = root;
    for (int i = 0; i < count; ++i) {
      Eigen::Vector3d offset;
      if (i == 0 && first_offset.squaredNorm() > 0.0) {
        offset = first_offset * jitter(0.08);
      } else {
        const int segments = first_offset.squaredNorm() > 0.0 ? std::max(count - 1, 1) : count;
        const Eigen::Vector3d wobble(0.05 * unit(rng), 0.05 * unit(rng), 0.05 * unit(rng));
        offset = (direction + wobble).normalized() * (total_length / segments) * jitter(0.08);
      }
      last = add_joint(last, joints[last] + offset, r * jitter(0.1), chain);
    }
    return last;
  };

  const int spine_top =
      add_chain(kSpine, 0, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitY(), 0.6, counts[kSpine], 0.1);
  add_chain(kLeftArm, spine_top, Eigen::Vector3d(0.17, -0.05, 0.0), Eigen::Vector3d::UnitX(), 0.55,
            counts[kLeftArm], 0.045);
  add_chain(kRightArm, spine_top, Eigen::Vector3d(-0.17, -0.05, 0.0), -Eigen::Vector3d::UnitX(), 0.55,
            counts[kRightArm], 0.045);
  add_chain(kLeftLeg, 0, Eigen::Vector3d(0.09, -0.07, 0.0), -Eigen::Vector3d::UnitY(), 0.85, counts[kLeftLeg],
            0.065);
  add_chain(kRightLeg, 0, Eigen::Vector3d(-0.09, -0.07, 0.0), -Eigen::Vector3d::UnitY(), 0.85, counts[kRightLeg],
            0.065);

  const int nj = static_cast<int>(joints.size());
  std::vector<std::vector<int>> children(nj);
  for (int k = 1; k < nj; ++k) {
    children[parent[k]].push_back(k);
  }

  std::vector<detail::ToySegment> segments;
  for (int k = 0; k < nj; ++k) {
    for (int c : children[k]) {
      segments.push_back({k, c, joints[k], joints[c], 0.5 * (radius[k] + radius[c])});
    }
    if (children[k].empty()) {
      const Eigen::Vector3d dir = (joints[k] - joints[parent[k]]).normalized();
      segments.push_back({k, -1, joints[k], joints[k] + 0.12 * dir, radius[k]});
    }
  }

  // Largest-remainder allocation proportional to lateral area, two vertices minimum.
  const int ns = static_cast<int>(segments.size());
  std::vector<double> area(ns);
  double total_area = 0.0;
  for (int s = 0; s < ns; ++s) {
    area[s] = (segments[s].end - segments[s].start).norm() * segments[s].radius + 1e-6;
    total_area += area[s];
  }
  std::vector<int> alloc(ns, 2);
  const int spare = n_verts - 2 * ns;
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int s = 0; s < ns; ++s) {
    const double share = spare * area[s] / total_area;
    const int whole = static_cast<int>(std::floor(share));
    alloc[s] += whole;
    assigned += whole;
    remainders.emplace_back(share - whole, s);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) { return a.first > b.first; });
  for (int i = 0; i < spare - assigned; ++i) {
    ++alloc[remainders[i].second];
  }

  Points vertices(n_verts, 3);
  RowMatrix skinning = RowMatrix::Zero(n_verts, nj);
  std::vector<Eigen::Vector3d> radial(n_verts);
  std::vector<Eigen::Vector3d> axis_point(n_verts);
  std::vector<double> axis_param(n_verts);
  std::vector<int> vertex_segment(n_verts);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  int v = 0;
  for (int s = 0; s < ns; ++s) {
    const auto& seg = segments[s];
    const auto [u, w] = detail::orthonormal_frame(seg.end - seg.start);
    const double phase = std::numbers::pi * unit(rng);
    for (int i = 0; i < alloc[s]; ++i, ++v) {
      const double t = (i + 0.5 + 0.3 * unit(rng)) / alloc[s];
      const double theta = phase + golden * i;
      radial[v] = std::cos(theta) * u + std::sin(theta) * w;
      const double r = seg.radius * jitter(0.1);
      axis_point[v] = seg.start + t * (seg.end - seg.start);
      axis_param[v] = t;
      vertices.row(v) = (axis_point[v] + r * radial[v]).transpose();
      vertex_segment[v] = s;

      skinning(v, seg.owner) = 1.0;
      if (seg.child >= 0) {
        skinning(v, seg.child) += 0.5 * detail::smoothstep((t - detail::kChildBlendStart) / (1.0 - detail::kChildBlendStart));
      }
      if (parent[seg.owner] >= 0) {
        skinning(v, parent[seg.owner]) += 0.5 * detail::smoothstep((detail::kParentBlendEnd - t) / detail::kParentBlendEnd);
      }
      skinning.row(v) /= skinning.row(v).sum();
    }
  }

  // Joint regressor: Gaussian-weighted average of the 8 nearest vertices on adjacent segments.
  RowMatrix regressor = RowMatrix::Zero(nj, n_verts);
  for (int j = 0; j < nj; ++j) {
    std::vector<std::pair<double, int>> candidates;
    for (int i = 0; i < n_verts; ++i) {
      const auto& seg = segments[vertex_segment[i]];
      if (seg.owner == j || seg.child == j) {
        candidates.emplace_back((vertices.row(i).transpose() - joints[j]).squaredNorm(), i);
      }
    }
    const auto keep = std::min<std::size_t>(8, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end());
    double total = 0.0;
    for (std::size_t c = 0; c < keep; ++c) {
      const double weight = std::exp(-candidates[c].first / (2.0 * 0.05 * 0.05));
      regressor(j, candidates[c].second) = weight;
      total += weight;
    }
    regressor.row(j) /= total;
  }

  // Shape space, roughly ordered like body-model PCA: overall size, girth, then
  // proportions (limb and torso lengths, shoulder and hip width, belly, limb girth),
  // and small smooth residual fields for anything beyond.
  auto chain_root = [&](int chain) {
    for (int j = 1; j < nj; ++j) {
      if (chain_of[j] == chain) {
        return j;
      }
    }
    return 0;
  };
  auto side = [](int chain) { return chain == kLeftArm || chain == kLeftLeg ? 1.0 : -1.0; };
  auto is_arm = [](int chain) { return chain == kLeftArm || chain == kRightArm; };
  auto is_leg = [](int chain) { return chain == kLeftLeg || chain == kRightLeg; };

  RowMatrix shape = RowMatrix::Zero(3 * n_verts, n_betas);
  for (int b = 0; b < n_betas; ++b) {
    std::uniform_int_distribution<int> pick(0, n_verts - 1);
    std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> bumps;
    if (b >= 9) {
      for (int c = 0; c < 3; ++c) {
        bumps.emplace_back(vertices.row(pick(rng)).transpose(),
                           Eigen::Vector3d(0.004 * unit(rng), 0.004 * unit(rng), 0.004 * unit(rng)));
      }
    }
    for (int i = 0; i < n_verts; ++i) {
      const auto& seg = segments[vertex_segment[i]];
      const int chain = seg.child >= 0 ? chain_of[seg.child] : chain_of[seg.owner];
      const bool owned_by_chain = chain_of[seg.owner] == chain;
      const Eigen::Vector3d position = vertices.row(i).transpose();
      Eigen::Vector3d d = Eigen::Vector3d::Zero();
      switch (b) {
        case 0:  // overall size
          d = 0.05 * (position - joints[0]);
          break;
        case 1:  // girth
          d = 0.012 * radial[i];
          break;
        case 2:  // leg length
          if (is_leg(chain) && owned_by_chain) {
            d = 0.04 * (axis_point[i] - joints[chain_root(chain)]);
          }
          break;
        case 3:  // arm length
          if (is_arm(chain) && owned_by_chain) {
            d = 0.04 * (axis_point[i] - joints[chain_root(chain)]);
          }
          break;
        case 4:  // torso length; arms ride along with the top of the spine
          if (chain == kSpine) {
            d = 0.04 * (axis_point[i] - joints[0]);
          } else if (is_arm(chain)) {
            d = 0.04 * (joints[spine_top] - joints[0]);
          }
          break;
        case 5:  // shoulder width
          if (is_arm(chain)) {
            d = Eigen::Vector3d(0.02 * side(chain) * (owned_by_chain ? 1.0 : axis_param[i]), 0.0, 0.0);
          }
          break;
        case 6:  // hip width
          if (is_leg(chain)) {
            d = Eigen::Vector3d(0.015 * side(chain) * (owned_by_chain ? 1.0 : axis_param[i]), 0.0, 0.0);
          }
          break;
        case 7:  // belly
          if (chain == kSpine) {
            d = 0.015 * std::max(radial[i].z(), 0.0) * radial[i];
          }
          break;
        case 8:  // limb girth
          if (is_arm(chain) || is_leg(chain)) {
            d = 0.008 * radial[i];
          }
          break;
        default:
          for (const auto& [center, amplitude] : bumps) {
            d += amplitude * std::exp(-(position - center).squaredNorm() / (2.0 * 0.15 * 0.15));
          }
          break;
      }
      shape.block<3, 1>(3 * i, b) = d;
    }
  }

  std::vector<std::vector<int>> part_joints(nj);
  for (int k = 0; k < nj; ++k) {
    part_joints[k].push_back(k);
    part_joints[k].insert(part_joints[k].end(), children[k].begin(), children[k].end());
  }

  return BodyModel(std::move(vertices), std::move(shape), std::move(regressor), std::move(skinning),
                   std::move(parent), std::move(part_joints));
}

}  // namespace bodyfit
