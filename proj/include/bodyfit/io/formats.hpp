#pragma once

#include "bodyfit/body_model.hpp"
#include "bodyfit/fitter.hpp"
#include "bodyfit/gps_encoding.hpp"
#include "bodyfit/heatmap.hpp"
#include "bodyfit/interior_deform.hpp"
#include "bodyfit/io/array.hpp"

#include <optional>

namespace bodyfit::io {

inline constexpr int kFormatVersion = 1;

inline std::string dump(const json& j) { return j.dump(1) + "\n"; }

inline json load_json_file(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  require(!text.empty(), ErrorKind::Parse, path.string() + " is empty");
  return parse_json(text, path.string());
}

inline void check_header(const json& j, const std::string& format, const std::string& where) {
  require(j.is_object(), ErrorKind::Parse, where + ": top level must be an object");
  if (j.contains("format") && j.at("format") != format) {
    throw Error(ErrorKind::Parse, where + ": expected format '" + format + "', found " + j.at("format").dump());
  }
  require(j.contains("format_version") && j.at("format_version") == kFormatVersion, ErrorKind::Parse,
          where + ": unsupported or missing format_version");
}

inline json header(const std::string& format) { return json{{"format", format}, {"format_version", kFormatVersion}}; }

// ---- body model

inline json model_to_json(const BodyModel& model) {
  json j = header("bodyfit.model");
  j["template_vertices"] = encode_matrix(model.template_vertices());
  const auto& s = model.shape_blendshapes();
  j["shape_blendshapes"] = encode_array<double>(std::span(s.data(), static_cast<std::size_t>(s.size())),
                                                {model.num_vertices(), 3, model.num_betas()});
  j["joint_regressor"] = encode_matrix(model.joint_regressor());
  j["skinning_weights"] = encode_matrix(model.skinning_weights());
  j["parent"] = encode_indices(model.parent());
  j["part_joints"] = model.part_joints();
  return j;
}

inline BodyModel model_from_json(const json& j, const std::string& where = "model") {
  check_header(j, "bodyfit.model", where);
  Points vertices = decode_points(j, "template_vertices");
  const auto nv = vertices.rows();
  auto blend = decode_array<double>(field(j, "shape_blendshapes"), "shape_blendshapes");
  expect_shape(blend.shape, {nv, 3, -1}, "shape_blendshapes");
  RowMatrix shape = Eigen::Map<const RowMatrix>(blend.values.data(), 3 * nv, blend.shape[2]);
  std::vector<int> parent = decode_indices(j, "parent");
  const auto nj = static_cast<std::int64_t>(parent.size());
  RowMatrix regressor = decode_matrix(j, "joint_regressor", nj, nv);
  RowMatrix skinning = decode_matrix(j, "skinning_weights", nv, nj);
  std::vector<std::vector<int>> part_joints;
  try {
    part_joints = field(j, "part_joints").get<std::vector<std::vector<int>>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, "part_joints: " + std::string(e.what()));
  }
  return BodyModel(std::move(vertices), std::move(shape), std::move(regressor), std::move(skinning), std::move(parent),
                   std::move(part_joints));
}

inline void save_model(const std::filesystem::path& path, const BodyModel& model) {
  write_file(path, dump(model_to_json(model)));
}

inline BodyModel load_model(const std::filesystem::path& path) {
  return model_from_json(load_json_file(path), path.string());
}

// ---- fit targets and poses

inline json target_to_json(const FitTarget& target) {
  json j = header("bodyfit.target");
  j["vertices"] = encode_matrix(target.vertices);
  if (target.vertex_indices) {
    j["vertex_indices"] = encode_indices(*target.vertex_indices);
  }
  j["joints"] = encode_matrix(target.joints);
  if (target.sigmas) {
    j["sigmas"] = encode_vector(*target.sigmas);
  }
  return j;
}

inline FitTarget target_from_json(const json& j, const std::string& where = "target") {
  check_header(j, "bodyfit.target", where);
  FitTarget t;
  t.vertices = decode_points(j, "vertices");
  if (j.contains("vertex_indices")) {
    t.vertex_indices = decode_indices(j, "vertex_indices", t.vertices.rows());
  }
  t.joints = decode_points(j, "joints");
  if (j.contains("sigmas")) {
    t.sigmas = decode_vector(j, "sigmas", t.vertices.rows() + t.joints.rows());
  }
  return t;
}

inline FitTarget load_target(const std::filesystem::path& path) {
  return target_from_json(load_json_file(path), path.string());
}

inline json pose_to_json(const BodyModel& model, const PoseParams& pose) {
  json j;
  j["rotations"] = encode_rotations(pose.rotations);
  j["rotations_parent_relative"] = encode_rotations(to_parent_relative(model, pose.rotations));
  j["beta"] = encode_vector(pose.beta);
  j["translation"] = encode_vector(pose.translation);
  return j;
}

inline PoseParams pose_from_json(const json& j) {
  PoseParams pose;
  pose.rotations = decode_rotations(j, "rotations");
  pose.beta = decode_vector(j, "beta");
  pose.translation = decode_vector(j, "translation", 3);
  return pose;
}

inline json result_to_json(const BodyModel& model, const FitResult& result, std::optional<double> wall_time_ms) {
  json j = header("bodyfit.result");
  j.update(pose_to_json(model, result.pose));
  json diag{{"per_iteration_vertex_rmse", result.per_iteration_vertex_rmse},
            {"final_vertex_rmse", result.final_vertex_rmse},
            {"final_joint_rmse", result.final_joint_rmse}};
  if (wall_time_ms) {
    diag["wall_time_ms"] = *wall_time_ms;
  }
  j["diagnostics"] = diag;
  return j;
}

inline PoseParams load_pose(const std::filesystem::path& path) {
  return pose_from_json(load_json_file(path));
}

// ---- heatmaps

struct HeatmapFile {
  std::vector<HeatmapStack> stacks;
  Grid grid2d;
  Grid grid3d;
  double depth_extent = kDefaultDepthExtent;
};

inline json grid_to_json(const Grid& g) { return json{{"x0", g.x0}, {"dx", g.dx}, {"y0", g.y0}, {"dy", g.dy}}; }

inline Grid grid_from_json(const json& j) {
  try {
    return {j.at("x0").get<double>(), j.at("dx").get<double>(), j.at("y0").get<double>(), j.at("dy").get<double>()};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("grid: ") + e.what());
  }
}

inline json heatmaps_to_json(const HeatmapFile& file) {
  require(!file.stacks.empty(), ErrorKind::InvalidArgument, "no heatmaps to write");
  const auto& first = file.stacks.front();
  const std::int64_t p = static_cast<std::int64_t>(file.stacks.size());
  const std::int64_t h = first.h3d.height;
  const std::int64_t w = first.h3d.width;
  const std::int64_t d = first.h3d.depth;
  std::vector<float> h3d;
  std::vector<float> h2d;
  std::vector<float> u;
  for (const auto& s : file.stacks) {
    require(s.h3d.height == h && s.h3d.width == w && s.h3d.depth == d && s.h2d.rows() == h && s.h2d.cols() == w &&
                s.u.rows() == h && s.u.cols() == w,
            ErrorKind::Dimension, "all heatmap stacks must share one size");
    h3d.insert(h3d.end(), s.h3d.data.begin(), s.h3d.data.end());
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        h2d.push_back(static_cast<float>(s.h2d(y, x)));
        u.push_back(static_cast<float>(s.u(y, x)));
      }
    }
  }
  json j = header("bodyfit.heatmaps");
  j["h3d"] = encode_array<float>(h3d, {p, h, w, d});
  j["h2d"] = encode_array<float>(h2d, {p, h, w});
  j["u"] = encode_array<float>(u, {p, h, w});
  j["grid2d"] = grid_to_json(file.grid2d);
  j["grid3d"] = grid_to_json(file.grid3d);
  j["depth_extent"] = file.depth_extent;
  return j;
}

inline HeatmapFile heatmaps_from_json(const json& j, const std::string& where = "heatmaps") {
  check_header(j, "bodyfit.heatmaps", where);
  auto h3d = decode_array<double>(field(j, "h3d"), "h3d");
  expect_shape(h3d.shape, {-1, -1, -1, -1}, "h3d");
  const auto p = h3d.shape[0];
  const auto h = h3d.shape[1];
  const auto w = h3d.shape[2];
  const auto d = h3d.shape[3];
  require(h >= 1 && w >= 1 && d >= 1, ErrorKind::InvalidArgument, "heatmap dimensions must be at least 1");
  auto h2d = decode_array<double>(field(j, "h2d"), "h2d");
  expect_shape(h2d.shape, {p, h, w}, "h2d");
  auto u = decode_array<double>(field(j, "u"), "u");
  expect_shape(u.shape, {p, h, w}, "u");

  HeatmapFile out;
  if (j.contains("grid2d")) out.grid2d = grid_from_json(j.at("grid2d"));
  if (j.contains("grid3d")) out.grid3d = grid_from_json(j.at("grid3d"));
  if (j.contains("depth_extent")) out.depth_extent = j.at("depth_extent").get<double>();
  const auto plane = static_cast<std::size_t>(h * w);
  for (std::int64_t i = 0; i < p; ++i) {
    HeatmapStack s;
    s.h3d = Volume(static_cast<int>(h), static_cast<int>(w), static_cast<int>(d));
    std::copy_n(h3d.values.begin() + static_cast<std::ptrdiff_t>(i * plane * d), plane * d, s.h3d.data.begin());
    s.h2d = Eigen::Map<const RowMatrix>(h2d.values.data() + i * plane, h, w);
    s.u = Eigen::Map<const RowMatrix>(u.values.data() + i * plane, h, w);
    out.stacks.push_back(std::move(s));
  }
  return out;
}

// ---- tet meshes, eigenbases, interior weights

inline json mesh_to_json(const TetMesh& mesh) {
  json j = header("bodyfit.tetmesh");
  j["nodes"] = encode_matrix(mesh.nodes);
  std::vector<std::int32_t> tets(mesh.tets.data(), mesh.tets.data() + mesh.tets.size());
  j["tets"] = encode_array<std::int32_t>(tets, {mesh.num_tets(), 4});
  return j;
}

inline TetMesh mesh_from_json(const json& j, const std::string& where = "mesh") {
  check_header(j, "bodyfit.tetmesh", where);
  TetMesh mesh;
  mesh.nodes = decode_points(j, "nodes");
  auto tets = decode_array<int>(field(j, "tets"), "tets");
  expect_shape(tets.shape, {-1, 4}, "tets");
  mesh.tets = Eigen::Map<const TetIndices>(tets.values.data(), tets.shape[0], 4);
  validate_mesh(mesh);
  return mesh;
}

inline TetMesh load_mesh(const std::filesystem::path& path) { return mesh_from_json(load_json_file(path), path.string()); }

inline json basis_to_json(const TetEigenbasis& basis) {
  json j = header("bodyfit.eigenbasis");
  const json mesh = mesh_to_json(basis.mesh);
  j["mesh_sha256"] = sha256_hex(dump(mesh));
  j["mesh"] = mesh;
  j["eigenvalues"] = encode_vector(basis.eigenvalues);
  j["eigenvectors"] = encode_matrix(basis.eigenvectors);
  return j;
}

inline TetEigenbasis basis_from_json(const json& j, const std::string& where = "eigenbasis") {
  check_header(j, "bodyfit.eigenbasis", where);
  TetEigenbasis basis;
  const json& mesh = field(j, "mesh");
  if (j.contains("mesh_sha256") && j.at("mesh_sha256") != sha256_hex(dump(mesh))) {
    throw Error(ErrorKind::Invariant, where + ": embedded mesh does not match mesh_sha256");
  }
  basis.mesh = mesh_from_json(mesh, where + " mesh");
  basis.eigenvalues = decode_vector(j, "eigenvalues");
  basis.eigenvectors = decode_matrix(j, "eigenvectors", basis.mesh.num_nodes(), basis.eigenvalues.size());
  return basis;
}

inline json weights_to_json(const InteriorWeightSet& w) {
  json j = header("bodyfit.interior_weights");
  j["indptr"] = encode_indices(w.indptr);
  j["indices"] = encode_indices(w.indices);
  j["weights"] = encode_array<double>(w.weights, {static_cast<std::int64_t>(w.weights.size())});
  j["canonical_points"] = encode_matrix(w.canonical_points);
  return j;
}

inline InteriorWeightSet weights_from_json(const json& j, const std::string& where = "weights") {
  check_header(j, "bodyfit.interior_weights", where);
  InteriorWeightSet w;
  w.indptr = decode_indices(j, "indptr");
  w.indices = decode_indices(j, "indices");
  auto values = decode_array<double>(field(j, "weights"), "weights");
  expect_shape(values.shape, {static_cast<std::int64_t>(w.indices.size())}, "weights");
  w.weights = std::move(values.values);
  w.canonical_points = decode_points(j, "canonical_points");
  validate_weights(w);
  return w;
}

// ---- plain point sets

inline json points_to_json(const Points& points) {
  json j = header("bodyfit.points");
  j["points"] = encode_matrix(points);
  return j;
}

inline Points points_from_json(const json& j, const std::string& where = "points") {
  check_header(j, "bodyfit.points", where);
  return decode_points(j, "points");
}

}  // namespace bodyfit::io
