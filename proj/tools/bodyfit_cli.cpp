// bodyfit command line: synthetic data, batch fitting, heatmap decoding,
// Laplacian eigenbases and signatures, interior deformation, benchmarks.

#include "bodyfit/bodyfit.hpp"
#include "bodyfit/io/formats.hpp"

#include <CLI11.hpp>

#include <glob.h>

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using bodyfit::io::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

/// Record of one invocation, written as manifest.json next to the outputs.
class Manifest {
 public:
  Manifest(std::string command, int argc, char** argv) : start_(Clock::now()) {
    j_["command"] = std::move(command);
    j_["argv"] = std::vector<std::string>(argv, argv + argc);
    j_["format"] = "bodyfit.manifest";
    j_["format_version"] = bodyfit::io::kFormatVersion;
    j_["inputs"] = json::array();
    j_["outputs"] = json::array();
    j_["wall_time_ms"] = json::object();
  }

  json& config() { return j_["config"]; }

  void input(const fs::path& p) { j_["inputs"].push_back({{"path", p.string()}, {"sha256", bodyfit::io::sha256_file(p)}}); }

  void output(const fs::path& p) {
    j_["outputs"].push_back({{"path", p.string()}, {"sha256", bodyfit::io::sha256_file(p)}});
  }

  void time(const std::string& phase, double ms) { j_["wall_time_ms"][phase] = ms; }

  void write(const fs::path& path) {
    j_["wall_time_ms"]["total"] = ms_since(start_);
    bodyfit::io::write_file(path, bodyfit::io::dump(j_));
  }

 private:
  json j_;
  Clock::time_point start_;
};

/// Writes a JSON document and registers it as an output.
void emit(Manifest& m, const fs::path& path, const json& doc) {
  bodyfit::io::write_file(path, bodyfit::io::dump(doc));
  m.output(path);
}

std::vector<fs::path> expand_glob(const std::string& pattern) {
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<fs::path> out;
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  if (rc != 0 && rc != GLOB_NOMATCH) {
    throw bodyfit::Error(bodyfit::ErrorKind::Io, "glob failed for '" + pattern + "'");
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) {
    throw bodyfit::Error(bodyfit::ErrorKind::Io, "no files match '" + pattern + "'");
  }
  return out;
}

/// "case_0001.target.json" -> "case_0001"
std::string stem_of(const fs::path& p) {
  std::string name = p.filename().string();
  for (const char* suffix : {".target.json", ".json"}) {
    const std::string s(suffix);
    if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) {
      return name.substr(0, name.size() - s.size());
    }
  }
  return name;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string mm(double meters) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << meters * 1e3 << " mm";
  return os.str();
}

json indices_file(const std::vector<int>& idx) {
  json j{{"format", "bodyfit.indices"}, {"format_version", bodyfit::io::kFormatVersion}};
  j["indices"] = bodyfit::io::encode_indices(idx);
  return j;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::uint64_t seed = 0;
  int verts = 602;
  int joints = 16;
  int betas = 10;
  int cases = 10;
  int views = 1;
  double noise = 0.0;
  double max_angle_deg = 60.0;
  double max_beta_norm = 2.0;
  bool heteroscedastic = false;
  double sigma_min = 0.002;
  double sigma_max = 0.02;
  std::string out = "synth";
};

void run_synth(const SynthArgs& a, Manifest& m) {
  const fs::path out(a.out);
  m.config() = {{"seed", a.seed},   {"verts", a.verts},           {"joints", a.joints},
                {"betas", a.betas}, {"cases", a.cases},           {"views", a.views},
                {"noise", a.noise}, {"max_angle_deg", a.max_angle_deg}, {"max_beta_norm", a.max_beta_norm},
                {"heteroscedastic", a.heteroscedastic}, {"sigma_min", a.sigma_min}, {"sigma_max", a.sigma_max}};
  const auto t0 = Clock::now();
  const bodyfit::BodyModel model = bodyfit::make_toy_model(a.seed, a.verts, a.joints, a.betas);
  emit(m, out / "model.json", bodyfit::io::model_to_json(model));

  std::mt19937_64 rng(a.seed ^ 0x5eed5eed5eedULL);
  bodyfit::PoseSampling sampling;
  sampling.max_angle = a.max_angle_deg * std::numbers::pi / 180.0;
  sampling.max_beta_norm = a.max_beta_norm;
  for (int c = 0; c < a.cases; ++c) {
    const Eigen::VectorXd beta = bodyfit::random_beta(rng, model.num_betas(), a.max_beta_norm);
    for (int v = 0; v < a.views; ++v) {
      bodyfit::PoseParams pose = bodyfit::random_pose(model, rng, sampling);
      pose.beta = beta;
      const bodyfit::FitTarget target =
          a.heteroscedastic ? bodyfit::make_heteroscedastic_target(model, pose, a.sigma_min, a.sigma_max, rng)
                            : bodyfit::make_target(model, pose, a.noise, rng);
      std::ostringstream name;
      name << "case_" << std::setw(4) << std::setfill('0') << c;
      if (a.views > 1) name << "_v" << v;
      emit(m, out / "targets" / (name.str() + ".target.json"), bodyfit::io::target_to_json(target));
      json truth = bodyfit::io::pose_to_json(model, pose);
      truth["format"] = "bodyfit.pose";
      truth["format_version"] = bodyfit::io::kFormatVersion;
      emit(m, out / "truth" / (name.str() + ".pose.json"), truth);
    }
  }
  m.time("synth", ms_since(t0));
  std::cout << "synth: model with " << model.num_vertices() << " vertices, " << model.num_joints() << " joints, "
            << model.num_betas() << " betas; " << a.cases * a.views << " targets (noise " << mm(a.noise)
            << (a.heteroscedastic ? ", heteroscedastic" : "") << ") in " << out.string() << "\n";
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string model;
  std::string targets;
  int iters = 3;
  double alpha = 1e-6;
  double lambda = 0.1;
  int unpenalized = 2;
  double uncertainty_exp = 1.5;
  bool uncertainty = false;
  std::string subset;
  int subset_size = 0;
  bool shared_beta = false;
  std::string preset;
  std::uint64_t seed = 0;
  int threads = bodyfit::default_thread_count();
  bool timing = false;
  std::string out = "fit_out";
};

void run_fit(FitArgs a, const CLI::App& sub, Manifest& m) {
  const bodyfit::BodyModel model = bodyfit::io::load_model(a.model);
  m.input(a.model);

  bodyfit::FitConfig cfg;
  int subset_size = a.subset_size;
  if (!a.preset.empty()) {
    if (a.preset != "transfer") {
      throw bodyfit::Error(bodyfit::ErrorKind::InvalidArgument, "unknown preset '" + a.preset + "'");
    }
    // Model-to-model transfer: unregularized shape, one iteration, 4096 vertices.
    if (sub.count("--lambda") == 0) a.lambda = 0.0;
    if (sub.count("--iters") == 0) a.iters = 1;
    if (sub.count("--subset") == 0 && sub.count("--subset-size") == 0 && model.num_vertices() > 4096) {
      subset_size = 4096;
    }
  }
  cfg.n_iters = a.iters;
  cfg.vertex_weight_alpha = a.alpha;
  cfg.shape_cfg.ridge_lambda = a.lambda;
  cfg.shape_cfg.unpenalized_prefix = a.unpenalized;
  cfg.use_uncertainty_weights = a.uncertainty;
  cfg.uncertainty_exponent = a.uncertainty_exp;
  if (!a.subset.empty()) {
    const json j = bodyfit::io::load_json_file(a.subset);
    cfg.vertex_subset = bodyfit::io::decode_indices(j, "indices");
    m.input(a.subset);
  } else if (subset_size > 0) {
    cfg.vertex_subset = bodyfit::stratified_subset(model, subset_size, a.seed);
  }

  m.config() = {{"iters", cfg.n_iters},
                {"alpha", cfg.vertex_weight_alpha},
                {"lambda", cfg.shape_cfg.ridge_lambda},
                {"unpenalized", cfg.shape_cfg.unpenalized_prefix},
                {"uncertainty", cfg.use_uncertainty_weights},
                {"uncertainty_exp", cfg.uncertainty_exponent},
                {"subset_size", cfg.vertex_subset ? static_cast<int>(cfg.vertex_subset->size()) : 0},
                {"shared_beta", a.shared_beta},
                {"preset", a.preset},
                {"seed", a.seed},
                {"threads", a.threads},
                {"timing", a.timing}};

  const auto paths = expand_glob(a.targets);
  std::vector<bodyfit::FitTarget> targets(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) {
    targets[i] = bodyfit::io::load_target(paths[i]);
    m.input(paths[i]);
  }

  const fs::path out(a.out);
  if (cfg.vertex_subset) {
    emit(m, out / "subset.json", indices_file(*cfg.vertex_subset));
  }

  std::vector<bodyfit::FitResult> results(targets.size());
  std::vector<double> times(targets.size(), 0.0);
  const auto t0 = Clock::now();
  if (a.shared_beta) {
    results = bodyfit::fit_shared_beta(model, targets, cfg).results;
    std::fill(times.begin(), times.end(), ms_since(t0));
  } else {
    bodyfit::parallel_for(static_cast<int>(targets.size()), a.threads, [&](int i) {
      const auto start = Clock::now();
      results[i] = bodyfit::fit(model, targets[i], cfg);
      times[i] = ms_since(start);
    });
  }
  m.time("fit", ms_since(t0));

  std::vector<double> vertex_rmse;
  std::vector<double> joint_rmse;
  std::vector<double> curve(static_cast<std::size_t>(cfg.n_iters), 0.0);
  json rows = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    emit(m, out / (stem_of(paths[i]) + ".result.json"),
         bodyfit::io::result_to_json(model, r, a.timing ? std::optional<double>(times[i]) : std::nullopt));
    vertex_rmse.push_back(r.final_vertex_rmse);
    joint_rmse.push_back(r.final_joint_rmse);
    for (int k = 0; k < cfg.n_iters; ++k) curve[k] += r.per_iteration_vertex_rmse[k] / results.size();
    rows.push_back({{"target", paths[i].string()},
                    {"final_vertex_rmse", r.final_vertex_rmse},
                    {"final_joint_rmse", r.final_joint_rmse}});
  }
  const json summary{{"format", "bodyfit.fit_summary"},
                     {"format_version", bodyfit::io::kFormatVersion},
                     {"count", results.size()},
                     {"mean_vertex_rmse", mean(vertex_rmse)},
                     {"median_vertex_rmse", median(vertex_rmse)},
                     {"mean_joint_rmse", mean(joint_rmse)},
                     {"median_joint_rmse", median(joint_rmse)},
                     {"mean_per_iteration_vertex_rmse", curve},
                     {"targets", rows}};
  emit(m, out / "summary.json", summary);

  std::cout << "fit: " << results.size() << " target(s), " << cfg.n_iters << " iteration(s)"
            << (a.shared_beta ? ", shared beta" : "")
            << (cfg.vertex_subset ? ", subset of " + std::to_string(cfg.vertex_subset->size()) + " vertices" : "")
            << "\n";
  std::cout << "  vertex RMSE  mean " << mm(mean(vertex_rmse)) << "  median " << mm(median(vertex_rmse)) << "\n";
  std::cout << "  joint RMSE   mean " << mm(mean(joint_rmse)) << "  median " << mm(median(joint_rmse)) << "\n";
  std::cout << "  mean vertex RMSE per iteration (before refinement):\n";
  for (int k = 0; k < cfg.n_iters; ++k) std::cout << "    iter " << k + 1 << ": " << mm(curve[k]) << "\n";
  std::cout << "  results in " << out.string() << "\n";
}

// ---------------------------------------------------------------- heatmaps

struct SynthHeatmapArgs {
  std::uint64_t seed = 0;
  int points = 24;
  int height = 32;
  int width = 32;
  int depth = 32;
  double spread = 1.5;
  double depth_extent = bodyfit::kDefaultDepthExtent;
  std::string out = "heatmaps.json";
};

/// Gaussian logit bumps at random sub-pixel locations; ground truth goes to <out>.truth.json.
void run_synth_heatmaps(const SynthHeatmapArgs& a, Manifest& m) {
  m.config() = {{"seed", a.seed},   {"points", a.points},   {"height", a.height},
                {"width", a.width}, {"depth", a.depth},     {"spread", a.spread},
                {"depth_extent", a.depth_extent}};
  std::mt19937_64 rng(a.seed);
  std::uniform_real_distribution<double> ux(2.0, a.width - 3.0);
  std::uniform_real_distribution<double> uy(2.0, a.height - 3.0);
  std::uniform_real_distribution<double> uz(2.0, a.depth - 3.0);
  std::uniform_real_distribution<double> uu(-6.0, -2.0);
  bodyfit::io::HeatmapFile file;
  file.grid3d = bodyfit::Grid::centered(a.width, a.height, a.depth_extent, a.depth_extent);
  file.depth_extent = a.depth_extent;
  Eigen::MatrixXd centers(a.points, 3);
  for (int p = 0; p < a.points; ++p) {
    const double cx = ux(rng), cy = uy(rng), cz = uz(rng), u = uu(rng);
    centers.row(p) << cx, cy, cz;
    bodyfit::HeatmapStack s;
    s.h3d = bodyfit::Volume(a.height, a.width, a.depth);
    s.h2d.resize(a.height, a.width);
    s.u = Eigen::MatrixXd::Constant(a.height, a.width, u);
    const double k = 0.5 / (a.spread * a.spread);
    for (int y = 0; y < a.height; ++y) {
      for (int x = 0; x < a.width; ++x) {
        const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        s.h2d(y, x) = -k * r2;
        for (int z = 0; z < a.depth; ++z) s.h3d.at(y, x, z) = -k * (r2 + (z - cz) * (z - cz));
      }
    }
    file.stacks.push_back(std::move(s));
  }
  const fs::path out(a.out);
  emit(m, out, bodyfit::io::heatmaps_to_json(file));
  json truth{{"format", "bodyfit.heatmap_truth"}, {"format_version", bodyfit::io::kFormatVersion}};
  truth["peak_cells"] = bodyfit::io::encode_matrix(centers);
  // Peaks in the coordinates decode reports: pixels for 2D, grid3d and metric depth for 3D.
  Eigen::MatrixX2d xy(a.points, 2);
  bodyfit::Points xyz(a.points, 3);
  const auto& g = file.grid3d;
  for (int p = 0; p < a.points; ++p) {
    xy.row(p) << centers(p, 0), centers(p, 1);
    xyz.row(p) << g.x0 + g.dx * centers(p, 0), g.y0 + g.dy * centers(p, 1),
        -0.5 * a.depth_extent + (centers(p, 2) + 0.5) * a.depth_extent / a.depth;
  }
  truth["xy"] = bodyfit::io::encode_matrix(xy);
  truth["xyz_rootrel"] = bodyfit::io::encode_matrix(xyz);
  fs::path truth_path = out;
  truth_path.replace_extension(".truth.json");
  emit(m, truth_path, truth);
  std::cout << "synth-heatmaps: " << a.points << " stacks of " << a.height << "x" << a.width << "x" << a.depth
            << " written to " << out.string() << "\n";
}

struct DecodeArgs {
  std::string heatmaps;
  std::vector<double> intrinsics;
  double epsilon = bodyfit::kDefaultSigmaEpsilon;
  double depth_extent = 0.0;
  int threads = bodyfit::default_thread_count();
  std::string out = "decoded.json";
};

void run_decode(const DecodeArgs& a, Manifest& m) {
  const auto file = bodyfit::io::heatmaps_from_json(bodyfit::io::load_json_file(a.heatmaps), a.heatmaps);
  m.input(a.heatmaps);
  const double extent = a.depth_extent > 0.0 ? a.depth_extent : file.depth_extent;
  m.config() = {{"epsilon", a.epsilon}, {"depth_extent", extent}, {"intrinsics", a.intrinsics}, {"threads", a.threads}};

  const int n = static_cast<int>(file.stacks.size());
  std::vector<bodyfit::DecodedPoint> decoded(n);
  const auto t0 = Clock::now();
  bodyfit::parallel_for(n, a.threads, [&](int i) {
    decoded[i] = bodyfit::decode(file.stacks[i], file.grid2d, file.grid3d, extent, a.epsilon);
  });
  Eigen::MatrixX2d xy(n, 2);
  bodyfit::Points xyz(n, 3);
  Eigen::VectorXd sigma(n);
  for (int i = 0; i < n; ++i) {
    xy.row(i) = decoded[i].xy.transpose();
    xyz.row(i) = decoded[i].xyz_rootrel.transpose();
    sigma(i) = decoded[i].sigma;
  }
  json doc{{"format", "bodyfit.decoded"}, {"format_version", bodyfit::io::kFormatVersion}};
  doc["xy"] = bodyfit::io::encode_matrix(xy);
  doc["xyz_rootrel"] = bodyfit::io::encode_matrix(xyz);
  doc["sigma"] = bodyfit::io::encode_vector(sigma);
  if (!a.intrinsics.empty()) {
    if (a.intrinsics.size() != 4) {
      throw bodyfit::Error(bodyfit::ErrorKind::InvalidArgument, "--intrinsics expects fx,fy,cx,cy");
    }
    Eigen::Matrix3d k;
    k << a.intrinsics[0], 0, a.intrinsics[2], 0, a.intrinsics[1], a.intrinsics[3], 0, 0, 1;
    const Eigen::Vector3d t = bodyfit::camera_translation(xy, xyz, k);
    doc["camera_translation"] = bodyfit::io::encode_vector(t);
    doc["xyz_camera"] = bodyfit::io::encode_matrix(bodyfit::Points(xyz.rowwise() + t.transpose()));
  }
  m.time("decode", ms_since(t0));
  emit(m, a.out, doc);
  std::cout << "decode: " << n << " point(s); mean sigma " << sigma.mean() << " m; written to " << a.out << "\n";
}

// ---------------------------------------------------------------- meshes and signatures

void run_cube(int divisions, const std::string& out, Manifest& m) {
  m.config() = {{"divisions", divisions}};
  const auto mesh = bodyfit::unit_cube_mesh(divisions);
  emit(m, out, bodyfit::io::mesh_to_json(mesh));
  std::cout << "cube: " << mesh.num_nodes() << " nodes, " << mesh.num_tets() << " tets written to " << out << "\n";
}

void run_eigs(const std::string& mesh_path, int num, const std::string& out, Manifest& m) {
  const auto mesh = bodyfit::io::load_mesh(mesh_path);
  m.input(mesh_path);
  m.config() = {{"num", num}};
  const auto t0 = Clock::now();
  const auto basis = bodyfit::eigenbasis(mesh, num);
  m.time("eigensolve", ms_since(t0));
  emit(m, out, bodyfit::io::basis_to_json(basis));
  std::cout << "eigs: " << num << " nonconstant eigenpairs on " << mesh.num_nodes() << " nodes in "
            << std::fixed << std::setprecision(1) << ms_since(t0) / 1e3 << " s\n  lowest:";
  std::cout << std::setprecision(4);
  for (int i = 0; i < std::min(num, 8); ++i) std::cout << " " << basis.eigenvalues(i);
  std::cout << "\n";
}

void run_gps(const std::string& basis_path, const std::string& points_path, const std::string& out, Manifest& m) {
  const auto basis = bodyfit::io::basis_from_json(bodyfit::io::load_json_file(basis_path), basis_path);
  m.input(basis_path);
  const auto points = bodyfit::io::points_from_json(bodyfit::io::load_json_file(points_path), points_path);
  m.input(points_path);
  const bodyfit::SignatureField field(basis);
  Eigen::MatrixXd values(points.rows(), field.dimension());
  for (Eigen::Index i = 0; i < points.rows(); ++i) values.row(i) = field(points.row(i).transpose()).transpose();
  json doc{{"format", "bodyfit.gps"}, {"format_version", bodyfit::io::kFormatVersion}};
  doc["gps"] = bodyfit::io::encode_matrix(values);
  emit(m, out, doc);
  std::cout << "gps: " << points.rows() << " point(s), " << field.dimension() << " dims written to " << out << "\n";
}

struct DistillArgs {
  std::string basis;
  int features = 64;
  double scale = 4.0;
  int samples = 2000;
  int holdout = 500;
  double ridge = 1e-8;
  std::uint64_t seed = 0;
  std::string out = "readout.json";
};

/// Draws points uniformly inside the mesh bounding box and keeps those inside the mesh.
bodyfit::Points sample_inside(const bodyfit::TetLocator& locator, int count, std::mt19937_64& rng) {
  const auto& nodes = locator.mesh().nodes;
  const Eigen::Vector3d lo = nodes.colwise().minCoeff();
  const Eigen::Vector3d hi = nodes.colwise().maxCoeff();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bodyfit::Points out(count, 3);
  for (int i = 0; i < count;) {
    const Eigen::Vector3d p = lo + (hi - lo).cwiseProduct(Eigen::Vector3d(u(rng), u(rng), u(rng)));
    if (locator.locate(p)) out.row(i++) = p.transpose();
  }
  return out;
}

void run_distill(const DistillArgs& a, Manifest& m) {
  const auto basis = bodyfit::io::basis_from_json(bodyfit::io::load_json_file(a.basis), a.basis);
  m.input(a.basis);
  m.config() = {{"features", a.features}, {"scale", a.scale}, {"samples", a.samples}, {"holdout", a.holdout},
                {"ridge", a.ridge},       {"seed", a.seed}};
  const bodyfit::SignatureField field(basis);
  const bodyfit::TetLocator locator(basis.mesh);
  std::mt19937_64 rng(a.seed);
  std::normal_distribution<double> normal(0.0, a.scale);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  Eigen::MatrixX3d b(a.features, 3);
  Eigen::VectorXd bias(a.features);
  for (int f = 0; f < a.features; ++f) {
    b.row(f) << normal(rng), normal(rng), normal(rng);
    bias(f) = phase(rng);
  }
  auto evaluate = [&](const bodyfit::Points& pts) {
    Eigen::MatrixXd g(pts.rows(), field.dimension());
    for (Eigen::Index i = 0; i < pts.rows(); ++i) g.row(i) = field(pts.row(i).transpose()).transpose();
    return g;
  };
  const bodyfit::Points train = sample_inside(locator, a.samples, rng);
  const bodyfit::Points test = sample_inside(locator, a.holdout, rng);
  const Eigen::MatrixXd readout =
      bodyfit::fit_readout(bodyfit::fourier_feature_matrix(b, bias, train), evaluate(train), a.ridge);
  const Eigen::MatrixXd truth = evaluate(test);
  const Eigen::MatrixXd pred = bodyfit::fourier_feature_matrix(b, bias, test) * readout;
  const double rel = ((pred - truth).rowwise().norm().array() / truth.rowwise().norm().array()).mean();

  json doc{{"format", "bodyfit.readout"}, {"format_version", bodyfit::io::kFormatVersion}};
  doc["frequencies"] = bodyfit::io::encode_matrix(b);
  doc["bias"] = bodyfit::io::encode_vector(bias);
  doc["readout"] = bodyfit::io::encode_matrix(readout);
  doc["holdout_mean_relative_error"] = rel;
  emit(m, a.out, doc);
  std::cout << "distill: " << a.features << " Fourier features, held-out mean relative error " << rel << "\n";
}

// ---------------------------------------------------------------- deform

struct DeformArgs {
  std::string model;
  std::string pose;
  std::string points;
  std::string weights;
  int k = 8;
  double power = 2.0;
  std::string out = "deformed.json";
};

void run_deform(const DeformArgs& a, Manifest& m) {
  const auto model = bodyfit::io::load_model(a.model);
  m.input(a.model);
  const auto pose_json = bodyfit::io::load_json_file(a.pose);
  m.input(a.pose);
  const bodyfit::PoseParams pose = bodyfit::io::pose_from_json(pose_json);
  m.config() = {{"k", a.k}, {"power", a.power}};

  bodyfit::InteriorWeightSet weights;
  if (!a.weights.empty()) {
    weights = bodyfit::io::weights_from_json(bodyfit::io::load_json_file(a.weights), a.weights);
    m.input(a.weights);
  } else {
    if (a.points.empty()) {
      throw bodyfit::Error(bodyfit::ErrorKind::InvalidArgument, "deform needs --weights or --points");
    }
    const auto canonical = bodyfit::io::points_from_json(bodyfit::io::load_json_file(a.points), a.points);
    m.input(a.points);
    weights = bodyfit::knn_idw_weights(model.template_vertices(), canonical, a.k, a.power);
    fs::path wpath(a.out);
    wpath.replace_extension(".weights.json");
    emit(m, wpath, bodyfit::io::weights_to_json(weights));
  }
  bodyfit::validate_weights(weights, model.num_vertices());
  const auto posed = bodyfit::forward(model, pose);
  emit(m, a.out, bodyfit::io::points_to_json(bodyfit::deform_points(weights, posed.vertices)));
  std::cout << "deform: " << weights.point_count() << " interior point(s) written to " << a.out << "\n";
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string model;
  std::vector<int> batches{256};
  std::vector<double> fractions{1.0, 1.0 / 6.0};
  int iters = 3;
  double noise = 0.0;
  int repeats = 1;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = "bench.csv";
};

void run_bench(const BenchArgs& a, Manifest& m) {
  const bodyfit::BodyModel model =
      a.model.empty() ? bodyfit::make_toy_model(a.seed, 602, 16, 10) : bodyfit::io::load_model(a.model);
  if (!a.model.empty()) m.input(a.model);
  m.config() = {{"batches", a.batches}, {"fractions", a.fractions}, {"iters", a.iters}, {"noise", a.noise},
                {"repeats", a.repeats}, {"seed", a.seed},           {"threads", a.threads}};
  const int max_batch = *std::max_element(a.batches.begin(), a.batches.end());
  std::mt19937_64 rng(a.seed);
  std::vector<bodyfit::FitTarget> targets;
  for (int i = 0; i < max_batch; ++i) {
    targets.push_back(bodyfit::make_target(model, bodyfit::random_pose(model, rng), a.noise, rng));
  }

  std::ostringstream csv;
  csv << "batch,subset_size,iters,threads,repeats,total_ms,per_fit_ms,fits_per_second,mean_vertex_rmse\n";
  std::cout << "bench: " << std::setw(6) << "batch" << std::setw(8) << "subset" << std::setw(12) << "ms/fit"
            << std::setw(14) << "vertex RMSE\n";
  for (int batch : a.batches) {
    for (double frac : a.fractions) {
      const int size = std::clamp(static_cast<int>(std::lround(frac * model.num_vertices())), 1, model.num_vertices());
      bodyfit::FitConfig cfg;
      cfg.n_iters = a.iters;
      if (size < model.num_vertices()) cfg.vertex_subset = bodyfit::stratified_subset(model, size, a.seed);
      std::vector<double> rmse(batch);
      double best = std::numeric_limits<double>::infinity();
      for (int r = 0; r < a.repeats; ++r) {
        const auto t0 = Clock::now();
        bodyfit::parallel_for(batch, a.threads,
                              [&](int i) { rmse[i] = bodyfit::fit(model, targets[i], cfg).final_vertex_rmse; });
        best = std::min(best, ms_since(t0));
      }
      const double per_fit = best / batch;
      csv << batch << "," << size << "," << a.iters << "," << a.threads << "," << a.repeats << "," << best << ","
          << per_fit << "," << 1e3 / per_fit << "," << mean(rmse) << "\n";
      std::cout << "       " << std::setw(6) << batch << std::setw(8) << size << std::setw(12) << std::fixed
                << std::setprecision(3) << per_fit << std::setw(14) << mm(mean(rmse)) << "\n";
    }
  }
  bodyfit::io::write_file(a.out, csv.str());
  m.output(a.out);
}

fs::path manifest_path(const std::string& out, bool out_is_dir) {
  const fs::path p(out);
  if (out_is_dir) return p / "manifest.json";
  fs::path q = p;
  q.replace_extension(".manifest.json");
  return q;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bodyfit: parametric body model fitting and decoding tools"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a toy model with synthetic targets and ground truth");
  s->add_option("--seed", synth.seed);
  s->add_option("--verts", synth.verts)->capture_default_str();
  s->add_option("--joints", synth.joints)->capture_default_str();
  s->add_option("--betas", synth.betas)->capture_default_str();
  s->add_option("--cases", synth.cases)->capture_default_str();
  s->add_option("--views", synth.views, "poses per subject sharing one beta")->capture_default_str();
  s->add_option("--noise", synth.noise, "isotropic vertex/joint noise, meters")->capture_default_str();
  s->add_option("--max-angle", synth.max_angle_deg, "per-part rotation bound, degrees")->capture_default_str();
  s->add_option("--max-beta-norm", synth.max_beta_norm)->capture_default_str();
  s->add_flag("--heteroscedastic", synth.heteroscedastic, "per-point sigmas with matching noise");
  s->add_option("--sigma-min", synth.sigma_min)->capture_default_str();
  s->add_option("--sigma-max", synth.sigma_max)->capture_default_str();
  s->add_option("--out", synth.out, "output directory")->capture_default_str();

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "fit the body model to target files");
  f->add_option("--model", fit.model)->required();
  f->add_option("--targets", fit.targets, "glob of target files")->required();
  f->add_option("--iters", fit.iters)->capture_default_str();
  f->add_option("--alpha", fit.alpha, "vertex weight in the rotation step")->capture_default_str();
  f->add_option("--lambda", fit.lambda, "ridge weight on beta")->capture_default_str();
  f->add_option("--unpenalized", fit.unpenalized, "leading betas without ridge")->capture_default_str();
  f->add_flag("--uncertainty", fit.uncertainty, "weight points by sigma^-exp (targets must carry sigmas)");
  f->add_option("--uncertainty-exp", fit.uncertainty_exp)->capture_default_str();
  f->add_option("--subset", fit.subset, "file with vertex indices to fit");
  f->add_option("--subset-size", fit.subset_size, "stratified random subset of this many vertices");
  f->add_flag("--shared-beta", fit.shared_beta, "one beta for all targets");
  f->add_option("--preset", fit.preset, "transfer: lambda 0, 1 iteration, 4096 vertices");
  f->add_option("--seed", fit.seed);
  f->add_option("--threads", fit.threads)->capture_default_str();
  f->add_flag("--timing", fit.timing, "record wall_time_ms in result files");
  f->add_option("--out", fit.out, "output directory")->capture_default_str();

  SynthHeatmapArgs shm;
  auto* sh = app.add_subcommand("synth-heatmaps", "generate Gaussian heatmap stacks with known peaks");
  sh->add_option("--seed", shm.seed);
  sh->add_option("--points", shm.points)->capture_default_str();
  sh->add_option("--height", shm.height)->capture_default_str();
  sh->add_option("--width", shm.width)->capture_default_str();
  sh->add_option("--depth", shm.depth)->capture_default_str();
  sh->add_option("--spread", shm.spread, "bump standard deviation in cells")->capture_default_str();
  sh->add_option("--depth-extent", shm.depth_extent)->capture_default_str();
  sh->add_option("--out", shm.out)->capture_default_str();

  DecodeArgs dec;
  auto* d = app.add_subcommand("decode", "decode heatmap stacks to coordinates and sigmas");
  d->add_option("--heatmaps", dec.heatmaps)->required();
  d->add_option("--intrinsics", dec.intrinsics, "fx,fy,cx,cy for camera-space fusion")->delimiter(',');
  d->add_option("--epsilon", dec.epsilon)->capture_default_str();
  d->add_option("--depth-extent", dec.depth_extent, "override the file's depth extent, meters");
  d->add_option("--threads", dec.threads)->capture_default_str();
  d->add_option("--out", dec.out)->capture_default_str();

  int divisions = 15;
  std::string cube_out = "cube.json";
  auto* c = app.add_subcommand("cube", "write a unit-cube tetrahedral mesh");
  c->add_option("--divisions", divisions)->capture_default_str();
  c->add_option("--out", cube_out)->capture_default_str();

  std::string eig_mesh;
  int eig_num = 32;
  std::string eig_out = "basis.json";
  auto* e = app.add_subcommand("eigs", "Laplacian eigenbasis of a tet mesh");
  e->add_option("--mesh", eig_mesh)->required();
  e->add_option("--num", eig_num)->capture_default_str();
  e->add_option("--out", eig_out)->capture_default_str();

  std::string gps_basis, gps_points, gps_out = "gps.json";
  auto* g = app.add_subcommand("gps", "evaluate global point signatures");
  g->add_option("--basis", gps_basis)->required();
  g->add_option("--points", gps_points)->required();
  g->add_option("--out", gps_out)->capture_default_str();

  DistillArgs dis;
  auto* ds = app.add_subcommand("distill", "fit a Fourier-feature linear readout to signatures");
  ds->add_option("--basis", dis.basis)->required();
  ds->add_option("--features", dis.features)->capture_default_str();
  ds->add_option("--scale", dis.scale, "frequency standard deviation")->capture_default_str();
  ds->add_option("--samples", dis.samples)->capture_default_str();
  ds->add_option("--holdout", dis.holdout)->capture_default_str();
  ds->add_option("--ridge", dis.ridge)->capture_default_str();
  ds->add_option("--seed", dis.seed);
  ds->add_option("--out", dis.out)->capture_default_str();

  DeformArgs def;
  auto* df = app.add_subcommand("deform", "move interior points with a posed model");
  df->add_option("--model", def.model)->required();
  df->add_option("--pose", def.pose, "pose or result file")->required();
  df->add_option("--points", def.points, "canonical interior points (weights built by kNN IDW)");
  df->add_option("--weights", def.weights, "precomputed interior weights");
  df->add_option("--k", def.k)->capture_default_str();
  df->add_option("--power", def.power)->capture_default_str();
  df->add_option("--out", def.out)->capture_default_str();

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "time batch fitting for several subset sizes");
  b->add_option("--model", bench.model, "model file (default: toy model)");
  b->add_option("--batch", bench.batches, "batch sizes")->delimiter(',');
  b->add_option("--fractions", bench.fractions, "vertex subset fractions")->delimiter(',');
  b->add_option("--iters", bench.iters)->capture_default_str();
  b->add_option("--noise", bench.noise)->capture_default_str();
  b->add_option("--repeats", bench.repeats)->capture_default_str();
  b->add_option("--seed", bench.seed);
  b->add_option("--threads", bench.threads)->capture_default_str();
  b->add_option("--out", bench.out)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  const CLI::App* chosen = app.get_subcommands().front();
  try {
    Manifest manifest(chosen->get_name(), argc, argv);
    fs::path mpath;
    if (chosen == s) {
      run_synth(synth, manifest);
      mpath = manifest_path(synth.out, true);
    } else if (chosen == f) {
      run_fit(fit, *f, manifest);
      mpath = manifest_path(fit.out, true);
    } else if (chosen == sh) {
      run_synth_heatmaps(shm, manifest);
      mpath = manifest_path(shm.out, false);
    } else if (chosen == d) {
      run_decode(dec, manifest);
      mpath = manifest_path(dec.out, false);
    } else if (chosen == c) {
      run_cube(divisions, cube_out, manifest);
      mpath = manifest_path(cube_out, false);
    } else if (chosen == e) {
      run_eigs(eig_mesh, eig_num, eig_out, manifest);
      mpath = manifest_path(eig_out, false);
    } else if (chosen == g) {
      run_gps(gps_basis, gps_points, gps_out, manifest);
      mpath = manifest_path(gps_out, false);
    } else if (chosen == ds) {
      run_distill(dis, manifest);
      mpath = manifest_path(dis.out, false);
    } else if (chosen == df) {
      run_deform(def, manifest);
      mpath = manifest_path(def.out, false);
    } else if (chosen == b) {
      run_bench(bench, manifest);
      mpath = manifest_path(bench.out, false);
    }
    manifest.write(mpath);
  } catch (const bodyfit::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
