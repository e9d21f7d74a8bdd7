// SPDX-License-Identifier: Apache-2.0
#include "t2s/voxelize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "t2s/color.hpp"
#include "t2s/error.hpp"
#include "t2s/rng.hpp"

namespace t2s::voxelize {
namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm3(const Vec3& a) { return std::sqrt(dot3(a, a)); }
Vec3 scaled(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

Vec3 area_centroid(const ColoredMesh& mesh) {
  Vec3 c{};
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    const double a = mesh.face_area(f);
    const auto& t = mesh.triangles[f];
    for (int k = 0; k < 3; ++k) {
      for (int d = 0; d < 3; ++d) c[d] += a * mesh.vertices[t[k]][d] / 3.0;
    }
    total += a;
  }
  if (total <= 0.0) throw InvalidArgument("mesh has zero surface area");
  return scaled(c, 1.0 / total);
}

}  // namespace

void ColoredMesh::validate() const {
  if (face_colors.size() != triangles.size() || face_material.size() != triangles.size()) {
    throw InvalidArgument("mesh face attribute arrays differ in length");
  }
  const auto nv = static_cast<std::int64_t>(vertices.size());
  for (const auto& t : triangles) {
    for (auto i : t) {
      if (i < 0 || i >= nv) throw InvalidArgument("triangle references vertex " + std::to_string(i));
    }
  }
  for (int m : face_material) {
    if (m < 0 || m >= static_cast<int>(material_names.size())) throw InvalidArgument("face material out of range");
  }
}

double ColoredMesh::face_area(std::size_t f) const {
  const auto& t = triangles[f];
  return 0.5 * norm3(cross(sub(vertices[t[1]], vertices[t[0]]), sub(vertices[t[2]], vertices[t[0]])));
}

Vec3 ColoredMesh::face_normal(std::size_t f) const {
  const auto& t = triangles[f];
  const Vec3 n = cross(sub(vertices[t[1]], vertices[t[0]]), sub(vertices[t[2]], vertices[t[0]]));
  const double len = norm3(n);
  return len > 0 ? scaled(n, 1.0 / len) : Vec3{};
}

void ColoredMesh::remove_degenerate() {
  std::size_t out = 0;
  for (std::size_t f = 0; f < triangles.size(); ++f) {
    if (face_area(f) <= 1e-14) continue;
    triangles[out] = triangles[f];
    face_colors[out] = face_colors[f];
    face_material[out] = face_material[f];
    ++out;
  }
  triangles.resize(out);
  face_colors.resize(out);
  face_material.resize(out);
}

namespace {

std::map<std::string, Rgb> load_mtl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open material library " + path.string());
  std::map<std::string, Rgb> out;
  std::string line, current;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "newmtl") {
      ls >> current;
      out[current] = {0.8, 0.8, 0.8};
    } else if (key == "Kd" && !current.empty()) {
      Rgb c;
      if (!(ls >> c.r >> c.g >> c.b)) throw FormatError(path.string() + ": malformed Kd line");
      out[current] = {std::clamp(c.r, 0.0, 1.0), std::clamp(c.g, 0.0, 1.0), std::clamp(c.b, 0.0, 1.0)};
    }
  }
  return out;
}

}  // namespace

ColoredMesh load_obj(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open mesh " + path.string());
  ColoredMesh mesh;
  std::map<std::string, Rgb> library;
  std::map<std::string, int> material_ids;
  int current = -1;
  auto material = [&](const std::string& name) {
    const auto it = material_ids.find(name);
    if (it != material_ids.end()) return it->second;
    const int id = static_cast<int>(mesh.material_names.size());
    mesh.material_names.push_back(name);
    material_ids[name] = id;
    return id;
  };
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key[0] == '#') continue;
    if (key == "v") {
      Vec3 v;
      if (!(ls >> v[0] >> v[1] >> v[2])) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad vertex");
      mesh.vertices.push_back(v);
    } else if (key == "mtllib") {
      std::string file;
      ls >> file;
      for (auto& [k, c] : load_mtl(path.parent_path() / file)) library[k] = c;
    } else if (key == "usemtl") {
      std::string name;
      ls >> name;
      current = material(name);
    } else if (key == "f") {
      std::vector<std::int64_t> idx;
      std::string tok;
      while (ls >> tok) {
        std::int64_t i = 0;
        try {
          i = std::stoll(tok.substr(0, tok.find('/')));
        } catch (const std::exception&) {
          throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad face index '" + tok + "'");
        }
        i = i < 0 ? static_cast<std::int64_t>(mesh.vertices.size()) + i : i - 1;
        idx.push_back(i);
      }
      if (idx.size() < 3) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": face with < 3 vertices");
      if (current < 0) current = material("default");
      const std::string& mname = mesh.material_names[static_cast<std::size_t>(current)];
      const auto lib = library.find(mname);
      const Rgb color = lib == library.end() ? Rgb{0.8, 0.8, 0.8} : lib->second;
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
        mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
        mesh.face_colors.push_back(color);
        mesh.face_material.push_back(current);
      }
    }
  }
  mesh.validate();
  mesh.remove_degenerate();
  if (mesh.triangles.empty()) throw FormatError(path.string() + " contains no usable triangles");
  return mesh;
}

std::vector<bool> mark_visible_faces(const ColoredMesh& mesh, int n_views, int rays) {
  if (mesh.triangles.empty()) throw InvalidArgument("mark_visible_faces on an empty mesh");
  if (n_views < 4) throw InvalidArgument("need at least 4 views");
  if (rays < 1) throw InvalidArgument("rays_per_side must be positive");
  const Vec3 c = area_centroid(mesh);
  double radius = 0.0;
  for (const auto& v : mesh.vertices) radius = std::max(radius, norm3(sub(v, c)));
  radius = radius * 1.001 + 1e-12;
  const int azimuths = n_views / 2;
  const double pixel = 2.0 * radius / rays;
  std::vector<bool> visible(mesh.face_count(), false);
  std::vector<double> depth(static_cast<std::size_t>(rays) * rays);
  std::vector<std::int64_t> owner(depth.size());
  std::vector<std::array<double, 3>> proj(mesh.vertices.size());
  for (int e = 0; e < 2; ++e) {
    const double elev = (e == 0 ? 30.0 : -30.0) * std::numbers::pi / 180.0;
    for (int a = 0; a < azimuths; ++a) {
      const double az = 2.0 * std::numbers::pi * a / azimuths;
      const Vec3 d{std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az), std::sin(elev)};
      Vec3 u = cross(Vec3{0, 0, 1}, d);
      u = scaled(u, 1.0 / norm3(u));
      const Vec3 w = cross(d, u);
      for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3 p = sub(mesh.vertices[i], c);
        proj[i] = {dot3(p, u), dot3(p, w), -dot3(p, d)};
      }
      std::fill(depth.begin(), depth.end(), std::numeric_limits<double>::infinity());
      std::fill(owner.begin(), owner.end(), -1);
      for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const auto& t = mesh.triangles[f];
        const auto& p0 = proj[t[0]];
        const auto& p1 = proj[t[1]];
        const auto& p2 = proj[t[2]];
        const double area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        if (std::abs(area) < 1e-300) continue;
        const double lo_x = std::min({p0[0], p1[0], p2[0]}), hi_x = std::max({p0[0], p1[0], p2[0]});
        const double lo_y = std::min({p0[1], p1[1], p2[1]}), hi_y = std::max({p0[1], p1[1], p2[1]});
        const int i0 = std::max(0, static_cast<int>(std::ceil((lo_x + radius) / pixel - 0.5)));
        const int i1 = std::min(rays - 1, static_cast<int>(std::floor((hi_x + radius) / pixel - 0.5)));
        const int j0 = std::max(0, static_cast<int>(std::ceil((lo_y + radius) / pixel - 0.5)));
        const int j1 = std::min(rays - 1, static_cast<int>(std::floor((hi_y + radius) / pixel - 0.5)));
        for (int j = j0; j <= j1; ++j) {
          const double y = -radius + (j + 0.5) * pixel;
          for (int i = i0; i <= i1; ++i) {
            const double x = -radius + (i + 0.5) * pixel;
            const double b0 = ((p1[0] - x) * (p2[1] - y) - (p2[0] - x) * (p1[1] - y)) / area;
            const double b1 = ((p2[0] - x) * (p0[1] - y) - (p0[0] - x) * (p2[1] - y)) / area;
            const double b2 = 1.0 - b0 - b1;
            if (b0 < 0 || b1 < 0 || b2 < 0) continue;
            const double z = b0 * p0[2] + b1 * p1[2] + b2 * p2[2];
            const std::size_t px = static_cast<std::size_t>(j) * rays + i;
            if (z < depth[px]) {
              depth[px] = z;
              owner[px] = static_cast<std::int64_t>(f);
            }
          }
        }
      }
      for (auto o : owner) {
        if (o >= 0) visible[static_cast<std::size_t>(o)] = true;
      }
    }
  }
  return visible;
}

namespace {

struct FacePool {
  std::vector<std::size_t> faces;
  std::vector<double> cdf;
  double total = 0.0;
};

FacePool make_pool(const ColoredMesh& mesh, const std::vector<bool>& include) {
  FacePool pool;
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    if (!include[f]) continue;
    const double a = mesh.face_area(f);
    if (a <= 0) continue;
    pool.total += a;
    pool.faces.push_back(f);
    pool.cdf.push_back(pool.total);
  }
  return pool;
}

void draw(const ColoredMesh& mesh, const FacePool& pool, std::size_t n, const Vec3& centroid, Rng& rng,
          SampleCloud& cloud) {
  for (std::size_t s = 0; s < n; ++s) {
    const double r = rng.uniform() * pool.total;
    auto it = std::upper_bound(pool.cdf.begin(), pool.cdf.end(), r);
    if (it == pool.cdf.end()) --it;
    const std::size_t f = pool.faces[static_cast<std::size_t>(it - pool.cdf.begin())];
    const auto& t = mesh.triangles[f];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    Vec3 p{};
    for (int d = 0; d < 3; ++d) {
      p[d] = (1 - r1) * mesh.vertices[t[0]][d] + r1 * (1 - r2) * mesh.vertices[t[1]][d] +
             r1 * r2 * mesh.vertices[t[2]][d];
    }
    cloud.points.push_back(p);
    cloud.colors.push_back(mesh.face_colors[f]);
    cloud.weights.push_back(dot3(mesh.face_normal(f), sub(p, centroid)) > 0 ? 2 : 1);
    cloud.source_face.push_back(static_cast<std::int64_t>(f));
  }
}

}  // namespace

SampleCloud sample_surface(const ColoredMesh& mesh, const std::vector<bool>& visible, std::size_t n_samples,
                           std::uint64_t seed) {
  if (n_samples < 1) throw InvalidArgument("n_samples must be positive");
  if (visible.size() != mesh.face_count()) throw InvalidArgument("visibility mask size differs from face count");
  const Vec3 centroid = area_centroid(mesh);

  std::vector<bool> pass2(mesh.face_count(), true);
  if (mesh.material_names.size() > 1) {
    std::vector<double> vis_area(mesh.material_names.size(), 0.0);
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
      if (visible[f]) vis_area[static_cast<std::size_t>(mesh.face_material[f])] += mesh.face_area(f);
    }
    // Only materials that own faces compete for "least visible".
    std::vector<bool> used(mesh.material_names.size(), false);
    for (int m : mesh.face_material) used[static_cast<std::size_t>(m)] = true;
    int worst = -1;
    for (std::size_t m = 0; m < vis_area.size(); ++m) {
      if (used[m] && (worst < 0 || vis_area[m] < vis_area[static_cast<std::size_t>(worst)])) worst = static_cast<int>(m);
    }
    for (std::size_t f = 0; f < mesh.face_count(); ++f) pass2[f] = mesh.face_material[f] != worst;
  }
  FacePool first = make_pool(mesh, visible);
  FacePool second = make_pool(mesh, pass2);
  if (first.faces.empty() && second.faces.empty()) throw InvalidArgument("no faces available for sampling");
  if (first.faces.empty()) first = second;
  if (second.faces.empty()) second = first;

  Rng rng(hash_seed({seed, 0x5a3bULL}));
  SampleCloud cloud;
  const std::size_t n1 = n_samples / 2;
  draw(mesh, first, n1, centroid, rng, cloud);
  draw(mesh, second, n_samples - n1, centroid, rng, cloud);
  return cloud;
}

Vec3 GridFrame::to_grid(const Vec3& p) const {
  const double half = resolution / 2.0;
  return {(p[0] - center[0]) / voxel_size + half, (p[1] - center[1]) / voxel_size + half,
          (p[2] - center[2]) / voxel_size + half};
}

GridFrame frame_for(const ColoredMesh& mesh, int resolution, int margin) {
  if (mesh.vertices.empty()) throw InvalidArgument("frame_for on an empty mesh");
  const int span = resolution - 2 * margin - 1;
  if (span < 1) throw InvalidArgument("resolution too small for the margin");
  Vec3 lo = mesh.vertices[0], hi = mesh.vertices[0];
  for (const auto& v : mesh.vertices) {
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], v[d]);
      hi[d] = std::max(hi[d], v[d]);
    }
  }
  GridFrame f;
  f.resolution = resolution;
  double extent = 0.0;
  for (int d = 0; d < 3; ++d) {
    f.center[d] = 0.5 * (lo[d] + hi[d]);
    extent = std::max(extent, hi[d] - lo[d]);
  }
  f.voxel_size = extent > 0 ? extent / span : 1.0;
  return f;
}

VoxelGrid splat_to_grid(const SampleCloud& cloud, const GridFrame& frame) {
  if (cloud.size() == 0) throw InvalidArgument("splat_to_grid on an empty cloud");
  const auto res = static_cast<std::uint32_t>(frame.resolution);
  VoxelGrid grid = VoxelGrid::cube(res);
  std::vector<std::pair<std::size_t, std::size_t>> keyed;  // (voxel, sample)
  keyed.reserve(cloud.size());
  for (std::size_t s = 0; s < cloud.size(); ++s) {
    const Vec3 g = frame.to_grid(cloud.points[s]);
    std::array<std::uint32_t, 3> v{};
    bool inside = true;
    for (int d = 0; d < 3; ++d) {
      const double c = std::floor(g[d]);
      if (c < 0 || c >= res) inside = false;
      v[d] = inside ? static_cast<std::uint32_t>(c) : 0;
    }
    if (inside) keyed.emplace_back(grid.index(v[0], v[1], v[2]), s);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::pair<double, std::size_t>> group;
  for (std::size_t i = 0; i < keyed.size();) {
    std::size_t j = i;
    int best = 0;
    while (j < keyed.size() && keyed[j].first == keyed[i].first) best = std::max(best, cloud.weights[keyed[j++].second]);
    group.clear();
    for (std::size_t k = i; k < j; ++k) {
      const std::size_t s = keyed[k].second;
      if (cloud.weights[s] == best) group.emplace_back(rgb_to_hsl(cloud.colors[s]).h, s);
    }
    std::sort(group.begin(), group.end());
    grid.set(keyed[i].first, 1.0, cloud.colors[group[(group.size() - 1) / 2].second]);
    i = j;
  }
  return grid;
}

namespace {

struct Axis {
  std::size_t length, stride;
  std::array<std::size_t, 2> other_len, other_stride;
};

std::array<Axis, 3> axes_of(const GridDims& d) {
  const std::size_t sx = std::size_t{d.y} * d.z, sy = d.z, sz = 1;
  return {Axis{d.x, sx, {d.y, d.z}, {sy, sz}}, Axis{d.y, sy, {d.x, d.z}, {sx, sz}},
          Axis{d.z, sz, {d.x, d.y}, {sx, sy}}};
}

}  // namespace

std::array<std::vector<bool>, 3> axis_votes(const VoxelGrid& surface) {
  const std::size_t n = surface.voxel_count();
  std::array<std::vector<bool>, 3> votes;
  const auto axes = axes_of(surface.dims());
  std::vector<int> runs_before;
  for (int a = 0; a < 3; ++a) {
    votes[a].assign(n, false);
    const Axis& ax = axes[a];
    runs_before.resize(ax.length);
    for (std::size_t i = 0; i < ax.other_len[0]; ++i) {
      for (std::size_t j = 0; j < ax.other_len[1]; ++j) {
        const std::size_t base = i * ax.other_stride[0] + j * ax.other_stride[1];
        int runs = 0;
        bool prev = false;
        for (std::size_t t = 0; t < ax.length; ++t) {
          const bool s = surface.occupancy(base + t * ax.stride) > 0.5f;
          if (s && !prev) ++runs;
          prev = s;
          runs_before[t] = runs;
        }
        for (std::size_t t = 0; t < ax.length; ++t) {
          const std::size_t v = base + t * ax.stride;
          if (surface.occupancy(v) > 0.5f) continue;
          votes[a][v] = (runs_before[t] % 2 == 1) && runs > runs_before[t];
        }
      }
    }
  }
  return votes;
}

VoxelGrid solid_fill(const VoxelGrid& surface) {
  const GridDims d = surface.dims();
  const auto votes = axis_votes(surface);
  // Colored sources bucketed by (x, y) column, sorted by z.
  std::vector<std::vector<std::uint32_t>> columns(std::size_t{d.x} * d.y);
  bool any = false;
  for (std::uint32_t x = 0; x < d.x; ++x)
    for (std::uint32_t y = 0; y < d.y; ++y)
      for (std::uint32_t z = 0; z < d.z; ++z) {
        if (surface.occupancy(x, y, z) > 0.5f) {
          columns[std::size_t{x} * d.y + y].push_back(z);
          any = true;
        }
      }
  VoxelGrid out = surface;
  if (!any) return out;
  const auto nearest = [&](std::int64_t qx, std::int64_t qy, std::int64_t qz) {
    std::int64_t best_d = std::numeric_limits<std::int64_t>::max();
    std::size_t best_i = 0;
    auto consider = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
      const std::int64_t dd = (x - qx) * (x - qx) + (y - qy) * (y - qy) + (z - qz) * (z - qz);
      const std::size_t idx = surface.index(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                                            static_cast<std::uint32_t>(z));
      if (dd < best_d || (dd == best_d && idx < best_i)) {
        best_d = dd;
        best_i = idx;
      }
    };
    for (std::int64_t ring = 0; ring * ring <= best_d; ++ring) {
      for (std::int64_t dx = -ring; dx <= ring; ++dx) {
        for (std::int64_t dy = -ring; dy <= ring; ++dy) {
          if (std::max(std::abs(dx), std::abs(dy)) != ring || dx * dx + dy * dy > best_d) continue;
          const std::int64_t x = qx + dx, y = qy + dy;
          if (x < 0 || y < 0 || x >= d.x || y >= d.y) continue;
          const auto& col = columns[static_cast<std::size_t>(x) * d.y + static_cast<std::size_t>(y)];
          if (col.empty()) continue;
          const auto it = std::lower_bound(col.begin(), col.end(), static_cast<std::uint32_t>(qz));
          if (it != col.end()) consider(x, y, *it);
          if (it != col.begin()) consider(x, y, *(it - 1));
        }
      }
    }
    return best_i;
  };
  for (std::uint32_t x = 0; x < d.x; ++x)
    for (std::uint32_t y = 0; y < d.y; ++y)
      for (std::uint32_t z = 0; z < d.z; ++z) {
        const std::size_t v = surface.index(x, y, z);
        if (surface.occupancy(v) > 0.5f) continue;
        const int count = votes[0][v] + votes[1][v] + votes[2][v];
        if (count >= 2) out.set(v, 1.0, surface.color(nearest(x, y, z)));
      }
  return out;
}

namespace {

// Separable 3-tap Gaussian (sigma 0.5) with zero padding, in place.
void gaussian3(std::vector<double>& f, const GridDims& d) {
  const double side = std::exp(-2.0);
  const double norm = 1.0 + 2.0 * side;
  const double w0 = 1.0 / norm, w1 = side / norm;
  std::vector<double> line;
  for (const Axis& ax : axes_of(d)) {
    line.resize(ax.length);
    for (std::size_t i = 0; i < ax.other_len[0]; ++i) {
      for (std::size_t j = 0; j < ax.other_len[1]; ++j) {
        const std::size_t base = i * ax.other_stride[0] + j * ax.other_stride[1];
        for (std::size_t t = 0; t < ax.length; ++t) line[t] = f[base + t * ax.stride];
        for (std::size_t t = 0; t < ax.length; ++t) {
          double v = w0 * line[t];
          if (t > 0) v += w1 * line[t - 1];
          if (t + 1 < ax.length) v += w1 * line[t + 1];
          f[base + t * ax.stride] = v;
        }
      }
    }
  }
}

// Occupancy-normalized filtered colors, 3 doubles per voxel.
std::vector<double> filtered_colors(const VoxelGrid& g) {
  const std::size_t n = g.voxel_count();
  std::vector<double> occ(n);
  std::array<std::vector<double>, 3> pre;
  for (auto& p : pre) p.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    occ[v] = g.occupancy(v);
    const Rgb c = g.color(v);
    pre[0][v] = c.r * occ[v];
    pre[1][v] = c.g * occ[v];
    pre[2][v] = c.b * occ[v];
  }
  gaussian3(occ, g.dims());
  for (auto& p : pre) gaussian3(p, g.dims());
  std::vector<double> out(3 * n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    if (occ[v] < 1e-4) continue;
    for (int c = 0; c < 3; ++c) out[3 * v + c] = pre[c][v] / occ[v];
  }
  return out;
}

}  // namespace

VoxelGrid downsample(const VoxelGrid& grid, int factor, double tau) {
  if (factor < 1 || (factor & (factor - 1)) != 0) throw InvalidArgument("downsample factor must be a power of two");
  const GridDims d0 = grid.dims();
  if (d0.x % factor || d0.y % factor || d0.z % factor) throw InvalidArgument("grid dims not divisible by factor");
  if (factor == 1) {
    const auto col = filtered_colors(grid);
    VoxelGrid out(d0);
    for (std::size_t v = 0; v < grid.voxel_count(); ++v) {
      const float o = grid.occupancy(v);
      if (o > 0) out.set(v, o, {col[3 * v], col[3 * v + 1], col[3 * v + 2]});
    }
    return out;
  }
  VoxelGrid cur = grid;
  for (int f = factor; f > 1; f /= 2) {
    const GridDims d = cur.dims();
    const auto col = filtered_colors(cur);
    const GridDims h{d.x / 2, d.y / 2, d.z / 2};
    VoxelGrid next(h);
    for (std::uint32_t x = 0; x < h.x; ++x)
      for (std::uint32_t y = 0; y < h.y; ++y)
        for (std::uint32_t z = 0; z < h.z; ++z) {
          int occupied = 0;
          double acc[3] = {0, 0, 0};
          for (std::uint32_t c = 0; c < 8; ++c) {
            const std::size_t v = cur.index(2 * x + (c >> 2), 2 * y + ((c >> 1) & 1), 2 * z + (c & 1));
            if (cur.occupancy(v) <= 0.5f) continue;
            ++occupied;
            for (int k = 0; k < 3; ++k) acc[k] += col[3 * v + k];
          }
          if (occupied == 0 || occupied / 8.0 < tau) continue;
          next.set(x, y, z, 1.0, {acc[0] / occupied, acc[1] / occupied, acc[2] / occupied});
        }
    cur = std::move(next);
  }
  return cur;
}

VoxelGrid voxelize_mesh(const ColoredMesh& mesh, const VoxelizeOptions& opts) {
  if (opts.resolution < 2) throw InvalidArgument("resolution must be at least 2");
  const int raster = opts.resolution * opts.supersample;
  std::size_t samples = opts.samples;
  if (samples == 0) {
    const double ratio = raster / 256.0;
    samples = static_cast<std::size_t>(std::max(1.0, std::round(ratio * ratio * 2e6)));
  }
  const GridFrame frame = frame_for(mesh, raster);
  const auto visible = mark_visible_faces(mesh, opts.n_views, opts.rays_per_side);
  const SampleCloud cloud = sample_surface(mesh, visible, samples, opts.seed);
  VoxelGrid grid = splat_to_grid(cloud, frame);
  if (opts.solid) grid = solid_fill(grid);
  return downsample(grid, opts.supersample, opts.tau);
}

}  // namespace t2s::voxelize
