// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "t2s/cwgan.hpp"
#include "t2s/error.hpp"
#include "t2s/evalgen.hpp"
#include "t2s/primgen.hpp"
#include "t2s/retrieval.hpp"
#include "t2s/trainer.hpp"
#include "t2s/voxelize.hpp"

namespace py = pybind11;
using namespace t2s;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

/// Copies a grid into an (x, y, z, 4) float32 array.
FloatArray grid_to_array(const VoxelGrid& g) {
  const auto d = g.dims();
  FloatArray out({static_cast<py::ssize_t>(d.x), static_cast<py::ssize_t>(d.y), static_cast<py::ssize_t>(d.z),
                  static_cast<py::ssize_t>(VoxelGrid::kChannels)});
  std::copy(g.data().begin(), g.data().end(), out.mutable_data());
  return out;
}

VoxelGrid array_to_grid(const FloatArray& a) {
  if (a.ndim() != 4 || a.shape(3) != VoxelGrid::kChannels) throw ShapeError("expected an (x, y, z, 4) array");
  const GridDims dims{static_cast<std::uint32_t>(a.shape(0)), static_cast<std::uint32_t>(a.shape(1)),
                      static_cast<std::uint32_t>(a.shape(2))};
  return VoxelGrid(dims, std::vector<float>(a.data(), a.data() + a.size()));
}

DoubleArray rows(std::vector<double> flat, std::int64_t dim) {
  const auto n = static_cast<py::ssize_t>(flat.size()) / dim;
  DoubleArray out({n, static_cast<py::ssize_t>(dim)});
  std::copy(flat.begin(), flat.end(), out.mutable_data());
  return out;
}

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

/// A trained text/shape embedding model together with its vocabulary.
struct PyEmbedding {
  LoadedEmbedding loaded;

  DoubleArray embed_texts(const std::vector<std::string>& texts) const {
    std::vector<std::vector<std::int64_t>> tokens;
    for (const auto& t : texts) tokens.push_back(loaded.vocab.encode(t));
    return rows(loaded.model->embed_texts(tokens), loaded.model->config.embed_dim);
  }

  DoubleArray embed_shapes(const std::vector<FloatArray>& grids) const {
    std::vector<VoxelGrid> g;
    for (const auto& a : grids) g.push_back(array_to_grid(a));
    return rows(loaded.model->embed_shapes(g), loaded.model->config.embed_dim);
  }
};

std::vector<std::int64_t> py_knn(const DoubleArray& query, const DoubleArray& index, std::int64_t k,
                                 std::int64_t exclude) {
  if (index.ndim() != 2 || query.ndim() != 1 || query.shape(0) != index.shape(1)) {
    throw ShapeError("knn expects query (d,) and index (n, d)");
  }
  const EmbeddingIndex idx(index.shape(1), std::vector<double>(index.data(), index.data() + index.size()),
                           std::vector<std::int64_t>(static_cast<std::size_t>(index.shape(0)), 0));
  return knn(std::span<const double>(query.data(), static_cast<std::size_t>(query.size())), idx, k, exclude);
}

py::object py_evaluate_retrieval(const DoubleArray& queries, const std::vector<std::int64_t>& query_labels,
                                 const DoubleArray& index, const std::vector<std::int64_t>& index_labels,
                                 const std::vector<std::int64_t>& ks, bool exclude_self) {
  if (queries.ndim() != 2 || index.ndim() != 2) throw ShapeError("queries and index must be 2-D");
  const EmbeddingIndex q(queries.shape(1), std::vector<double>(queries.data(), queries.data() + queries.size()),
                         query_labels);
  const EmbeddingIndex i(index.shape(1), std::vector<double>(index.data(), index.data() + index.size()),
                         index_labels);
  return to_python(evaluate_retrieval(q, i, ks, exclude_self));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Text-to-shape embedding, retrieval and generation";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  m.def("read_grid", [](const std::filesystem::path& p) { return grid_to_array(read_grid(p)); }, py::arg("path"),
        "Load a .t2sv voxel grid as an (x, y, z, 4) float32 array.");
  m.def("write_grid", [](const FloatArray& a, const std::filesystem::path& p) { write_grid(array_to_grid(a), p); },
        py::arg("grid"), py::arg("path"));
  m.def(
      "voxelize_obj",
      [](const std::filesystem::path& path, int resolution, bool solid, std::uint64_t seed) {
        voxelize::VoxelizeOptions opt;
        opt.resolution = resolution;
        opt.solid = solid;
        opt.seed = seed;
        return grid_to_array(voxelize::voxelize_mesh(voxelize::load_obj(path), opt));
      },
      py::arg("path"), py::arg("resolution") = 32, py::arg("solid") = true, py::arg("seed") = 0);

  m.def(
      "generate_primitives",
      [](const std::filesystem::path& out, int resolution, int samples, std::uint64_t seed, std::vector<int> shapes,
         std::vector<int> colors, std::vector<int> sizes) {
        primgen::DatasetOptions opt;
        opt.out_dir = out;
        opt.resolution = resolution;
        opt.samples_per_config = samples;
        opt.seed = seed;
        opt.shapes = std::move(shapes);
        opt.colors = std::move(colors);
        opt.sizes = std::move(sizes);
        return primgen::generate_dataset(opt);
      },
      py::arg("out_dir"), py::arg("resolution") = 32, py::arg("samples") = 10, py::arg("seed") = 0,
      py::arg("shapes") = std::vector<int>{}, py::arg("colors") = std::vector<int>{},
      py::arg("sizes") = std::vector<int>{}, "Write a primitives dataset; returns the manifest path.");
  m.def(
      "read_manifest",
      [](const std::filesystem::path& p) {
        py::list out;
        for (const auto& r : read_manifest(p)) out.append(to_python(to_json(r)));
        return out;
      },
      py::arg("path"));

  py::class_<PyEmbedding>(m, "EmbeddingModel")
      .def_static(
          "load", [](const std::filesystem::path& p) { return PyEmbedding{load_embedding_checkpoint(p)}; },
          py::arg("path"))
      .def_property_readonly("embed_dim", [](const PyEmbedding& e) { return e.loaded.model->config.embed_dim; })
      .def_property_readonly("resolution", [](const PyEmbedding& e) { return e.loaded.model->config.resolution; })
      .def("embed_texts", &PyEmbedding::embed_texts, py::arg("texts"))
      .def("embed_shapes", &PyEmbedding::embed_shapes, py::arg("grids"));

  m.def("knn", &py_knn, py::arg("query"), py::arg("index"), py::arg("k"), py::arg("exclude") = -1,
        "Top-k row ids by dot product, ties broken by ascending id.");
  m.def("evaluate_retrieval", &py_evaluate_retrieval, py::arg("queries"), py::arg("query_labels"), py::arg("index"),
        py::arg("index_labels"), py::arg("ks") = std::vector<std::int64_t>{1, 5}, py::arg("exclude_self") = false);

  m.def(
      "iou", [](const FloatArray& a, const FloatArray& b, double t) { return iou(array_to_grid(a), array_to_grid(b), t); },
      py::arg("generated"), py::arg("truth"), py::arg("threshold") = 0.9);
  m.def(
      "color_emd",
      [](const FloatArray& a, const FloatArray& b, double t) -> std::optional<double> {
        const auto ha = color_histogram(array_to_grid(a), t), hb = color_histogram(array_to_grid(b), t);
        if (!ha || !hb) return std::nullopt;
        return color_emd(*ha, *hb);
      },
      py::arg("a"), py::arg("b"), py::arg("threshold") = 0.9,
      "Color EMD between two grids; None when either has no voxel above the threshold.");

  py::class_<GanModel, std::shared_ptr<GanModel>>(m, "GanModel")
      .def_static("load", &load_gan_checkpoint, py::arg("path"))
      .def_property_readonly("resolution", [](const GanModel& g) { return g.config.resolution; })
      .def_property_readonly("embed_dim", [](const GanModel& g) { return g.config.embed_dim; })
      .def(
          "generate",
          [](const GanModel& g, const DoubleArray& embedding, std::int64_t n, std::uint64_t seed) {
            if (embedding.ndim() != 1) throw ShapeError("embedding must be 1-D");
            py::list out;
            const std::vector<double> e(embedding.data(), embedding.data() + embedding.size());
            for (const auto& grid : generate(g, e, n, seed)) out.append(grid_to_array(grid));
            return out;
          },
          py::arg("embedding"), py::arg("n") = 1, py::arg("seed") = 0);
}
