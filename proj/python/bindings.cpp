#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "vetta/cli/commands.hpp"
#include "vetta/eval/metrics.hpp"
#include "vetta/geom/fourier.hpp"
#include "vetta/match/assignment.hpp"
#include "vetta/match/matching.hpp"
#include "vetta/tree/io.hpp"
#include "vetta/tree/synth.hpp"

namespace py = pybind11;
using namespace vetta;

namespace {

std::vector<double> flatten(const std::vector<std::vector<double>>& m, std::size_t& rows, std::size_t& cols) {
  rows = m.size();
  cols = rows ? m[0].size() : 0;
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& r : m) {
    if (r.size() != cols) throw std::invalid_argument("ragged matrix");
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

std::vector<std::vector<double>> unflatten(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  std::vector<std::vector<double>> m(rows, std::vector<double>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m[i][j] = v[i * cols + j];
  return m;
}

geom::FourierConfig fourier(const std::vector<double>& octaves) {
  geom::FourierConfig c;
  if (!octaves.empty()) c.octaves = octaves;
  c.validate();
  return c;
}

/// Trained tree model kept in memory between calls.
class TreeModel {
 public:
  explicit TreeModel(const std::string& ckpt) : m_(cli::load_tree_model(ckpt)) {}
  std::vector<double> encode(const std::string& tree_json) { return m_.encode(tree::load_tree_json(tree_json)); }
  std::string decode(const std::vector<double>& z) { return tree::save_tree_json(m_.decode(z).tree); }
  std::string reconstruct(const std::string& tree_json) { return decode(encode(tree_json)); }
  bool variational() const { return m_.variational; }
  int dims() const { return m_.model->config().dims; }
  std::size_t z_dim() const { return m_.model->config().z_dim; }

 private:
  cli::LoadedTreeModel m_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Vessel tree autoencoder core";

  py::register_exception<tree::TreeError>(m, "TreeError", PyExc_ValueError);
  py::register_exception<cli::UsageError>(m, "UsageError", PyExc_ValueError);

  m.def("lift_fourier", [](const std::vector<double>& coords, const std::vector<double>& octaves) {
    return geom::lift_fourier(coords, fourier(octaves));
  }, py::arg("coords"), py::arg("octaves") = std::vector<double>{});
  m.def("invert_fourier", [](const std::vector<double>& features, double lo, double hi, std::size_t grid,
                             const std::vector<double>& octaves) {
    return geom::invert_fourier(features, fourier(octaves), {lo, hi}, grid);
  }, py::arg("features"), py::arg("lo") = -0.5, py::arg("hi") = 0.5, py::arg("grid") = 1000,
     py::arg("octaves") = std::vector<double>{});

  m.def("linear_sum_assignment", [](const std::vector<std::vector<double>>& cost) {
    std::size_t r, c;
    const auto flat = flatten(cost, r, c);
    const auto a = match::linear_sum_assignment(flat, r, c);
    return py::make_tuple(a.rows, a.cols);
  }, py::arg("cost"));

  m.def("top_k_matching", [](const std::vector<std::vector<double>>& cost, const std::vector<bool>& mask,
                             std::size_t k) {
    match::CostMatrix c;
    c.data = flatten(cost, c.s, c.t);
    if (mask.size() != c.t) throw std::invalid_argument("mask length must equal the number of columns");
    c.mask.assign(mask.begin(), mask.end());
    const auto r = match::top_k_matching(c, k);
    return py::make_tuple(unflatten(r.L, c.s, c.t), unflatten(r.R, c.s, c.t));
  }, py::arg("cost"), py::arg("mask"), py::arg("k") = 3);

  m.def("synthetic_tree", [](std::uint64_t seed, int dims, int depth) {
    tree::SynthParams p;
    p.dims = dims;
    p.depth = depth;
    auto t = tree::generate_synthetic_tree(seed, p);
    if (dims == 3) t = tree::mark_skip_vessels(t);
    return tree::save_tree_json(t);
  }, py::arg("seed"), py::arg("dims") = 2, py::arg("depth") = 4);

  m.def("validate_tree", [](const std::string& tree_json) -> py::tuple {
    try {
      std::string reason;
      const bool ok = tree::is_valid_tree(tree::load_tree_json(tree_json), &reason);
      return py::make_tuple(ok, reason);
    } catch (const tree::TreeError& e) {
      return py::make_tuple(false, std::string(e.what()));
    }
  }, py::arg("tree_json"));

  m.def("compare_trees", [](const std::string& prediction, const std::string& target) {
    const auto p = tree::load_tree_json(prediction), t = tree::load_tree_json(target);
    const auto r = eval::compare_trees("", p, t, cli::metric_options(t.dims));
    py::dict d;
    d["chd"] = r.chd;
    d["acd"] = r.acd;
    d["cf1"] = r.cf1;
    if (r.dice) d["dice"] = *r.dice;
    if (r.surface_hd) d["surface_hd"] = *r.surface_hd;
    if (r.surface_asd) d["surface_asd"] = *r.surface_asd;
    return d;
  }, py::arg("prediction"), py::arg("target"));

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::vector<std::string> all{"vetta"};
    all.insert(all.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : all) argv.push_back(a.data());
    py::gil_scoped_release release;
    return cli::run_cli(static_cast<int>(argv.size()), argv.data());
  }, py::arg("args"));

  py::class_<TreeModel>(m, "TreeModel")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("encode", &TreeModel::encode, py::arg("tree_json"))
      .def("decode", &TreeModel::decode, py::arg("z"))
      .def("reconstruct", &TreeModel::reconstruct, py::arg("tree_json"))
      .def_property_readonly("variational", &TreeModel::variational)
      .def_property_readonly("dims", &TreeModel::dims)
      .def_property_readonly("z_dim", &TreeModel::z_dim);
}
