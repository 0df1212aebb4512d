#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sec/error.hpp"
#include "sec/experiment.hpp"
#include "sec/kmeans.hpp"
#include "sec/linalg.hpp"
#include "sec/select.hpp"
#include "sec/simenv.hpp"
#include "sec/stratify.hpp"
#include "sec/train.hpp"

namespace py = pybind11;
using namespace sec;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ContractError("expected a 2-D array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

void run_command(void (*cmd)(ExperimentConfig, const CommandOptions&), const std::string& config,
                 const std::string& out, bool overwrite, std::optional<std::uint64_t> seed,
                 std::optional<std::string> trajectories, std::optional<std::string> checkpoint,
                 std::optional<std::string> bank) {
  CommandOptions opt{out, overwrite, seed, trajectories, checkpoint, bank};
  cmd(load_config(config), opt);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.attr("__version__") = SEC_VERSION;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("singular_values", [](const Array& a) { return svd(to_matrix(a)).singular_values; });
  m.def("nuclear_norm", [](const Array& a) { return nuclear_norm(to_matrix(a)); });
  m.def("nuclear_norm_grad", [](const Array& a) { return to_array(nuclear_norm_grad(to_matrix(a))); });
  m.def(
      "kmeans",
      [](const Array& points, std::size_t clusters, std::uint64_t seed) {
        KMeansModel km = kmeans(to_matrix(points), clusters, seed);
        return py::make_tuple(to_array(km.centroids), km.assignments, km.inertia);
      },
      py::arg("points"), py::arg("clusters"), py::arg("seed"));

  m.def("bc_loss_continuous", [](const Array& pred, const Array& target) {
    const LossWithGrad l = bc_loss_continuous(to_matrix(pred), to_matrix(target));
    return py::make_tuple(l.loss, to_array(l.grad));
  });
  m.def("aer_loss_continuous", [](const Array& actions) {
    const LossWithGrad l = aer_loss_continuous(to_matrix(actions));
    return py::make_tuple(l.loss, to_array(l.grad));
  });
  m.def("aer_loss_discrete", [](const Array& probs) {
    const LossWithGrad l = aer_loss_discrete(to_matrix(probs));
    return py::make_tuple(l.loss, to_array(l.grad));
  });

  m.def(
      "select_from_distances",
      [](const std::vector<double>& distances, const std::vector<double>& deltas, int historical) {
        const SelectionTrace t = select_from_distances(distances, deltas, Level{historical});
        return py::dict(py::arg("pre_cap") = t.pre_cap.value, py::arg("final") = t.final_level.value,
                        py::arg("fallback") = t.fallback_used);
      },
      py::arg("distances"), py::arg("deltas"), py::arg("historical"));

  m.def(
      "stratify_levels",
      [](const std::string& trajectories_path, std::size_t k, const std::string& mode, double threshold) {
        const auto ts = read_trajectories(trajectories_path);
        const LeveledDataset ds = build_leveled_dataset(ts, k, retention_mode_from_string(mode), threshold);
        py::dict out;
        for (const auto& [user, level] : ds.level_of_user) {
          out[py::str(user)] = level ? py::object(py::int_(level->value)) : py::object(py::none());
        }
        return out;
      },
      py::arg("trajectories"), py::arg("k"), py::arg("mode") = "return_time", py::arg("expert_threshold") = 3.0);

  m.def(
      "mean_return_gap", [](double satisfaction) { return mean_return_gap(SimCalibration{}, satisfaction); },
      py::arg("satisfaction"));

  m.def("validate_config", [](const std::string& path) { return config_to_json(load_config(path)); });

  const auto command = [&m](const char* name, void (*cmd)(ExperimentConfig, const CommandOptions&)) {
    m.def(
        name,
        [cmd](const std::string& config, const std::string& out, bool overwrite, std::optional<std::uint64_t> seed,
              std::optional<std::string> trajectories, std::optional<std::string> checkpoint,
              std::optional<std::string> bank) {
          py::gil_scoped_release release;
          run_command(cmd, config, out, overwrite, seed, trajectories, checkpoint, bank);
        },
        py::arg("config"), py::arg("out"), py::arg("overwrite") = false, py::arg("seed") = py::none(),
        py::arg("trajectories") = py::none(), py::arg("checkpoint") = py::none(), py::arg("bank") = py::none());
  };
  command("gen_data", cmd_gen_data);
  command("train", cmd_train);
  command("build_centroids", cmd_build_centroids);
  command("evaluate", cmd_evaluate);
  command("ablate", cmd_ablate);
  command("sweep_lambda", cmd_sweep_lambda);
}
