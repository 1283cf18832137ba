#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fedgraph/errors.hpp"
#include "fedgraph/experiment.hpp"
#include "fedgraph/pca.hpp"

namespace py = pybind11;
using namespace fedgraph;

namespace {

py::array_t<double> to_numpy(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

Matrix from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
    const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
    return Matrix::from_data(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

std::vector<py::array_t<double>> weights_to_list(const GcnWeights& w) {
    std::vector<py::array_t<double>> out;
    for (const auto& m : w.layers) out.push_back(to_numpy(m));
    return out;
}

GcnWeights weights_from_list(const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>& l) {
    GcnWeights w;
    for (const auto& a : l) w.layers.push_back(from_numpy(a));
    return w;
}

py::dict round_to_dict(const RoundRecord& r) {
    py::dict d;
    d["round"] = r.round;
    d["delta"] = r.delta;
    d["lambda"] = r.lambda;
    d["reward"] = r.reward;
    py::list clients;
    for (const auto& c : r.clients) {
        py::dict cd;
        cd["client"] = c.client;
        cd["loss"] = c.loss;
        cd["kappa"] = c.kappa;
        cd["edges"] = c.edges;
        cd["values"] = c.values;
        cd["bytes"] = c.bytes;
        clients.append(cd);
    }
    d["clients"] = clients;
    return d;
}

}  // namespace

PYBIND11_MODULE(_fedgraph, m) {
    m.doc() = "Federated GCN training simulator";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<PrivacyViolation>(m, "PrivacyViolation", PyExc_RuntimeError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<RoundAborted>(m, "RoundAborted", PyExc_RuntimeError);
    py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);

    py::class_<SbmSpec>(m, "SbmSpec")
        .def(py::init<>())
        .def(py::init([](std::size_t blocks, std::size_t nodes_per_block, double p_in, double p_out,
                         std::size_t feature_dim, double feature_noise, std::uint64_t seed) {
                 return SbmSpec{blocks, nodes_per_block, p_in, p_out, feature_dim, feature_noise, seed};
             }),
             py::arg("blocks") = 2, py::arg("nodes_per_block") = 50, py::arg("p_in") = 0.1, py::arg("p_out") = 0.01,
             py::arg("feature_dim") = 8, py::arg("feature_noise") = 1.0, py::arg("seed") = 0)
        .def_readwrite("blocks", &SbmSpec::blocks)
        .def_readwrite("nodes_per_block", &SbmSpec::nodes_per_block)
        .def_readwrite("p_in", &SbmSpec::p_in)
        .def_readwrite("p_out", &SbmSpec::p_out)
        .def_readwrite("feature_dim", &SbmSpec::feature_dim)
        .def_readwrite("feature_noise", &SbmSpec::feature_noise)
        .def_readwrite("seed", &SbmSpec::seed);

    py::class_<Graph>(m, "Graph")
        .def_property_readonly("num_nodes", &Graph::num_nodes)
        .def_property_readonly("num_edges", [](const Graph& g) { return g.adjacency.nnz() / 2; })
        .def_property_readonly("num_classes", [](const Graph& g) { return g.num_classes; })
        .def_property_readonly("features", [](const Graph& g) { return to_numpy(g.features); })
        .def_property_readonly("labels", [](const Graph& g) { return g.labels; })
        .def_property_readonly("train_mask", [](const Graph& g) { return g.train_mask; })
        .def_property_readonly("test_mask", [](const Graph& g) { return g.test_mask; });

    m.def("synth_sbm", &synth_sbm, py::arg("spec"));
    m.def(
        "load_graph",
        [](const py::object& dataset, std::uint64_t seed) {
            RunConfig cfg;
            if (py::isinstance<SbmSpec>(dataset)) cfg.synth = dataset.cast<SbmSpec>();
            else cfg.dataset = dataset.cast<std::string>();
            cfg.seeds.partition = seed;
            return load_graph(cfg);
        },
        py::arg("dataset"), py::arg("seed") = 1,
        "Cora directory or SbmSpec, with the 60/20/20 split drawn from `seed`.");

    m.def(
        "reward",
        [](double lambda, double delta, double omega, double target, double alpha, double beta) {
            return reward(lambda, delta, RewardConfig{omega, target, alpha, beta});
        },
        py::arg("accuracy"), py::arg("delta"), py::arg("omega") = 128.0, py::arg("target") = 0.9016,
        py::arg("alpha") = 0.0, py::arg("beta") = 0.0);

    m.def(
        "aggregate",
        [](const std::vector<std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>>& ws,
           const std::vector<double>& kappa) {
            std::vector<GcnWeights> all;
            for (const auto& w : ws) all.push_back(weights_from_list(w));
            return weights_to_list(aggregate(all, kappa));
        },
        py::arg("weights"), py::arg("kappa"));

    m.def(
        "pca_fit",
        [](const std::vector<std::vector<double>>& samples, std::size_t k) {
            const auto model = pca_fit(samples, k);
            return py::make_tuple(model.mean, to_numpy(model.components), model.variances);
        },
        py::arg("samples"), py::arg("k"));

    m.def(
        "train",
        [](const py::object& dataset, std::size_t rounds, const std::string& mode, std::size_t clients,
           double mean_fraction, double variance, std::uint32_t batch_size, std::vector<double> probabilities,
           std::uint64_t seed, std::size_t workers) {
            RunConfig cfg;
            if (py::isinstance<SbmSpec>(dataset)) cfg.synth = dataset.cast<SbmSpec>();
            else cfg.dataset = dataset.cast<std::string>();
            cfg.rounds = rounds;
            cfg.mode = parse_run_mode(mode);
            cfg.partition.num_clients = clients;
            cfg.partition.mean_fraction = mean_fraction;
            cfg.partition.fraction_variance = variance;
            cfg.partition.seed = seed;
            cfg.policy = SamplingPolicy{batch_size, std::move(probabilities)};
            cfg.seeds = Seeds{seed, seed, seed};
            cfg.workers = workers;
            cfg.validate();
            if (cfg.mode == RunMode::fedgraph_ddpg) throw ConfigError("train: use a fixed-policy mode");
            std::vector<RoundRecord> recs;
            GcnWeights final_weights;
            {
                py::gil_scoped_release release;
                const auto g = load_graph(cfg);
                Federation fed(partition(g, cfg.partition), federation_config(cfg));
                recs = run_training(fed, cfg);
                final_weights = fed.global_weights();
            }
            py::list rounds_out;
            for (const auto& r : recs) rounds_out.append(round_to_dict(r));
            return py::make_tuple(rounds_out, weights_to_list(final_weights));
        },
        py::arg("dataset"), py::arg("rounds") = 10, py::arg("mode") = "fedgraph_fixed", py::arg("clients") = 4,
        py::arg("mean_fraction") = 0.8, py::arg("variance") = 0.1, py::arg("batch_size") = 256,
        py::arg("probabilities") = std::vector<double>{0.5, 0.5}, py::arg("seed") = 1, py::arg("workers") = 0);

    m.def(
        "evaluate",
        [](const Graph& g, const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>& w,
           const std::vector<NodeId>& nodes) { return evaluate(g, weights_from_list(w), nodes); },
        py::arg("graph"), py::arg("weights"), py::arg("nodes"));

    m.def(
        "bandit",
        [](std::size_t rounds, double target, std::vector<std::size_t> hidden, std::uint64_t seed) {
            DdpgConfig cfg;
            cfg.state_dim = 4;
            cfg.hidden = std::move(hidden);
            cfg.gamma = 0.0;
            cfg.pca_warmup = 2;
            cfg.batch = 32;
            BanditEnvironment env(4, 1, target);
            DdpgController ctl(1, cfg, seed);
            {
                py::gil_scoped_release release;
                train_controller(env, ctl, 1, rounds);
            }
            return env.actions();
        },
        py::arg("rounds") = 3000, py::arg("target") = 0.5, py::arg("hidden") = std::vector<std::size_t>{64, 64},
        py::arg("seed") = 1);

    m.attr("METRICS_HEADER") = kMetricsHeader;
}
