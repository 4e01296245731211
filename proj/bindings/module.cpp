#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dwp/data.hpp"
#include "dwp/experiments.hpp"
#include "dwp/losses.hpp"
#include "dwp/optim.hpp"
#include "dwp/serialize.hpp"
#include "dwp/unet.hpp"
#include "dwp/variational.hpp"

namespace py = pybind11;
using namespace dwp;

namespace {

Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int64_t> dims(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) dims[static_cast<size_t>(i)] = a.shape(i);
    Tensor t(dims);
    std::copy(a.data(), a.data() + a.size(), t.v.begin());
    return t;
}

py::array_t<double> to_array(const Tensor& t) {
    py::array_t<double> a(t.dims);
    std::copy(t.v.begin(), t.v.end(), a.mutable_data());
    return a;
}

using NpArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

GaussianPosterior posterior_of(const NpArray& mu, const NpArray& log_sigma) {
    return GaussianPosterior(to_tensor(mu), to_tensor(log_sigma));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Bayesian transfer learning for volumetric segmentation";
    m.attr("__version__") = kCodeVersion;

    // variational distribution over kernels
    m.def(
        "sample_weights",
        [](const NpArray& mu, const NpArray& ls, const NpArray& noise) {
            return to_array(sample_weights(posterior_of(mu, ls), to_tensor(noise)));
        },
        py::arg("mu"), py::arg("log_sigma"), py::arg("noise"),
        "Reparametrized sample mu + exp(log_sigma) * noise");
    m.def(
        "log_q",
        [](const NpArray& mu, const NpArray& ls, const NpArray& w) {
            return log_q(posterior_of(mu, ls), to_tensor(w));
        },
        py::arg("mu"), py::arg("log_sigma"), py::arg("w"));
    m.def(
        "entropy",
        [](const NpArray& mu, const NpArray& ls) { return entropy(posterior_of(mu, ls)); },
        py::arg("mu"), py::arg("log_sigma"));
    m.def(
        "gaussian_kl",
        [](const NpArray& mu, const NpArray& ls, double mu0, double sigma0) {
            return gaussian_kl(posterior_of(mu, ls), GaussianPrior{mu0, sigma0});
        },
        py::arg("mu"), py::arg("log_sigma"), py::arg("prior_mu") = 0.0,
        py::arg("prior_sigma") = 1.0);

    // metrics and losses
    m.def("dsc", [](const NpArray& p, const NpArray& t) { return dsc(to_tensor(p), to_tensor(t)); });
    m.def("iou", [](const NpArray& p, const NpArray& t) { return iou(to_tensor(p), to_tensor(t)); });
    m.def("ce_loss", [](const NpArray& p, const NpArray& t) {
        return ce_loss(PredictionPair{to_tensor(p), to_tensor(t)});
    });
    m.def("dice_loss", [](const NpArray& p, const NpArray& t) {
        return dice_loss({PredictionPair{to_tensor(p), to_tensor(t)}});
    });
    m.def("combined_loss", [](const NpArray& p, const NpArray& t) {
        return combined_loss({PredictionPair{to_tensor(p), to_tensor(t)}});
    });

    // network
    py::class_<UNet>(m, "UNet")
        .def(py::init([](int in_channels, int out_channels, std::vector<int> widths,
                         bool variational) {
                 if (widths.size() != 3) throw std::invalid_argument("widths must have 3 entries");
                 NetworkSpec sp;
                 sp.in_channels = in_channels;
                 sp.out_channels = out_channels;
                 sp.base_widths = {widths[0], widths[1], widths[2]};
                 sp.mode = variational ? NetMode::variational : NetMode::deterministic;
                 return UNet(sp);
             }),
             py::arg("in_channels") = 1, py::arg("out_channels") = 2,
             py::arg("widths") = std::vector<int>{16, 32, 64}, py::arg("variational") = false)
        .def("param_count", &UNet::param_count)
        .def("trainable_param_count", &UNet::trainable_param_count)
        .def("he_init",
             [](UNet& net, uint64_t seed) {
                 Rng rng(seed);
                 he_init(net, rng);
             },
             py::arg("seed") = 0)
        .def("freeze_middle", [](UNet& net) { freeze_middle(net); })
        .def("unfreeze_all", [](UNet& net) { unfreeze_all(net); })
        .def(
            "forward",
            [](UNet& net, const NpArray& volume) {
                Tensor v = to_tensor(volume);
                if (v.ndim() != 3) throw std::invalid_argument("expected a [D,H,W] volume");
                Tensor x({1, 1, v.dim(0), v.dim(1), v.dim(2)});
                x.v = v.v;
                if (net.mode() == NetMode::variational) net.set_weights_to_mean();
                Tensor probs = softmax2_forward(net.forward(x, false));
                Tensor out({v.dim(0), v.dim(1), v.dim(2)});
                out.v = probs.v;
                return to_array(out);
            },
            py::arg("volume"), "Foreground probabilities for one volume")
        .def("bottleneck_shape", [](UNet& net) {
            const auto& t = net.last_trace();
            return std::vector<int64_t>{t.bottleneck[0], t.bottleneck[1], t.bottleneck[2]};
        });

    m.def("trace_shapes", [](int64_t d, int64_t h, int64_t w) {
        auto t = trace_shapes(d, h, w);
        return py::make_tuple(std::vector<int64_t>{t.bottleneck.begin(), t.bottleneck.end()},
                              std::vector<int64_t>{t.output.begin(), t.output.end()});
    });

    // plateau schedule
    py::class_<PlateauState>(m, "PlateauSchedule")
        .def(py::init([](double lr0, int patience, double factor, double min_delta,
                         double stop_lr) {
                 return plateau_init(lr0, patience, factor, min_delta, stop_lr);
             }),
             py::arg("lr0") = 1e-3, py::arg("patience") = 10, py::arg("factor") = 0.1,
             py::arg("min_delta") = 1e-4, py::arg("stop_lr") = 1e-6)
        .def("step",
             [](PlateauState& st, double val_loss) {
                 auto d = plateau_step(st, val_loss);
                 return py::make_tuple(d.lr, d.dropped, d.stop);
             })
        .def("restart", [](PlateauState& st) { cyclical_restart(st); })
        .def_readonly("lr", &PlateauState::lr);

    // synthetic data
    m.def(
        "generate",
        [](const std::string& preset_name, int n, uint64_t seed) {
            auto vols = generate(DomainPreset::by_name(preset_name), n, seed);
            py::list out;
            for (const auto& v : vols)
                out.append(py::make_tuple(to_array(v.intensities), to_array(v.mask)));
            return out;
        },
        py::arg("preset"), py::arg("n"), py::arg("seed") = 0);
}
