// Python bindings for the MDSVM-UNet core: tensors cross the boundary as
// NumPy arrays; networks and checkpoints are opaque handles.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mdsvm/checkpoint.hpp"
#include "mdsvm/metrics.hpp"
#include "mdsvm/network.hpp"
#include "mdsvm/pipeline.hpp"
#include "mdsvm/snake.hpp"
#include "mdsvm/synth.hpp"
#include "mdsvm/train.hpp"
#include "mdsvm/verify.hpp"

namespace py = pybind11;
using namespace mdsvm;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Shape shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<std::size_t>(i)] = a.shape(i);
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor::from_data(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

Volume volume_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
                         std::array<float, 3> spacing = {0, 0, 0}) {
    if (a.ndim() != 3) throw ShapeError("volume array must be 3-dimensional");
    Volume v(a.shape(0), a.shape(1), a.shape(2));
    v.spacing = spacing;
    std::copy(a.data(), a.data() + a.size(), v.data.begin());
    return v;
}

py::array_t<float> array_from_volume(const Volume& v) {
    py::array_t<float> out({v.h, v.w, v.d});
    std::copy(v.data.begin(), v.data.end(), out.mutable_data());
    return out;
}

LabelVolume label_from_array(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a,
                             std::array<float, 3> spacing = {0, 0, 0}) {
    if (a.ndim() != 3) throw ShapeError("label array must be 3-dimensional");
    LabelVolume v(a.shape(0), a.shape(1), a.shape(2));
    v.spacing = spacing;
    std::copy(a.data(), a.data() + a.size(), v.data.begin());
    for (auto x : v.data) {
        if (x > 1) throw ContractError("label array must be binary");
    }
    return v;
}

py::array_t<std::uint8_t> array_from_label(const LabelVolume& v) {
    py::array_t<std::uint8_t> out({v.h, v.w, v.d});
    std::copy(v.data.begin(), v.data.end(), out.mutable_data());
    return out;
}

NetworkConfig config_from_kwargs(const std::vector<int>& ladder, int cmax, int lambda, int nstate,
                                 bool dense_skips, bool transposed_head) {
    NetworkConfig cfg;
    cfg.ladder = ladder;
    cfg.snake_half_length = cmax;
    cfg.ssm_expansion = lambda;
    cfg.ssm_state = nstate;
    cfg.dense_skips = dense_skips;
    cfg.transposed_head = transposed_head;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "MDSVM-UNet core: multidirectional snake convolution, selective-scan layers, "
              "two-stage volumetric segmentation, and surface metrics";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<NumericsError>(m, "NumericsError", PyExc_ArithmeticError);
    py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_IOError);

    // ---- primitive operations ----
    m.def(
        "conv3d",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> x,
           py::array_t<double, py::array::c_style | py::array::forcecast> w,
           py::object bias, int stride, int padding, int dilation, int groups) {
            Conv3dOpts o;
            o.stride = stride;
            o.padding = padding;
            o.dilation = dilation;
            o.groups = groups;
            std::optional<Tensor> b;
            if (!bias.is_none()) {
                b = tensor_from_array(
                    bias.cast<py::array_t<double, py::array::c_style | py::array::forcecast>>());
            }
            return array_from_tensor(conv3d(tensor_from_array(x), tensor_from_array(w), b, o));
        },
        py::arg("input"), py::arg("weight"), py::arg("bias") = py::none(), py::arg("stride") = 1,
        py::arg("padding") = 0, py::arg("dilation") = 1, py::arg("groups") = 1);

    m.def(
        "grid_sample_trilinear",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> x,
           py::array_t<double, py::array::c_style | py::array::forcecast> coords) {
            return array_from_tensor(
                grid_sample_trilinear(tensor_from_array(x), tensor_from_array(coords)));
        },
        py::arg("input"), py::arg("coords"),
        "Border-clamped trilinear sampling at fractional (h,w,d) coordinates [B,M,3].");

    m.def(
        "selective_scan",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> u,
           py::array_t<double, py::array::c_style | py::array::forcecast> Bt,
           py::array_t<double, py::array::c_style | py::array::forcecast> Ct,
           py::array_t<double, py::array::c_style | py::array::forcecast> delta,
           py::array_t<double, py::array::c_style | py::array::forcecast> A,
           py::array_t<double, py::array::c_style | py::array::forcecast> D) {
            return array_from_tensor(selective_scan(tensor_from_array(u), tensor_from_array(Bt),
                                                    tensor_from_array(Ct), tensor_from_array(delta),
                                                    tensor_from_array(A), tensor_from_array(D)));
        },
        py::arg("u"), py::arg("Bt"), py::arg("Ct"), py::arg("delta"), py::arg("A"), py::arg("D"));

    m.def(
        "upsample_trilinear",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> x) {
            return array_from_tensor(upsample_trilinear(tensor_from_array(x)));
        },
        py::arg("input"));

    // ---- metrics ----
    m.def(
        "dice_coefficient",
        [](py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> a,
           py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> b) {
            return dice_coefficient(label_from_array(a), label_from_array(b));
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "hausdorff",
        [](py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> a,
           py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> b,
           std::array<float, 3> spacing) {
            return hausdorff(label_from_array(a, spacing), label_from_array(b, spacing));
        },
        py::arg("a"), py::arg("b"), py::arg("spacing") = std::array<float, 3>{0, 0, 0});
    m.def(
        "average_hausdorff",
        [](py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> a,
           py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> b,
           std::array<float, 3> spacing) {
            return average_hausdorff(label_from_array(a, spacing), label_from_array(b, spacing));
        },
        py::arg("a"), py::arg("b"), py::arg("spacing") = std::array<float, 3>{0, 0, 0});

    // ---- synthetic data ----
    m.def(
        "synth_generate",
        [](std::uint64_t seed, std::array<std::int64_t, 3> shape, int tubes, int branch_depth,
           double radius_min, double radius_max, double noise) {
            SynthSpec spec;
            spec.seed = seed;
            spec.h = shape[0];
            spec.w = shape[1];
            spec.d = shape[2];
            spec.tube_count = tubes;
            spec.branch_depth = branch_depth;
            spec.radius_min = radius_min;
            spec.radius_max = radius_max;
            spec.noise_sigma = noise;
            SynthCase cs = synth_generate(spec);
            return py::make_tuple(array_from_volume(cs.intensity), array_from_label(cs.label));
        },
        py::arg("seed"), py::arg("shape"), py::arg("tubes") = 2, py::arg("branch_depth") = 1,
        py::arg("radius_min") = 1.5, py::arg("radius_max") = 3.0, py::arg("noise") = 0.05,
        "Returns (intensity, label) arrays for a seeded tubular phantom.");

    // ---- network ----
    py::class_<Network>(m, "Network")
        .def(py::init([](std::vector<int> ladder, int cmax, int lambda, int nstate,
                         std::uint64_t seed, bool dense_skips, bool transposed_head) {
                 return Network::build(
                     config_from_kwargs(ladder, cmax, lambda, nstate, dense_skips, transposed_head),
                     seed);
             }),
             py::arg("ladder") = std::vector<int>{16, 32, 64, 128, 256}, py::arg("cmax") = 4,
             py::arg("expansion") = 2, py::arg("nstate") = 16, py::arg("seed") = 1,
             py::arg("dense_skips") = true, py::arg("transposed_head") = false)
        .def_property_readonly("parameter_count", &Network::parameter_count)
        .def("forward",
             [](const Network& net, py::array_t<double, py::array::c_style | py::array::forcecast> x) {
                 return array_from_tensor(net.forward(tensor_from_array(x)));
             },
             py::arg("input"), "Probability volume for a [B,1,H,W,D] input.")
        .def("save",
             [](const Network& net, const std::string& path) { save_checkpoint(path, net.params()); },
             py::arg("path"))
        .def("load",
             [](Network& net, const std::string& path) { load_checkpoint(path, net.params()); },
             py::arg("path"));

    // ---- training ----
    m.def(
        "train",
        [](Network& net, const std::vector<py::array_t<float, py::array::c_style | py::array::forcecast>>& images,
           const std::vector<py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>>& labels,
           int stage, int epochs, double lr, std::vector<int> milestones, std::uint64_t seed) {
            if (images.size() != labels.size()) {
                throw ShapeError("train: images and labels differ in length");
            }
            std::vector<TrainItem> items;
            for (std::size_t i = 0; i < images.size(); ++i) {
                TrainItem it{normalize_volume(volume_from_array(images[i])),
                             label_from_array(labels[i]), true};
                it.positive = it.target.foreground_count() > 0;
                items.push_back(std::move(it));
            }
            TrainConfig cfg;
            cfg.stage = stage;
            cfg.epochs = epochs;
            cfg.lr = lr;
            cfg.milestones = std::move(milestones);
            cfg.seed = seed;
            return train_stage(items, cfg, net).loss_trace;
        },
        py::arg("net"), py::arg("images"), py::arg("labels"), py::arg("stage") = 1,
        py::arg("epochs") = 25, py::arg("lr") = 1e-3, py::arg("milestones") = std::vector<int>{},
        py::arg("seed") = 1,
        "Soft-Dice Adam training over already-shaped inputs; returns the per-epoch loss trace.");

    // ---- two-stage pipeline ----
    m.def(
        "two_stage_infer",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> volume, const Network& net1,
           const Network& net2, std::array<std::int64_t, 3> coarse_shape, std::int64_t block_side) {
            TwoStageConfig cfg;
            cfg.coarse_h = coarse_shape[0];
            cfg.coarse_w = coarse_shape[1];
            cfg.coarse_d = coarse_shape[2];
            cfg.block_side = block_side;
            auto res = two_stage_infer(volume_from_array(volume), net1, net2, cfg);
            return py::make_tuple(array_from_label(res.label), res.block_count, res.empty_guidance);
        },
        py::arg("volume"), py::arg("net1"), py::arg("net2"),
        py::arg("coarse_shape") = std::array<std::int64_t, 3>{128, 128, 64},
        py::arg("block_side") = std::int64_t{64},
        "Returns (label array, block count, empty_guidance flag).");

    // ---- volume I/O ----
    m.def("save_volume",
          [](const std::string& path, py::array_t<float, py::array::c_style | py::array::forcecast> a,
             std::array<float, 3> spacing) { save_volume(path, volume_from_array(a, spacing)); },
          py::arg("path"), py::arg("volume"), py::arg("spacing") = std::array<float, 3>{0, 0, 0});
    m.def("load_volume", [](const std::string& path) { return array_from_volume(load_volume(path)); },
          py::arg("path"));
    m.def("save_label",
          [](const std::string& path, py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> a,
             std::array<float, 3> spacing) { save_label(path, label_from_array(a, spacing)); },
          py::arg("path"), py::arg("label"), py::arg("spacing") = std::array<float, 3>{0, 0, 0});
    m.def("load_label", [](const std::string& path) { return array_from_label(load_label(path)); },
          py::arg("path"));

    // ---- verification ----
    m.def("verify", [](const std::string& suite) {
        std::vector<CheckResult> results;
        if (suite == "gradcheck" || suite == "all") {
            auto r = verify_gradcheck();
            results.insert(results.end(), r.begin(), r.end());
        }
        if (suite == "oracle" || suite == "all") {
            auto r = verify_oracle();
            results.insert(results.end(), r.begin(), r.end());
        }
        if (suite == "pipeline" || suite == "all") {
            auto r = verify_pipeline();
            results.insert(results.end(), r.begin(), r.end());
        }
        py::list out;
        for (const auto& r : results) out.append(py::make_tuple(r.name, r.pass, r.detail));
        return out;
    }, py::arg("suite") = "all");
}
