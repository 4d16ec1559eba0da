#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cbdae/baselines.hpp"
#include "cbdae/evalbench.hpp"
#include "cbdae/model.hpp"
#include "cbdae/quadtank.hpp"
#include "cbdae/training.hpp"

namespace py = pybind11;
using namespace cbdae;

namespace {

Series series_from_array(const py::array_t<double>& data,
                         std::vector<std::string> channels,
                         std::vector<std::size_t> input_channels) {
    auto buf = data.unchecked<2>();
    Series s;
    const auto n = static_cast<std::size_t>(buf.shape(1));
    if (channels.empty())
        for (std::size_t c = 0; c < n; ++c)
            channels.push_back("ch" + std::to_string(c));
    if (channels.size() != n)
        throw DimensionError("channel names do not match the column count");
    s.channels = std::move(channels);
    s.is_input.assign(n, 0);
    for (std::size_t c : input_channels) {
        if (c >= n) throw RangeError("input channel index out of range");
        s.is_input[c] = 1;
    }
    s.data.reserve(static_cast<std::size_t>(buf.shape(0)) * n);
    for (py::ssize_t t = 0; t < buf.shape(0); ++t)
        for (py::ssize_t c = 0; c < buf.shape(1); ++c)
            s.data.push_back(buf(t, c));
    return s;
}

py::array_t<double> to_array(const std::vector<double>& flat, std::size_t rows,
                             std::size_t cols) {
    py::array_t<double> out({rows, cols});
    auto buf = out.mutable_unchecked<2>();
    for (std::size_t t = 0; t < rows; ++t)
        for (std::size_t c = 0; c < cols; ++c) buf(t, c) = flat[t * cols + c];
    return out;
}

TrainConfig config_from_dict(const py::dict& d) {
    TrainConfig c;
    for (auto item : d) {
        const std::string key = py::cast<std::string>(item.first);
        if (key == "window") c.window = py::cast<std::size_t>(item.second);
        else if (key == "batch") c.batch = py::cast<std::size_t>(item.second);
        else if (key == "seq_members") c.seq_members = py::cast<std::size_t>(item.second);
        else if (key == "rand_members") c.rand_members = py::cast<std::size_t>(item.second);
        else if (key == "hidden") c.hidden = py::cast<std::vector<std::size_t>>(item.second);
        else if (key == "proj_inner") c.proj_inner = py::cast<std::size_t>(item.second);
        else if (key == "proj_dim") c.proj_dim = py::cast<std::size_t>(item.second);
        else if (key == "beta") c.beta = py::cast<double>(item.second);
        else if (key == "l1_beta") c.l1_beta = py::cast<double>(item.second);
        else if (key == "k_d") c.k_d = py::cast<double>(item.second);
        else if (key == "c_d") c.c_d = py::cast<double>(item.second);
        else if (key == "epochs") c.epochs = py::cast<std::size_t>(item.second);
        else if (key == "learning_rate") c.learning_rate = py::cast<double>(item.second);
        else if (key == "grad_clip") c.grad_clip = py::cast<double>(item.second);
        else if (key == "seed") c.seed = py::cast<std::uint64_t>(item.second);
        else if (key == "epoch_budget") c.epoch_budget = py::cast<std::size_t>(item.second);
        else if (key == "validation_fraction") c.validation_fraction = py::cast<double>(item.second);
        else throw ContractError("unknown train config key '" + key + "'");
    }
    return c;
}

}  // namespace

PYBIND11_MODULE(_cbdae, m) {
    m.doc() = "Blind denoising of multivariate time series with a "
              "contrastive recurrent autoencoder";

    py::register_exception<Error>(m, "CbdaeError");

    py::class_<CbdaeModel>(m, "Model")
        .def_static("load", &CbdaeModel::load, py::arg("path"))
        .def("save", &CbdaeModel::save, py::arg("path"))
        .def_property_readonly("window",
                               [](const CbdaeModel& s) { return s.arch.window; })
        .def_property_readonly(
            "channels", [](const CbdaeModel& s) { return s.channels; })
        .def_property_readonly("variant",
                               [](const CbdaeModel& s) { return s.variant; })
        .def_property_readonly(
            "epochs_trained",
            [](const CbdaeModel& s) { return s.epochs_trained; })
        .def(
            "denoise",
            [](const CbdaeModel& self, const py::array_t<double>& data) {
                Series s = series_from_array(data, self.channels, {});
                auto rows = denoise_series(self, s);
                const std::size_t n = self.arch.channels;
                std::vector<double> flat(rows.size() * n,
                                         std::numeric_limits<double>::quiet_NaN());
                for (std::size_t t = 0; t < rows.size(); ++t)
                    if (rows[t])
                        for (std::size_t c = 0; c < n; ++c)
                            flat[t * n + c] = (*rows[t])[c];
                return to_array(flat, rows.size(), n);
            },
            py::arg("data"),
            "Denoise a [time, channels] array; the first window-1 rows are "
            "NaN while the buffer fills.")
        .def(
            "latent",
            [](const CbdaeModel& self, const py::array_t<double>& data) {
                Series s = series_from_array(data, self.channels, {});
                auto lat = latent_series(self, s);
                const std::size_t q = self.arch.hidden.back();
                std::vector<double> flat;
                flat.reserve(lat.size() * q);
                for (const auto& row : lat)
                    flat.insert(flat.end(), row.begin(), row.end());
                return to_array(flat, lat.size(), q);
            },
            py::arg("data"),
            "Encoder latents h(T) for every complete window.");

    m.def(
        "train",
        [](const py::array_t<double>& data, const py::dict& config,
           const std::string& variant, std::vector<std::size_t> input_channels) {
            Series s = series_from_array(data, {}, std::move(input_channels));
            TrainConfig cfg = config_from_dict(config);
            auto result = train_variant(TrainData::from_series(
                                            s, cfg.validation_fraction),
                                        cfg, variant_from_string(variant));
            py::list log;
            for (const auto& e : result.log.epochs) {
                py::dict row;
                row["epoch"] = e.epoch;
                row["l_ae"] = e.l_ae;
                row["l_nce"] = e.l_nce;
                row["l_total"] = e.l_total;
                row["p_d"] = e.p_d;
                if (e.clean_rmse) row["clean_rmse"] = *e.clean_rmse;
                log.append(row);
            }
            return py::make_tuple(result.model, log);
        },
        py::arg("data"), py::arg("config") = py::dict(),
        py::arg("variant") = "cbdae",
        py::arg("input_channels") = std::vector<std::size_t>{},
        "Train a denoiser on a [time, channels] array; returns (model, log).");

    m.def(
        "simulate_quadtank",
        [](std::size_t duration, double sigma, double impulse_prob,
           std::uint64_t seed, double sample_period) {
            SimConfig cfg;
            cfg.duration = duration;
            cfg.impulse_prob = impulse_prob;
            cfg.seed = seed;
            cfg.sample_period = sample_period;
            cfg.substeps = static_cast<std::size_t>(10 * sample_period);
            auto sets = generate_dataset(cfg, std::vector<double>{sigma});
            const auto& ds = sets[0];
            py::dict out;
            out["noisy"] = to_array(ds.model_series.data,
                                    ds.model_series.length(), 6);
            out["clean"] = to_array(ds.clean_series.data,
                                    ds.clean_series.length(), 6);
            out["channels"] = ds.model_series.channels;
            out["train_end"] = ds.train_end;
            out["val_end"] = ds.val_end;
            return out;
        },
        py::arg("duration") = 5000, py::arg("sigma") = 1.0,
        py::arg("impulse_prob") = 0.01, py::arg("seed") = 1,
        py::arg("sample_period") = 4.0,
        "Generate a paired clean/noisy quadruple-tank dataset.");

    m.def(
        "median_filter",
        [](const std::vector<double>& x, std::size_t window) {
            return window_filter(x, {WindowKind::median, window, 2});
        },
        py::arg("x"), py::arg("window") = 5);
    m.def(
        "mean_filter",
        [](const std::vector<double>& x, std::size_t window) {
            return window_filter(x, {WindowKind::mean, window, 2});
        },
        py::arg("x"), py::arg("window") = 5);
    m.def(
        "savgol_filter",
        [](const std::vector<double>& x, std::size_t window, std::size_t order) {
            return window_filter(x, {WindowKind::savitzky_golay, window, order});
        },
        py::arg("x"), py::arg("window") = 30, py::arg("order") = 2);
    m.def("ema_filter",
          [](const std::vector<double>& x, double alpha) {
              return ema_filter(x, alpha);
          },
          py::arg("x"), py::arg("alpha") = 0.33);

    m.def(
        "rmse",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            return rmse(a, b);
        },
        py::arg("reference"), py::arg("estimate"));

    m.def(
        "pca_project",
        [](const py::array_t<double>& data) {
            auto buf = data.unchecked<2>();
            std::vector<std::vector<double>> rows(buf.shape(0));
            for (py::ssize_t t = 0; t < buf.shape(0); ++t)
                for (py::ssize_t c = 0; c < buf.shape(1); ++c)
                    rows[t].push_back(buf(t, c));
            auto pca = pca_fit(rows, 2);
            auto proj = pca_transform(pca, rows);
            std::vector<double> flat;
            for (const auto& p : proj) {
                flat.push_back(p[0]);
                flat.push_back(p[1]);
            }
            py::dict out;
            out["projection"] = to_array(flat, proj.size(), 2);
            out["explained"] = pca.explained;
            out["n_components"] = pca.n_components;
            return out;
        },
        py::arg("data"), "Two-component PCA of row vectors.");

    m.def(
        "smoothness_score",
        [](const py::array_t<double>& trace) {
            auto buf = trace.unchecked<2>();
            std::vector<std::array<double, 2>> pts(buf.shape(0));
            for (py::ssize_t t = 0; t < buf.shape(0); ++t)
                pts[t] = {buf(t, 0), buf(t, 1)};
            return smoothness_score(pts);
        },
        py::arg("trace"));

    m.attr("__version__") = "0.1.0";
}
