#include "cbdae/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace cbdae {

void CbdaeArch::validate() const {
    if (channels == 0 || window == 0 || hidden.empty())
        throw ContractError("arch: channels, window and hidden must be positive");
    for (std::size_t q : hidden)
        if (q == 0) throw ContractError("arch: zero hidden size");
    if (has_projection && (proj_inner == 0 || proj_dim == 0))
        throw ContractError("arch: projection dims must be positive");
}

std::vector<Tensor*> CbdaeParams::all() {
    std::vector<Tensor*> out;
    encoder.collect(out);
    decoder.collect(out);
    if (w_g1.defined()) {
        out.push_back(&w_g1);
        out.push_back(&w_g2);
    }
    out.push_back(&w_out);
    out.push_back(&b_out);
    return out;
}

void CbdaeParams::zero_grad() {
    for (Tensor* t : all()) t->zero_grad();
}

CbdaeParams init_params(const CbdaeArch& arch, std::uint64_t seed) {
    arch.validate();
    CbdaeParams p;
    std::size_t in = arch.channels;
    for (std::size_t l = 0; l < arch.depth(); ++l) {
        auto enc_rng = make_rng(seed, "enc.l" + std::to_string(l));
        p.encoder.layers.push_back(
            GruLayerParams::init(in, arch.hidden[l], enc_rng));
        in = arch.hidden[l];
    }
    in = arch.channels;
    for (std::size_t l = 0; l < arch.depth(); ++l) {
        auto dec_rng = make_rng(seed, "dec.l" + std::to_string(l));
        p.decoder.layers.push_back(
            GruLayerParams::init(in, arch.hidden[l], dec_rng));
        in = arch.hidden[l];
    }
    const std::size_t q_top = arch.top_hidden();
    if (arch.has_projection) {
        auto g1_rng = make_rng(seed, "w_g1");
        auto g2_rng = make_rng(seed, "w_g2");
        const double b1 = 1.0 / std::sqrt(static_cast<double>(q_top));
        const double b2 = 1.0 / std::sqrt(static_cast<double>(arch.proj_inner));
        p.w_g1 = Tensor::uniform({arch.proj_inner, q_top}, -b1, b1, g1_rng, true);
        p.w_g2 = Tensor::uniform({arch.proj_dim, arch.proj_inner}, -b2, b2,
                                 g2_rng, true);
    }
    auto wo_rng = make_rng(seed, "w_out");
    auto bo_rng = make_rng(seed, "b_out");
    const double bo = 1.0 / std::sqrt(static_cast<double>(q_top));
    p.w_out = Tensor::uniform({arch.channels, q_top}, -bo, bo, wo_rng, true);
    p.b_out = Tensor::uniform({arch.channels}, -bo, bo, bo_rng, true);
    return p;
}

Tensor project_latent(const CbdaeParams& params, const Tensor& h_top) {
    if (!params.w_g1.defined())
        throw ContractError("project_latent: this variant has no projection head");
    return matmul(params.w_g2, relu(matmul(params.w_g1, h_top)));
}

namespace {

Tensor zero_like_input(std::size_t channels, const Tensor& reference) {
    if (reference.shape().size() == 2)
        return Tensor::zeros({channels, reference.cols()});
    return Tensor::zeros({channels});
}

// Blends the previous estimate and the delayed target column-by-column when
// a batch mixes both branches.
Tensor mix_inputs(const Tensor& self_est, const Tensor& teacher,
                  const std::vector<std::uint8_t>& use_self) {
    const std::size_t batch = use_self.size();
    if (batch == 1) return use_self[0] ? self_est : teacher;
    const std::size_t n = self_est.rows();
    std::size_t count = 0;
    for (auto b : use_self) count += b;
    if (count == 0) return teacher;
    if (count == batch) return self_est;
    std::vector<double> mask(n * batch);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t b = 0; b < batch; ++b)
            mask[i * batch + b] = use_self[b] ? 1.0 : 0.0;
    Tensor m = Tensor::from_values({n, batch}, std::move(mask));
    Tensor inv = shift(scale(m, -1.0), 1.0);
    return add(hadamard(m, self_est), hadamard(inv, teacher));
}

}  // namespace

std::vector<Tensor> decode_steps(const CbdaeParams& params,
                                 const std::vector<Tensor>& encoder_finals,
                                 std::span<const Tensor> step_targets,
                                 double p_d, std::mt19937_64* rng) {
    if (p_d < 0.0 || p_d > 1.0)
        throw ContractError("decode: p_d must lie in [0, 1]");
    if (encoder_finals.size() != params.decoder.depth())
        throw DimensionError("decode: encoder state count != decoder depth");
    const std::size_t steps = step_targets.size();
    if (steps == 0) throw ContractError("decode: empty target window");
    const std::size_t channels = params.w_out.rows();
    const std::size_t batch = step_targets[0].shape().size() == 2
                                  ? step_targets[0].cols()
                                  : 1;
    const bool draws_needed = p_d > 0.0 && p_d < 1.0;
    if (draws_needed && rng == nullptr)
        throw ContractError("decode: rng required for 0 < p_d < 1");

    std::vector<Tensor> state = encoder_finals;  // d^i(0) = h^i(T)
    std::vector<Tensor> outputs;
    outputs.reserve(steps);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (std::size_t j = 0; j < steps; ++j) {
        Tensor input;
        if (j == 0) {
            input = zero_like_input(channels, step_targets[0]);
        } else if (p_d == 1.0) {
            input = outputs[j - 1];
        } else if (p_d == 0.0) {
            input = step_targets[j - 1];
        } else {
            std::vector<std::uint8_t> use_self(batch);
            for (std::size_t b = 0; b < batch; ++b)
                use_self[b] = unit(*rng) < p_d ? 1 : 0;
            input = mix_inputs(outputs[j - 1], step_targets[j - 1], use_self);
        }
        Tensor feed = input;
        for (std::size_t l = 0; l < params.decoder.depth(); ++l) {
            state[l] = gru_cell_step(params.decoder.layers[l], feed, state[l]);
            feed = state[l];
        }
        Tensor pre = matmul(params.w_out, state.back());
        outputs.push_back(pre.shape().size() == 2 ? add_bias(pre, params.b_out)
                                                  : add(pre, params.b_out));
    }
    return outputs;
}

Tensor decode(const CbdaeParams& params, const std::vector<Tensor>& encoder_finals,
              const Tensor& targets_window, double p_d, std::mt19937_64* rng) {
    if (!targets_window.defined() || targets_window.shape().size() != 2)
        throw ContractError("decode: targets must be an N x T matrix");
    std::vector<Tensor> steps;
    steps.reserve(targets_window.cols());
    for (std::size_t j = 0; j < targets_window.cols(); ++j)
        steps.push_back(column(targets_window, j));
    auto cols = decode_steps(params, encoder_finals, steps, p_d, rng);
    return concat_columns(cols);
}

// --- normalization ------------------------------------------------------------

Normalizer Normalizer::fit(const Series& s) {
    const std::size_t n = s.n_channels();
    const std::size_t len = s.length();
    if (len == 0) throw ContractError("normalizer: empty series");
    Normalizer out;
    out.mean.assign(n, 0.0);
    out.stddev.assign(n, 0.0);
    for (std::size_t t = 0; t < len; ++t)
        for (std::size_t c = 0; c < n; ++c) out.mean[c] += s.at(t, c);
    for (std::size_t c = 0; c < n; ++c) out.mean[c] /= static_cast<double>(len);
    for (std::size_t t = 0; t < len; ++t)
        for (std::size_t c = 0; c < n; ++c) {
            const double d = s.at(t, c) - out.mean[c];
            out.stddev[c] += d * d;
        }
    for (std::size_t c = 0; c < n; ++c) {
        out.stddev[c] = std::sqrt(out.stddev[c] / static_cast<double>(len));
        if (out.stddev[c] < 1e-9) out.stddev[c] = 1.0;  // constant channel
    }
    return out;
}

Series Normalizer::normalize(const Series& s) const {
    Series out = s;
    const std::size_t n = s.n_channels();
    for (std::size_t t = 0; t < s.length(); ++t)
        for (std::size_t c = 0; c < n; ++c)
            out.data[t * n + c] = apply(c, s.at(t, c));
    return out;
}

Tensor window_tensor(const Series& s, const Normalizer& norm, std::size_t anchor,
                     std::size_t window) {
    const std::size_t n = s.n_channels();
    if (anchor + 1 < window || anchor >= s.length())
        throw RangeError("window_tensor: anchor out of range");
    std::vector<double> v(n * window);
    const std::size_t t0 = anchor + 1 - window;
    for (std::size_t j = 0; j < window; ++j)
        for (std::size_t c = 0; c < n; ++c)
            v[c * window + j] = norm.apply(c, s.at(t0 + j, c));
    return Tensor::from_values({n, window}, std::move(v));
}

std::vector<Tensor> batched_window_steps(const Series& s, const Normalizer& norm,
                                         std::span<const std::size_t> anchors,
                                         std::size_t window) {
    const std::size_t n = s.n_channels();
    const std::size_t batch = anchors.size();
    if (batch == 0) throw ContractError("batched_window_steps: empty batch");
    for (std::size_t a : anchors)
        if (a + 1 < window || a >= s.length())
            throw RangeError("batched_window_steps: anchor out of range");
    std::vector<Tensor> steps;
    steps.reserve(window);
    for (std::size_t j = 0; j < window; ++j) {
        std::vector<double> v(n * batch);
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t t = anchors[b] + 1 - window + j;
            for (std::size_t c = 0; c < n; ++c)
                v[c * batch + b] = norm.apply(c, s.at(t, c));
        }
        steps.push_back(Tensor::from_values({n, batch}, std::move(v)));
    }
    return steps;
}

// --- inference ------------------------------------------------------------------

namespace {

// Shared single-window pipeline: normalize, encode, self-feeding decode,
// pick the final column. Both the streaming and the offline paths end here,
// which is what makes them bit-identical.
std::vector<double> run_window(const CbdaeModel& model,
                               std::span<const double> window_rows,
                               bool want_latent) {
    const std::size_t n = model.arch.channels;
    const std::size_t T = model.arch.window;
    if (window_rows.size() != n * T)
        throw DimensionError("run_window: need T*N values");
    NoGradGuard no_grad;
    std::vector<double> v(n * T);
    for (std::size_t j = 0; j < T; ++j)
        for (std::size_t c = 0; c < n; ++c)
            v[c * T + j] = model.norm.apply(c, window_rows[j * n + c]);
    Tensor window = Tensor::from_values({n, T}, std::move(v));
    auto enc = encode(model.params.encoder, window);
    if (want_latent) {
        const auto vals = enc.final_states.back().values();
        return {vals.begin(), vals.end()};
    }
    std::vector<Tensor> steps;
    steps.reserve(T);
    for (std::size_t j = 0; j < T; ++j) steps.push_back(column(window, j));
    auto outs = decode_steps(model.params, enc.final_states, steps, 1.0, nullptr);
    std::vector<double> est(n);
    const auto last = outs.back().values();
    for (std::size_t c = 0; c < n; ++c) est[c] = model.norm.invert(c, last[c]);
    return est;
}

}  // namespace

std::vector<double> denoise_window(const CbdaeModel& model,
                                   std::span<const double> window_rows) {
    return run_window(model, window_rows, false);
}

std::vector<double> latent_of_window(const CbdaeModel& model,
                                     std::span<const double> window_rows) {
    return run_window(model, window_rows, true);
}

std::vector<std::optional<std::vector<double>>> denoise_series(
    const CbdaeModel& model, const Series& s) {
    if (s.n_channels() != model.arch.channels)
        throw DimensionError("denoise_series: channel count mismatch");
    const std::size_t T = model.arch.window;
    const std::size_t n = s.n_channels();
    std::vector<std::optional<std::vector<double>>> out(s.length());
    if (s.length() < T) return out;
    std::vector<double> window(n * T);
    for (std::size_t t = T - 1; t < s.length(); ++t) {
        for (std::size_t j = 0; j < T; ++j) {
            auto row = s.row(t + 1 - T + j);
            std::copy(row.begin(), row.end(), window.begin() + j * n);
        }
        out[t] = denoise_window(model, window);
    }
    return out;
}

std::vector<std::vector<double>> latent_series(const CbdaeModel& model,
                                               const Series& s) {
    if (s.n_channels() != model.arch.channels)
        throw DimensionError("latent_series: channel count mismatch");
    const std::size_t T = model.arch.window;
    const std::size_t n = s.n_channels();
    std::vector<std::vector<double>> out;
    if (s.length() < T) return out;
    std::vector<double> window(n * T);
    for (std::size_t t = T - 1; t < s.length(); ++t) {
        for (std::size_t j = 0; j < T; ++j) {
            auto row = s.row(t + 1 - T + j);
            std::copy(row.begin(), row.end(), window.begin() + j * n);
        }
        out.push_back(latent_of_window(model, window));
    }
    return out;
}

DenoiserState::DenoiserState(const CbdaeModel& model) : model_(&model) {
    ring_.assign(model.arch.window * model.arch.channels, 0.0);
}

void DenoiserState::reset() {
    head_ = 0;
    filled_ = 0;
}

std::optional<std::vector<double>> DenoiserState::step(
    std::span<const double> y_tilde) {
    const std::size_t n = model_->arch.channels;
    const std::size_t T = model_->arch.window;
    if (y_tilde.size() != n)
        throw DimensionError("denoise_step: expected " + std::to_string(n) +
                             " channels");
    for (double v : y_tilde)
        if (!std::isfinite(v))
            throw ContractError("denoise_step: non-finite measurement");
    std::copy(y_tilde.begin(), y_tilde.end(), ring_.begin() + head_ * n);
    head_ = (head_ + 1) % T;
    if (filled_ < T) ++filled_;
    if (filled_ < T) return std::nullopt;

    // chronological copy: oldest sample sits at head_
    std::vector<double> window(n * T);
    for (std::size_t j = 0; j < T; ++j) {
        const std::size_t src = (head_ + j) % T;
        std::copy(ring_.begin() + src * n, ring_.begin() + (src + 1) * n,
                  window.begin() + j * n);
    }
    return denoise_window(*model_, window);
}

// --- checkpoint -----------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'C', 'B', 'D', 'A', 'E', 'C', 'K', 'P'};
constexpr std::uint32_t kByteOrderMark = 0x01020304u;
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) {
    std::uint64_t bits = get_u64(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const auto& shape = t.shape();
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) put_u64(out, d);
    for (double v : t.values()) put_f64(out, v);
}

struct NamedTensors {
    std::vector<std::pair<std::string, const Tensor*>> items;
    void add(const std::string& name, const Tensor& t) {
        items.emplace_back(name, &t);
    }
};

NamedTensors named_tensors(const CbdaeModel& model) {
    NamedTensors out;
    auto add_stack = [&](const GruStack& s, const std::string& prefix) {
        for (std::size_t l = 0; l < s.layers.size(); ++l) {
            const auto& p = s.layers[l];
            const std::string base = prefix + "." + std::to_string(l) + ".";
            out.add(base + "w_z", p.w_z);
            out.add(base + "w_r", p.w_r);
            out.add(base + "w_n", p.w_n);
            out.add(base + "u_z", p.u_z);
            out.add(base + "u_r", p.u_r);
            out.add(base + "u_n", p.u_n);
            out.add(base + "b_z", p.b_z);
            out.add(base + "b_r", p.b_r);
            out.add(base + "b_n", p.b_n);
        }
    };
    add_stack(model.params.encoder, "encoder");
    add_stack(model.params.decoder, "decoder");
    if (model.params.w_g1.defined()) {
        out.add("w_g1", model.params.w_g1);
        out.add("w_g2", model.params.w_g2);
    }
    out.add("w_out", model.params.w_out);
    out.add("b_out", model.params.b_out);
    return out;
}

}  // namespace

void CbdaeModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");
    out.write(kMagic, 8);
    put_u32(out, kByteOrderMark);
    put_u32(out, kVersion);

    nlohmann::json header;
    header["arch"] = {{"channels", arch.channels},
                      {"window", arch.window},
                      {"hidden", arch.hidden},
                      {"proj_inner", arch.proj_inner},
                      {"proj_dim", arch.proj_dim},
                      {"has_projection", arch.has_projection}};
    header["variant"] = variant;
    header["channels"] = channels;
    header["is_input"] = is_input;
    header["normalization"] = {{"mean", norm.mean}, {"std", norm.stddev}};
    header["epochs_trained"] = epochs_trained;
    header["adam_step"] = adam_step;
    const std::string header_text = header.dump();
    put_u32(out, static_cast<std::uint32_t>(header_text.size()));
    out.write(header_text.data(),
              static_cast<std::streamsize>(header_text.size()));

    auto named = named_tensors(*this);
    put_u32(out, static_cast<std::uint32_t>(named.items.size()));
    for (const auto& [name, tensor] : named.items)
        write_tensor(out, name, *tensor);
    if (!out) throw IoError("checkpoint: write failed for '" + path + "'");
}

CbdaeModel CbdaeModel::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("checkpoint: '" + path + "' is not a CBDAE checkpoint");
    if (get_u32(in) != kByteOrderMark)
        throw IoError("checkpoint: byte order mark mismatch");
    const std::uint32_t version = get_u32(in);
    if (version != kVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(version));

    const std::uint32_t hlen = get_u32(in);
    std::string header_text(hlen, '\0');
    in.read(header_text.data(), hlen);
    if (!in) throw IoError("checkpoint: truncated header");
    nlohmann::json header = nlohmann::json::parse(header_text);

    CbdaeModel model;
    const auto& ja = header.at("arch");
    model.arch.channels = ja.at("channels").get<std::size_t>();
    model.arch.window = ja.at("window").get<std::size_t>();
    model.arch.hidden = ja.at("hidden").get<std::vector<std::size_t>>();
    model.arch.proj_inner = ja.at("proj_inner").get<std::size_t>();
    model.arch.proj_dim = ja.at("proj_dim").get<std::size_t>();
    model.arch.has_projection = ja.at("has_projection").get<bool>();
    model.variant = header.at("variant").get<std::string>();
    model.channels = header.at("channels").get<std::vector<std::string>>();
    model.is_input = header.at("is_input").get<std::vector<std::uint8_t>>();
    model.norm.mean = header.at("normalization").at("mean").get<std::vector<double>>();
    model.norm.stddev = header.at("normalization").at("std").get<std::vector<double>>();
    model.epochs_trained = header.at("epochs_trained").get<std::uint32_t>();
    model.adam_step = header.at("adam_step").get<std::uint64_t>();

    model.params = init_params(model.arch, 0);
    NamedTensors expected;
    {
        // reuse the writer's naming to build the lookup
        CbdaeModel& m = model;
        expected = named_tensors(m);
    }

    const std::uint32_t count = get_u32(in);
    if (count != expected.items.size())
        throw IoError("checkpoint: tensor count mismatch");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t nlen = get_u32(in);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        const std::uint32_t ndim = get_u32(in);
        Shape shape(ndim);
        for (auto& d : shape) d = get_u64(in);
        if (i >= expected.items.size() || expected.items[i].first != name)
            throw IoError("checkpoint: unexpected tensor '" + name + "'");
        Tensor* dst = const_cast<Tensor*>(expected.items[i].second);
        if (dst->shape() != shape)
            throw IoError("checkpoint: shape mismatch for '" + name + "'");
        auto vals = dst->mutable_values();
        for (double& v : vals) v = get_f64(in);
    }
    if (!in) throw IoError("checkpoint: truncated tensor data");
    return model;
}

}  // namespace cbdae
