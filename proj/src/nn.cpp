#include "clmac/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "clmac/error.hpp"
#include "clmac/kernels.hpp"
#include "clmac/rng.hpp"

namespace clmac::nn {

void NetShape::validate() const {
    if (input_dim < 1 || history < 1 || lstm_units < 1 || dense_units < 1 || actions < 1) {
        throw Error("network shape: every dimension must be positive");
    }
}

const char* to_string(Layer layer) {
    switch (layer) {
        case Layer::Lstm: return "lstm";
        case Layer::Shared: return "shared";
        case Layer::Value: return "value";
        case Layer::Advantage: return "advantage";
    }
    return "?";
}

namespace {

std::array<TensorInfo, kTensorCount> make_layout(const NetShape& s) {
    const auto in = static_cast<std::size_t>(s.input_dim);
    const auto h = static_cast<std::size_t>(s.lstm_units);
    const auto d = static_cast<std::size_t>(s.dense_units);
    const auto a = static_cast<std::size_t>(s.actions);
    std::array<TensorInfo, kTensorCount> t{{
        {"lstm.w", Layer::Lstm, 0, in + h, 4 * h},
        {"lstm.b", Layer::Lstm, 0, 1, 4 * h},
        {"shared.w", Layer::Shared, 0, h, d},
        {"shared.b", Layer::Shared, 0, 1, d},
        {"value.w", Layer::Value, 0, d, 1},
        {"value.b", Layer::Value, 0, 1, 1},
        {"adv.w", Layer::Advantage, 0, d, a},
        {"adv.b", Layer::Advantage, 0, 1, a},
    }};
    std::size_t offset = 0;
    for (auto& info : t) {
        info.offset = offset;
        offset += info.size();
    }
    return t;
}

// Uniform init bound per layer; the LSTM uses 1/sqrt(hidden) as PyTorch does.
double init_bound(const NetShape& s, Layer layer) {
    switch (layer) {
        case Layer::Lstm: return 1.0 / std::sqrt(static_cast<double>(s.lstm_units));
        case Layer::Shared: return 1.0 / std::sqrt(static_cast<double>(s.lstm_units));
        case Layer::Value:
        case Layer::Advantage: return 1.0 / std::sqrt(static_cast<double>(s.dense_units));
    }
    return 0.0;
}

void check_finite(std::span<const double> xs, Layer layer, const char* what) {
    for (double x : xs) {
        if (!std::isfinite(x)) {
            throw NumericError(to_string(layer), what);
        }
    }
}

inline std::size_t sz(int v) {
    return static_cast<std::size_t>(v);
}

}  // namespace

DuelingNet::DuelingNet(const NetShape& shape) : shape_(shape), layout_(make_layout(shape)) {
    shape_.validate();
    const auto& last = layout_.back();
    values_.assign(last.offset + last.size(), 0.0);
}

std::span<double> DuelingNet::tensor(TensorId id) {
    const auto& t = info(id);
    return {values_.data() + t.offset, t.size()};
}

std::span<const double> DuelingNet::tensor(TensorId id) const {
    const auto& t = info(id);
    return {values_.data() + t.offset, t.size()};
}

std::span<double> DuelingNet::layer(Layer layer) {
    const auto w = static_cast<std::size_t>(layer) * 2;
    const auto& first = layout_[w];
    const auto& second = layout_[w + 1];
    return {values_.data() + first.offset, first.size() + second.size()};
}

std::span<const double> DuelingNet::layer(Layer layer) const {
    const auto w = static_cast<std::size_t>(layer) * 2;
    const auto& first = layout_[w];
    const auto& second = layout_[w + 1];
    return {values_.data() + first.offset, first.size() + second.size()};
}

void DuelingNet::set_zero() {
    std::fill(values_.begin(), values_.end(), 0.0);
}

bool DuelingNet::bit_equal(const DuelingNet& other) const {
    return shape_ == other.shape_ && values_.size() == other.values_.size() &&
           std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(double)) == 0;
}

void initialize_layers(DuelingNet& net, std::span<const Layer> layers, std::uint64_t seed) {
    for (Layer layer : layers) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(layer)));
        const double bound = init_bound(net.shape(), layer);
        for (double& w : net.layer(layer)) {
            w = rng.uniform(-bound, bound);
        }
    }
}

DuelingNet initialize(const NetShape& shape, std::uint64_t seed) {
    DuelingNet net(shape);
    constexpr std::array<Layer, 4> all{Layer::Lstm, Layer::Shared, Layer::Value, Layer::Advantage};
    initialize_layers(net, all, seed);
    return net;
}

void Workspace::prepare(const NetShape& s, int batch) {
    batch_ = batch;
    actions_ = s.actions;
    const std::size_t b = sz(batch);
    const std::size_t t = sz(s.history);
    const std::size_t h = sz(s.lstm_units);
    const std::size_t k = sz(s.input_dim) + h;
    const std::size_t d = sz(s.dense_units);
    const std::size_t a = sz(s.actions);
    auto fit = [](std::vector<double>& v, std::size_t n) {
        if (v.size() < n) {
            v.resize(n);
        }
    };
    fit(concat_, t * b * k);
    fit(gates_, t * b * 4 * h);
    fit(cells_, (t + 1) * b * h);
    fit(cell_tanh_, t * b * h);
    fit(h_last_, b * h);
    fit(dense_pre_, b * d);
    fit(dense_, b * d);
    fit(value_, b);
    fit(adv_, b * a);
    fit(q_, b * a);
}

std::span<const double> forward_batch(const DuelingNet& net, std::span<const double> states, int batch, Workspace& ws) {
    const NetShape& s = net.shape();
    if (batch < 1) {
        throw Error("forward: batch must be positive");
    }
    const std::size_t b = sz(batch);
    const std::size_t T = sz(s.history);
    const std::size_t in = sz(s.input_dim);
    const std::size_t h = sz(s.lstm_units);
    const std::size_t k = in + h;
    const std::size_t g4 = 4 * h;
    const std::size_t d = sz(s.dense_units);
    const std::size_t a = sz(s.actions);
    if (states.size() != b * T * in) {
        throw Error("forward: expected " + std::to_string(b * T * in) + " state values (batch x history x features), got " +
                    std::to_string(states.size()));
    }
    ws.prepare(s, batch);
    const auto& kern = kernels::active();

    const double* w = net.tensor(TensorId::LstmW).data();
    const double* bias = net.tensor(TensorId::LstmB).data();
    std::fill_n(ws.cells_.begin(), b * h, 0.0);

    for (std::size_t t = 0; t < T; ++t) {
        double* cat = ws.concat_.data() + t * b * k;
        double* gates = ws.gates_.data() + t * b * g4;
        const double* c_prev = ws.cells_.data() + t * b * h;
        double* c_now = ws.cells_.data() + (t + 1) * b * h;
        double* tc = ws.cell_tanh_.data() + t * b * h;

        for (std::size_t r = 0; r < b; ++r) {
            std::memcpy(cat + r * k, states.data() + (r * T + t) * in, in * sizeof(double));
            if (t == 0) {
                std::fill_n(cat + r * k + in, h, 0.0);
            }
            std::memcpy(gates + r * g4, bias, g4 * sizeof(double));
        }
        kern.gemm_nn(b, g4, k, cat, k, w, g4, gates, g4);
        for (std::size_t r = 0; r < b; ++r) {
            kern.sigmoid(gates + r * g4, 3 * h);
            kern.tanh(gates + r * g4 + 3 * h, h);
        }
        for (std::size_t r = 0; r < b; ++r) {
            const double* gi = gates + r * g4;
            const double* gf = gi + h;
            const double* gc = gi + 3 * h;
            for (std::size_t j = 0; j < h; ++j) {
                c_now[r * h + j] = gf[j] * c_prev[r * h + j] + gi[j] * gc[j];
            }
        }
        std::memcpy(tc, c_now, b * h * sizeof(double));
        kern.tanh(tc, b * h);
        double* h_out = t + 1 < T ? ws.concat_.data() + (t + 1) * b * k + in : ws.h_last_.data();
        const std::size_t h_stride = t + 1 < T ? k : h;
        for (std::size_t r = 0; r < b; ++r) {
            const double* go = gates + r * g4 + 2 * h;
            for (std::size_t j = 0; j < h; ++j) {
                h_out[r * h_stride + j] = go[j] * tc[r * h + j];
            }
        }
    }
    check_finite({ws.h_last_.data(), b * h}, Layer::Lstm, "final hidden state");

    const double* ws_w = net.tensor(TensorId::SharedW).data();
    const double* ws_b = net.tensor(TensorId::SharedB).data();
    for (std::size_t r = 0; r < b; ++r) {
        std::memcpy(ws.dense_pre_.data() + r * d, ws_b, d * sizeof(double));
    }
    kern.gemm_nn(b, d, h, ws.h_last_.data(), h, ws_w, d, ws.dense_pre_.data(), d);
    for (std::size_t i = 0; i < b * d; ++i) {
        ws.dense_[i] = std::max(ws.dense_pre_[i], 0.0);
    }
    check_finite({ws.dense_.data(), b * d}, Layer::Shared, "activation");

    const double vb = net.tensor(TensorId::ValueB)[0];
    std::fill_n(ws.value_.begin(), b, vb);
    kern.gemm_nn(b, 1, d, ws.dense_.data(), d, net.tensor(TensorId::ValueW).data(), 1, ws.value_.data(), 1);
    check_finite({ws.value_.data(), b}, Layer::Value, "state value");

    const double* ab = net.tensor(TensorId::AdvB).data();
    for (std::size_t r = 0; r < b; ++r) {
        std::memcpy(ws.adv_.data() + r * a, ab, a * sizeof(double));
    }
    kern.gemm_nn(b, a, d, ws.dense_.data(), d, net.tensor(TensorId::AdvW).data(), a, ws.adv_.data(), a);
    check_finite({ws.adv_.data(), b * a}, Layer::Advantage, "advantage");

    for (std::size_t r = 0; r < b; ++r) {
        const double* adv = ws.adv_.data() + r * a;
        double mean = 0.0;
        for (std::size_t j = 0; j < a; ++j) {
            mean += adv[j];
        }
        mean /= static_cast<double>(a);
        double* q = ws.q_.data() + r * a;
        for (std::size_t j = 0; j < a; ++j) {
            q[j] = ws.value_[r] + (adv[j] - mean);
        }
    }
    return ws.q();
}

double backward_batch(const DuelingNet& net, std::span<const double> states, int batch, std::span<const int> actions,
                      std::span<const double> targets, double scale, Gradients& grads, Workspace& ws) {
    const NetShape& s = net.shape();
    if (!(grads.shape() == s)) {
        throw Error("backward: gradient shape does not match the network");
    }
    if (actions.size() != sz(batch) || targets.size() != sz(batch)) {
        throw Error("backward: need one action and one target per sequence");
    }
    for (double t : targets) {
        if (!std::isfinite(t)) {
            throw NumericError("target", "regression target");
        }
    }
    forward_batch(net, states, batch, ws);

    const std::size_t b = sz(batch);
    const std::size_t T = sz(s.history);
    const std::size_t in = sz(s.input_dim);
    const std::size_t h = sz(s.lstm_units);
    const std::size_t k = in + h;
    const std::size_t g4 = 4 * h;
    const std::size_t d = sz(s.dense_units);
    const std::size_t a = sz(s.actions);
    const auto& kern = kernels::active();

    auto fit = [](std::vector<double>& v, std::size_t n) {
        v.assign(std::max(v.size(), n), 0.0);
    };
    fit(ws.dq_, b * a);
    fit(ws.dv_, b);
    fit(ws.dadv_, b * a);
    fit(ws.ddense_, b * d);
    fit(ws.dh_, b * h);
    fit(ws.dc_, b * h);
    fit(ws.dgates_, b * g4);

    grads.set_zero();

    double sq = 0.0;
    for (std::size_t r = 0; r < b; ++r) {
        const int act = actions[r];
        if (act < 0 || sz(act) >= a) {
            throw Error("backward: action index out of range");
        }
        const double resid = targets[r] - ws.q_[r * a + sz(act)];
        sq += resid * resid;
        ws.dq_[r * a + sz(act)] = -scale * resid;
    }

    // Dueling head: dV = sum_a dQ, dA = dQ - mean(dQ).
    for (std::size_t r = 0; r < b; ++r) {
        const double* dq = ws.dq_.data() + r * a;
        double total = 0.0;
        for (std::size_t j = 0; j < a; ++j) {
            total += dq[j];
        }
        ws.dv_[r] = total;
        const double mean = total / static_cast<double>(a);
        for (std::size_t j = 0; j < a; ++j) {
            ws.dadv_[r * a + j] = dq[j] - mean;
        }
    }

    auto g_value_w = grads.tensor(TensorId::ValueW);
    auto g_value_b = grads.tensor(TensorId::ValueB);
    auto g_adv_w = grads.tensor(TensorId::AdvW);
    auto g_adv_b = grads.tensor(TensorId::AdvB);
    kern.gemm_tn(d, 1, b, ws.dense_.data(), d, ws.dv_.data(), 1, g_value_w.data(), 1);
    kern.gemm_tn(d, a, b, ws.dense_.data(), d, ws.dadv_.data(), a, g_adv_w.data(), a);
    for (std::size_t r = 0; r < b; ++r) {
        g_value_b[0] += ws.dv_[r];
        for (std::size_t j = 0; j < a; ++j) {
            g_adv_b[j] += ws.dadv_[r * a + j];
        }
    }

    kern.gemm_nt(b, d, 1, ws.dv_.data(), 1, net.tensor(TensorId::ValueW).data(), 1, ws.ddense_.data(), d);
    kern.gemm_nt(b, d, a, ws.dadv_.data(), a, net.tensor(TensorId::AdvW).data(), a, ws.ddense_.data(), d);
    for (std::size_t i = 0; i < b * d; ++i) {
        if (ws.dense_pre_[i] <= 0.0) {
            ws.ddense_[i] = 0.0;
        }
    }

    auto g_shared_w = grads.tensor(TensorId::SharedW);
    auto g_shared_b = grads.tensor(TensorId::SharedB);
    kern.gemm_tn(h, d, b, ws.h_last_.data(), h, ws.ddense_.data(), d, g_shared_w.data(), d);
    for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
            g_shared_b[j] += ws.ddense_[r * d + j];
        }
    }
    kern.gemm_nt(b, h, d, ws.ddense_.data(), d, net.tensor(TensorId::SharedW).data(), d, ws.dh_.data(), h);

    // Backpropagation through time.
    const double* w = net.tensor(TensorId::LstmW).data();
    double* gw = grads.tensor(TensorId::LstmW).data();
    double* gb = grads.tensor(TensorId::LstmB).data();
    for (std::size_t t = T; t-- > 0;) {
        const double* gates = ws.gates_.data() + t * b * g4;
        const double* c_prev = ws.cells_.data() + t * b * h;
        const double* tc = ws.cell_tanh_.data() + t * b * h;
        for (std::size_t r = 0; r < b; ++r) {
            const double* gi = gates + r * g4;
            const double* gf = gi + h;
            const double* go = gi + 2 * h;
            const double* gc = gi + 3 * h;
            double* dg = ws.dgates_.data() + r * g4;
            double* dc = ws.dc_.data() + r * h;
            const double* dh = ws.dh_.data() + r * h;
            for (std::size_t j = 0; j < h; ++j) {
                const double tcj = tc[r * h + j];
                const double dcj = dc[j] + dh[j] * go[j] * (1.0 - tcj * tcj);
                const double d_o = dh[j] * tcj;
                const double d_i = dcj * gc[j];
                const double d_f = dcj * c_prev[r * h + j];
                const double d_c = dcj * gi[j];
                dg[j] = d_i * gi[j] * (1.0 - gi[j]);
                dg[h + j] = d_f * gf[j] * (1.0 - gf[j]);
                dg[2 * h + j] = d_o * go[j] * (1.0 - go[j]);
                dg[3 * h + j] = d_c * (1.0 - gc[j] * gc[j]);
                dc[j] = dcj * gf[j];
            }
        }
        const double* cat = ws.concat_.data() + t * b * k;
        kern.gemm_tn(k, g4, b, cat, k, ws.dgates_.data(), g4, gw, g4);
        for (std::size_t r = 0; r < b; ++r) {
            const double* dg = ws.dgates_.data() + r * g4;
            for (std::size_t j = 0; j < g4; ++j) {
                gb[j] += dg[j];
            }
        }
        if (t > 0) {
            // Only the recurrent rows of W matter; inputs carry no gradient.
            std::fill_n(ws.dh_.begin(), b * h, 0.0);
            kern.gemm_nt(b, h, g4, ws.dgates_.data(), g4, w + in * g4, g4, ws.dh_.data(), h);
        }
    }

    for (std::size_t i = 0; i < kTensorCount; ++i) {
        const auto id = static_cast<TensorId>(i);
        check_finite(grads.tensor(id), grads.info(id).layer, "gradient");
    }
    return sq / static_cast<double>(b);
}

std::vector<double> forward(const DuelingNet& net, std::span<const double> state_seq) {
    Workspace ws;
    auto q = forward_batch(net, state_seq, 1, ws);
    return {q.begin(), q.end()};
}

Gradients backward(const DuelingNet& net, std::span<const double> state_seq, int action, double target) {
    Workspace ws;
    Gradients grads(net.shape());
    const int acts[1] = {action};
    const double tgts[1] = {target};
    backward_batch(net, state_seq, 1, acts, tgts, 1.0, grads, ws);
    return grads;
}

int argmax(std::span<const double> q) {
    if (q.empty()) {
        throw Error("argmax of an empty vector");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < q.size(); ++i) {
        if (q[i] > q[best]) {
            best = i;
        }
    }
    return static_cast<int>(best);
}

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0)) {
        throw ConfigError("optimizer.learning_rate: must be positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("optimizer: moment decay rates must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) {
        throw ConfigError("optimizer.epsilon: must be positive");
    }
    if (clip_norm && !(*clip_norm > 0.0)) {
        throw ConfigError("optimizer.clip_norm: must be positive");
    }
}

bool OptimizerState::bit_equal(const OptimizerState& other) const {
    auto same = [](const std::vector<double>& x, const std::vector<double>& y) {
        return x.size() == y.size() && (x.empty() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0);
    };
    return steps == other.steps && same(m, other.m) && same(v, other.v);
}

void optimizer_step(DuelingNet& params, const Gradients& grads, OptimizerState& state, const OptimizerConfig& config) {
    if (!(params.shape() == grads.shape())) {
        throw Error("optimizer_step: gradient shape does not match the parameters");
    }
    auto p = params.values();
    auto g = grads.values();
    const std::size_t n = p.size();

    double scale = 1.0;
    if (config.clip_norm) {
        double norm2 = 0.0;
        for (double x : g) {
            norm2 += x * x;
        }
        const double norm = std::sqrt(norm2);
        if (norm > *config.clip_norm) {
            scale = *config.clip_norm / norm;
        }
    }

    ++state.steps;
    if (config.kind == OptimizerKind::Sgd) {
        for (std::size_t i = 0; i < n; ++i) {
            p[i] -= config.learning_rate * scale * g[i];
        }
        return;
    }

    if (state.m.size() != n) {
        if (!state.m.empty()) {
            throw Error("optimizer_step: optimizer state does not match the parameters");
        }
        state.m.assign(n, 0.0);
        state.v.assign(n, 0.0);
    }
    const double b1 = config.beta1;
    const double b2 = config.beta2;
    const double t = static_cast<double>(state.steps);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < n; ++i) {
        const double gi = scale * g[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * gi;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * gi * gi;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        p[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
}

}  // namespace clmac::nn
