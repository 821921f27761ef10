#pragma once

// Independent reference implementations used as test oracles. They are
// written from the definitions with plain loops and share no code with the
// library beyond the parameter layout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "clmac/nn.hpp"
#include "clmac/rng.hpp"

namespace oracle {

inline double sigm(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

// Q-values of one sequence (history x input_dim).
inline std::vector<double> q_values(const clmac::nn::DuelingNet& net, std::span<const double> seq) {
    using clmac::nn::TensorId;
    const auto& s = net.shape();
    const int in = s.input_dim;
    const int h = s.lstm_units;
    const auto w = net.tensor(TensorId::LstmW);
    const auto b = net.tensor(TensorId::LstmB);
    std::vector<double> hid(h, 0.0), cell(h, 0.0);
    for (int t = 0; t < s.history; ++t) {
        const double* x = seq.data() + t * in;
        std::vector<double> z(4 * h);
        for (int g = 0; g < 4 * h; ++g) {
            double acc = b[g];
            for (int i = 0; i < in; ++i) {
                acc += x[i] * w[i * 4 * h + g];
            }
            for (int j = 0; j < h; ++j) {
                acc += hid[j] * w[(in + j) * 4 * h + g];
            }
            z[g] = acc;
        }
        for (int j = 0; j < h; ++j) {
            const double ig = sigm(z[j]);
            const double fg = sigm(z[h + j]);
            const double og = sigm(z[2 * h + j]);
            const double cand = std::tanh(z[3 * h + j]);
            cell[j] = fg * cell[j] + ig * cand;
            hid[j] = og * std::tanh(cell[j]);
        }
    }
    const int d = s.dense_units;
    std::vector<double> dense(d);
    const auto sw = net.tensor(TensorId::SharedW);
    const auto sb = net.tensor(TensorId::SharedB);
    for (int u = 0; u < d; ++u) {
        double acc = sb[u];
        for (int j = 0; j < h; ++j) {
            acc += hid[j] * sw[j * d + u];
        }
        dense[u] = acc > 0.0 ? acc : 0.0;
    }
    double v = net.tensor(TensorId::ValueB)[0];
    for (int u = 0; u < d; ++u) {
        v += dense[u] * net.tensor(TensorId::ValueW)[u];
    }
    const int na = s.actions;
    std::vector<double> adv(na);
    double mean = 0.0;
    for (int a = 0; a < na; ++a) {
        double acc = net.tensor(TensorId::AdvB)[a];
        for (int u = 0; u < d; ++u) {
            acc += dense[u] * net.tensor(TensorId::AdvW)[u * na + a];
        }
        adv[a] = acc;
        mean += acc;
    }
    mean /= na;
    std::vector<double> q(na);
    for (int a = 0; a < na; ++a) {
        q[a] = v + adv[a] - mean;
    }
    return q;
}

// scale * sum_b 1/2 (target_b - Q_b(action_b))^2
inline double loss(const clmac::nn::DuelingNet& net, std::span<const double> states, int batch,
                   std::span<const int> actions, std::span<const double> targets, double scale) {
    const auto& s = net.shape();
    const std::size_t len = static_cast<std::size_t>(s.history * s.input_dim);
    double total = 0.0;
    for (int i = 0; i < batch; ++i) {
        const auto q = q_values(net, states.subspan(i * len, len));
        const double r = targets[i] - q[actions[i]];
        total += 0.5 * r * r;
    }
    return scale * total;
}

// Mean of gamma^i, i < d, times the reward, plus the discounted bootstrap.
inline double eq_target(double reward, int d, double gamma, double bootstrap) {
    double sum = 0.0;
    for (int i = 0; i < d; ++i) {
        sum += std::pow(gamma, i);
    }
    return sum / d * reward + std::pow(gamma, d) * bootstrap;
}

// Exhaustive search over single-radio schedules: at each slot either leave
// it unused or start a packet there. Exponential; only for short windows.
inline double brute_payload(std::span<const std::uint32_t> occ, int channels, int k_max, double header,
                            std::size_t from = 0) {
    if (from >= occ.size()) {
        return 0.0;
    }
    double best = brute_payload(occ, channels, k_max, header, from + 1);
    for (int c = 0; c < channels; ++c) {
        for (int k = 1; k <= k_max && from + k <= occ.size(); ++k) {
            if ((occ[from + k - 1] >> c) & 1U) {
                break;
            }
            best = std::max(best, k - header + brute_payload(occ, channels, k_max, header, from + k));
        }
    }
    return best;
}

// Random parameters in [-scale, scale].
inline void randomize(clmac::nn::DuelingNet& net, clmac::Rng& rng, double scale) {
    for (double& v : net.values()) {
        v = rng.uniform(-scale, scale);
    }
}

}  // namespace oracle
