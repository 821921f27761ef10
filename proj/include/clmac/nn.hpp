#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace clmac::nn {

struct NetShape {
    int input_dim = 8;  // features per history row
    int history = 20;   // rows per state sequence
    int lstm_units = 64;
    int dense_units = 32;
    int actions = 22;

    void validate() const;
    friend bool operator==(const NetShape&, const NetShape&) = default;
};

enum class Layer { Lstm = 0, Shared = 1, Value = 2, Advantage = 3 };

const char* to_string(Layer layer);

enum class TensorId { LstmW = 0, LstmB, SharedW, SharedB, ValueW, ValueB, AdvW, AdvB };
inline constexpr std::size_t kTensorCount = 8;

struct TensorInfo {
    std::string_view tag;  // e.g. "lstm.w"
    Layer layer;
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;

    std::size_t size() const { return rows * cols; }
};

// Dueling Q-network: single-layer LSTM over the state sequence, a ReLU dense
// layer on its final hidden state, then a scalar value stream and an
// advantage stream combined as Q(a) = V + A(a) - mean(A).
//
// Parameters sit in one contiguous buffer in TensorId order; weights are
// stored input-major (rows = fan-in). LSTM gate blocks are ordered
// [input | forget | output | candidate].
class DuelingNet {
public:
    explicit DuelingNet(const NetShape& shape);  // all zeros

    const NetShape& shape() const { return shape_; }
    std::size_t size() const { return values_.size(); }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    const TensorInfo& info(TensorId id) const { return layout_[static_cast<std::size_t>(id)]; }
    std::span<double> tensor(TensorId id);
    std::span<const double> tensor(TensorId id) const;
    // Weights and bias of one layer (contiguous).
    std::span<double> layer(Layer layer);
    std::span<const double> layer(Layer layer) const;

    void set_zero();

    // Bit-exact comparison of shape and every parameter.
    bool bit_equal(const DuelingNet& other) const;

private:
    NetShape shape_;
    std::array<TensorInfo, kTensorCount> layout_;
    std::vector<double> values_;
};

using Gradients = DuelingNet;

// Fan-in scaled uniform initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
// Each layer draws from its own stream derived from `seed`, so a partial
// re-initialization reproduces what a full one would give that layer.
DuelingNet initialize(const NetShape& shape, std::uint64_t seed);
void initialize_layers(DuelingNet& net, std::span<const Layer> layers, std::uint64_t seed);

inline DuelingNet clone_params(const DuelingNet& net) {
    return net;
}

// Scratch and activation caches for a batch of sequences. Reusable across
// calls; grows on demand.
class Workspace {
public:
    void prepare(const NetShape& shape, int batch);

    std::span<const double> q() const { return {q_.data(), static_cast<std::size_t>(batch_ * actions_)}; }
    int batch() const { return batch_; }

private:
    friend std::span<const double> forward_batch(const DuelingNet&, std::span<const double>, int, Workspace&);
    friend double backward_batch(const DuelingNet&, std::span<const double>, int, std::span<const int>,
                                 std::span<const double>, double, Gradients&, Workspace&);

    int batch_ = 0;
    int actions_ = 0;
    std::vector<double> concat_;     // history x batch x (input + units): [x_t | h_{t-1}]
    std::vector<double> gates_;      // history x batch x 4 units, post-activation
    std::vector<double> cells_;      // (history + 1) x batch x units, c_0 = 0
    std::vector<double> cell_tanh_;  // history x batch x units
    std::vector<double> h_last_;     // batch x units
    std::vector<double> dense_pre_;  // batch x dense
    std::vector<double> dense_;      // batch x dense
    std::vector<double> value_;      // batch
    std::vector<double> adv_;        // batch x actions
    std::vector<double> q_;          // batch x actions
    // backward scratch
    std::vector<double> dq_, dv_, dadv_, ddense_, dh_, dc_, dgates_;
};

// Q-values for `batch` sequences laid out back to back (each history x
// input_dim, row-major). The result aliases the workspace. The LSTM starts
// from a zero state for every sequence. Throws NumericError naming the layer
// if a non-finite activation appears.
std::span<const double> forward_batch(const DuelingNet& net, std::span<const double> states, int batch, Workspace& ws);

// Gradient of  scale * sum_b 1/2 (targets[b] - Q_b(actions[b]))^2  written
// into `grads` (overwritten). Returns the mean squared residual.
double backward_batch(const DuelingNet& net, std::span<const double> states, int batch, std::span<const int> actions,
                      std::span<const double> targets, double scale, Gradients& grads, Workspace& ws);

// Single-sequence conveniences.
std::vector<double> forward(const DuelingNet& net, std::span<const double> state_seq);
Gradients backward(const DuelingNet& net, std::span<const double> state_seq, int action, double target);

// Lowest index among the maxima.
int argmax(std::span<const double> q);

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::optional<double> clip_norm;  // global L2 norm; off by default

    void validate() const;
};

struct OptimizerState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t steps = 0;

    bool bit_equal(const OptimizerState& other) const;
};

// One update of `params` from `grads`. Moments are allocated on first use.
void optimizer_step(DuelingNet& params, const Gradients& grads, OptimizerState& state, const OptimizerConfig& config);

// Versioned little-endian binary form:
//   "CLNN" u32 version | i32 input_dim history lstm_units dense_units actions
//   u32 tensor_count | per tensor: u16 tag_len, tag, u32 rows, u32 cols, f64[rows*cols]
std::vector<std::byte> serialize(const DuelingNet& net);
DuelingNet deserialize(std::span<const std::byte> bytes);

}  // namespace clmac::nn
