#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "clmac/env.hpp"
#include "clmac/nn.hpp"
#include "clmac/rng.hpp"

namespace clmac {

struct AgentConfig {
    int history = 20;  // H
    int k_max = 10;
    int channels = 2;
    double gamma = 0.9;
    int batch_size = 32;
    int memory_capacity = 1000;
    int target_sync_period = 20;  // applied gradient steps
    double eps_initial = 1.0;
    double eps_floor = 0.0;
    double eps_decrement = 0.005;
    int lstm_units = 64;
    int dense_units = 32;
    nn::OptimizerConfig optimizer;

    void validate() const;
    int action_count() const { return (k_max + 1) * channels; }
    int feature_dim() const { return kObservationKinds + 1 + channels; }
    nn::NetShape net_shape() const;
};

// Actions are indexed k-major: index = k * channels + channel.
int action_index(const AgentAction& action, int channels);
AgentAction action_from_index(int index, int channels);

struct HistoryEntry {
    Observation observation = Observation::None;
    std::uint8_t k = 0;
    std::uint8_t channel = 0;

    friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

// The H most recent (observation, k, channel) tuples, newest last; padded
// with (None, 0, 0) until H actions have happened.
class AgentState {
public:
    explicit AgentState(int history);

    void push(const HistoryEntry& entry);
    const std::deque<HistoryEntry>& entries() const { return entries_; }
    int history() const { return history_; }

private:
    int history_;
    std::deque<HistoryEntry> entries_;
};

// Row per entry: one-hot(5) observation | k / K_max | one-hot(C) channel.
void encode_rows(std::span<const HistoryEntry> rows, int k_max, int channels, std::span<double> out);
std::vector<double> encode_state(const AgentState& state, int k_max, int channels);

// Transitions keep the H + 1 history entries spanning state and next state:
// state = window[0, H), next_state = window[1, H + 1).
struct Experience {
    std::vector<HistoryEntry> window;
    AgentAction action;
    double reward = 0.0;
    int duration = 1;

    std::span<const HistoryEntry> state() const { return {window.data(), window.size() - 1}; }
    std::span<const HistoryEntry> next_state() const { return {window.data() + 1, window.size() - 1}; }

    friend bool operator==(const Experience&, const Experience&) = default;
};

// FIFO of fixed capacity; the oldest entry is evicted first.
class ReplayMemory {
public:
    explicit ReplayMemory(int capacity);

    void push(Experience e);
    void clear();
    std::size_t size() const { return count_; }
    std::size_t capacity() const { return slots_.size(); }
    // 0 = oldest.
    const Experience& at(std::size_t i) const;
    // `n` distinct indices, uniform without replacement.
    std::vector<std::size_t> sample(std::size_t n, Rng& rng) const;

    friend bool operator==(const ReplayMemory&, const ReplayMemory&);

private:
    std::vector<Experience> slots_;
    std::size_t head_ = 0;  // index of the oldest entry
    std::size_t count_ = 0;
};

// (1 - gamma^d) / ((1 - gamma) d) * reward + gamma^d * bootstrap.
// Throws for gamma outside [0, 1) or d < 1.
double discounted_target(double reward, int duration, double gamma, double bootstrap);

// Double-Q target for one transition: the online network picks a' on
// next_state, the target network scores it.
double compute_target(double reward, int duration, std::span<const double> next_state, const nn::DuelingNet& online,
                      const nn::DuelingNet& target, double gamma);

// Double deep Q-learning agent with a dueling LSTM network and uniform replay.
class Agent {
public:
    Agent(const AgentConfig& config, std::uint64_t seed);

    const AgentConfig& config() const { return config_; }

    // epsilon-greedy over all (K_max + 1) x C actions; epsilon then decays
    // by one decrement (floored).
    AgentAction select_action();
    // Greedy action and the Q-vector behind it, without touching epsilon.
    AgentAction greedy_action(std::vector<double>* q_out = nullptr) const;

    // Appends the outcome to the history and stores the transition.
    void record_experience(const AgentAction& action, const StepOutcome& outcome);
    // One minibatch update; nullopt while the memory holds less than a batch.
    // Returns the batch mean squared TD error.
    std::optional<double> train_step();

    double epsilon() const;
    std::uint64_t decisions_since_reset() const { return decisions_; }
    void set_decisions_since_reset(std::uint64_t n) { decisions_ = n; }

    const AgentState& state() const { return state_; }
    std::vector<double> encoded_state() const;

    nn::DuelingNet& online() { return online_; }
    const nn::DuelingNet& online() const { return online_; }
    nn::DuelingNet& target() { return target_; }
    const nn::DuelingNet& target() const { return target_; }
    nn::OptimizerState& optimizer_state() { return opt_state_; }
    const nn::OptimizerState& optimizer_state() const { return opt_state_; }
    ReplayMemory& memory() { return memory_; }
    const ReplayMemory& memory() const { return memory_; }

    // Gradient steps applied since the last reset (drives target sync).
    std::uint64_t applied_steps() const { return opt_state_.steps; }

    // Re-initializes the given layers from the next seed in the agent's
    // initializer sequence, copies W into W-, clears optimizer state and
    // memory, and restores epsilon to its initial value.
    void reset(std::span<const nn::Layer> layers);
    std::uint64_t init_counter() const { return init_counter_; }
    std::uint64_t init_seed() const { return init_seed_; }

private:
    AgentConfig config_;
    std::uint64_t init_seed_;
    std::uint64_t init_counter_ = 0;
    Rng rng_;
    nn::DuelingNet online_;
    nn::DuelingNet target_;
    nn::OptimizerState opt_state_;
    ReplayMemory memory_;
    AgentState state_;
    std::uint64_t decisions_ = 0;

    // reused buffers
    mutable nn::Workspace ws_;
    nn::Workspace ws_next_;
    nn::Gradients grads_;
    std::vector<double> batch_states_;
    std::vector<double> batch_next_;
    std::vector<int> batch_actions_;
    std::vector<double> batch_targets_;
    std::vector<int> batch_best_;
};

}  // namespace clmac
