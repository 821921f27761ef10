#include "clmac/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "clmac/error.hpp"

namespace clmac {

namespace {

const AgentConfig& validated(const AgentConfig& config) {
    config.validate();
    return config;
}

}  // namespace

void AgentConfig::validate() const {
    if (history < 1) {
        throw ConfigError("agent.history must be at least 1");
    }
    if (k_max < 1 || k_max > 255) {
        throw ConfigError("agent.k_max must be in [1, 255]");
    }
    if (channels < 1 || channels > 32) {
        throw ConfigError("agent.channels must be in [1, 32]");
    }
    if (!(gamma >= 0.0 && gamma < 1.0)) {
        throw ConfigError("agent.gamma must be in [0, 1), got " + std::to_string(gamma));
    }
    if (batch_size < 1 || memory_capacity < 1 || target_sync_period < 1) {
        throw ConfigError("agent batch size, memory capacity and target sync period must be positive");
    }
    if (batch_size > memory_capacity) {
        throw ConfigError("agent.batch_size exceeds agent.memory_capacity");
    }
    if (!(eps_floor >= 0.0 && eps_floor <= eps_initial && eps_initial <= 1.0)) {
        throw ConfigError("agent epsilon: need 0 <= floor <= initial <= 1");
    }
    if (!(eps_decrement >= 0.0)) {
        throw ConfigError("agent.eps_decrement must be non-negative");
    }
    net_shape().validate();
    optimizer.validate();
}

nn::NetShape AgentConfig::net_shape() const {
    nn::NetShape s;
    s.input_dim = feature_dim();
    s.history = history;
    s.lstm_units = lstm_units;
    s.dense_units = dense_units;
    s.actions = action_count();
    return s;
}

int action_index(const AgentAction& action, int channels) {
    return action.k * channels + action.channel;
}

AgentAction action_from_index(int index, int channels) {
    return {index / channels, index % channels};
}

AgentState::AgentState(int history) : history_(history), entries_(static_cast<std::size_t>(history)) {}

void AgentState::push(const HistoryEntry& entry) {
    entries_.pop_front();
    entries_.push_back(entry);
}

void encode_rows(std::span<const HistoryEntry> rows, int k_max, int channels, std::span<double> out) {
    const std::size_t width = static_cast<std::size_t>(kObservationKinds + 1 + channels);
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(rows.size() * width), 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        double* row = out.data() + i * width;
        row[static_cast<std::size_t>(rows[i].observation)] = 1.0;
        row[kObservationKinds] = static_cast<double>(rows[i].k) / k_max;
        row[kObservationKinds + 1 + rows[i].channel] = 1.0;
    }
}

std::vector<double> encode_state(const AgentState& state, int k_max, int channels) {
    std::vector<HistoryEntry> rows(state.entries().begin(), state.entries().end());
    std::vector<double> out(rows.size() * static_cast<std::size_t>(kObservationKinds + 1 + channels));
    encode_rows(rows, k_max, channels, out);
    return out;
}

ReplayMemory::ReplayMemory(int capacity) {
    if (capacity < 1) {
        throw ConfigError("replay memory capacity must be positive");
    }
    slots_.resize(static_cast<std::size_t>(capacity));
}

void ReplayMemory::push(Experience e) {
    const std::size_t cap = slots_.size();
    if (count_ < cap) {
        slots_[(head_ + count_) % cap] = std::move(e);
        ++count_;
    } else {
        slots_[head_] = std::move(e);
        head_ = (head_ + 1) % cap;
    }
}

void ReplayMemory::clear() {
    for (auto& e : slots_) {
        e = Experience{};
    }
    head_ = 0;
    count_ = 0;
}

const Experience& ReplayMemory::at(std::size_t i) const {
    if (i >= count_) {
        throw Error("replay memory index out of range");
    }
    return slots_[(head_ + i) % slots_.size()];
}

std::vector<std::size_t> ReplayMemory::sample(std::size_t n, Rng& rng) const {
    if (n > count_) {
        throw Error("cannot sample more experiences than stored");
    }
    // partial Fisher-Yates
    std::vector<std::size_t> idx(count_);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(count_ - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n);
    return idx;
}

bool operator==(const ReplayMemory& a, const ReplayMemory& b) {
    if (a.capacity() != b.capacity() || a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a.at(i) == b.at(i))) {
            return false;
        }
    }
    return true;
}

double discounted_target(double reward, int duration, double gamma, double bootstrap) {
    if (!(gamma >= 0.0 && gamma < 1.0)) {
        throw ConfigError("discount factor must be in [0, 1)");
    }
    if (duration < 1) {
        throw Error("action duration must be at least 1");
    }
    const double gd = std::pow(gamma, duration);
    const double coeff = duration == 1 ? 1.0 : (1.0 - gd) / ((1.0 - gamma) * duration);
    return coeff * reward + gd * bootstrap;
}

double compute_target(double reward, int duration, std::span<const double> next_state, const nn::DuelingNet& online,
                      const nn::DuelingNet& target, double gamma) {
    const auto q_online = nn::forward(online, next_state);
    const auto q_target = nn::forward(target, next_state);
    const int best = nn::argmax(q_online);
    return discounted_target(reward, duration, gamma, q_target[static_cast<std::size_t>(best)]);
}

Agent::Agent(const AgentConfig& config, std::uint64_t seed)
    : config_(validated(config)),
      init_seed_(mix_seed(seed, 1)),
      rng_(mix_seed(seed, 2)),
      online_(nn::initialize(config.net_shape(), mix_seed(init_seed_, 0))),
      target_(online_),
      memory_(config.memory_capacity),
      state_(config.history),
      grads_(config.net_shape()) {}

double Agent::epsilon() const {
    const double e = config_.eps_initial - static_cast<double>(decisions_) * config_.eps_decrement;
    return std::max(config_.eps_floor, e);
}

AgentAction Agent::select_action() {
    const double eps = epsilon();
    ++decisions_;
    if (eps > 0.0 && rng_.bernoulli(eps)) {
        const int idx = static_cast<int>(rng_.below(static_cast<std::uint64_t>(config_.action_count())));
        return action_from_index(idx, config_.channels);
    }
    return greedy_action();
}

AgentAction Agent::greedy_action(std::vector<double>* q_out) const {
    const auto s = encoded_state();
    const auto q = nn::forward_batch(online_, s, 1, ws_);
    if (q_out != nullptr) {
        q_out->assign(q.begin(), q.end());
    }
    return action_from_index(nn::argmax(q), config_.channels);
}

std::vector<double> Agent::encoded_state() const {
    return encode_state(state_, config_.k_max, config_.channels);
}

void Agent::record_experience(const AgentAction& action, const StepOutcome& outcome) {
    Experience e;
    e.window.reserve(static_cast<std::size_t>(config_.history) + 1);
    e.window.assign(state_.entries().begin(), state_.entries().end());
    const HistoryEntry entry{outcome.observation, static_cast<std::uint8_t>(action.k),
                             static_cast<std::uint8_t>(action.channel)};
    e.window.push_back(entry);
    e.action = action;
    e.reward = outcome.reward;
    e.duration = action.duration();
    state_.push(entry);
    memory_.push(std::move(e));
}

std::optional<double> Agent::train_step() {
    const int b = config_.batch_size;
    if (memory_.size() < static_cast<std::size_t>(b)) {
        return std::nullopt;
    }
    const auto picks = memory_.sample(static_cast<std::size_t>(b), rng_);
    const std::size_t seq = static_cast<std::size_t>(config_.history * config_.feature_dim());
    batch_states_.resize(seq * picks.size());
    batch_next_.resize(seq * picks.size());
    batch_actions_.resize(picks.size());
    batch_targets_.resize(picks.size());
    batch_best_.resize(picks.size());
    for (std::size_t i = 0; i < picks.size(); ++i) {
        const Experience& e = memory_.at(picks[i]);
        encode_rows(e.state(), config_.k_max, config_.channels, {batch_states_.data() + i * seq, seq});
        encode_rows(e.next_state(), config_.k_max, config_.channels, {batch_next_.data() + i * seq, seq});
        batch_actions_[i] = action_index(e.action, config_.channels);
    }

    const std::size_t na = static_cast<std::size_t>(config_.action_count());
    {
        const auto q = nn::forward_batch(online_, batch_next_, b, ws_next_);
        for (std::size_t i = 0; i < picks.size(); ++i) {
            batch_best_[i] = nn::argmax(q.subspan(i * na, na));
        }
    }
    {
        const auto q = nn::forward_batch(target_, batch_next_, b, ws_next_);
        for (std::size_t i = 0; i < picks.size(); ++i) {
            const Experience& e = memory_.at(picks[i]);
            const double boot = q[i * na + static_cast<std::size_t>(batch_best_[i])];
            batch_targets_[i] = discounted_target(e.reward, e.duration, config_.gamma, boot);
        }
    }

    // mean squared error over the batch
    const double loss = nn::backward_batch(online_, batch_states_, b, batch_actions_, batch_targets_, 2.0 / b, grads_, ws_);
    nn::optimizer_step(online_, grads_, opt_state_, config_.optimizer);
    if (opt_state_.steps % static_cast<std::uint64_t>(config_.target_sync_period) == 0) {
        std::copy(online_.values().begin(), online_.values().end(), target_.values().begin());
    }
    return loss;
}

void Agent::reset(std::span<const nn::Layer> layers) {
    ++init_counter_;
    nn::initialize_layers(online_, layers, mix_seed(init_seed_, init_counter_));
    std::copy(online_.values().begin(), online_.values().end(), target_.values().begin());
    opt_state_ = nn::OptimizerState{};
    memory_.clear();
    decisions_ = 0;
}

}  // namespace clmac
