#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpa/qnetwork.hpp"
#include "bpa/rng.hpp"
#include "bpa/types.hpp"

namespace bpa {

struct Transition {
    Observation obs;
    std::size_t action = 0;
    double reward = 0.0;
    Observation next_obs;
    bool terminal = false;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 10000) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
        items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
    }

    void push(Transition t) {
        if (items_.size() < capacity_) {
            items_.push_back(std::move(t));
        } else {
            items_[next_] = std::move(t);
        }
        next_ = (next_ + 1) % capacity_;
    }

    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }

    // Uniform sampling with replacement.
    std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const {
        if (batch == 0 || items_.size() < batch) throw std::logic_error("replay buffer holds fewer transitions than the batch");
        std::vector<const Transition*> out(batch);
        for (auto& p : out) p = &items_[rng.uniform_index(items_.size())];
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> items_;
};

struct Hyperparams {
    double epsilon_start = 1.0;
    double epsilon_decay = 0.99;
    double epsilon_floor = 0.01;
    double learning_rate = 0.01;
    double gamma = 0.99;
    int episodes = 500;
    std::size_t batch_size = 32;
    std::size_t target_sync = 1000;
    std::size_t replay_capacity = 10000;
    std::vector<std::size_t> hidden{64, 64};
    // Global gradient-norm cap applied before each SGD step; 0 disables it.
    double max_grad_norm = 10.0;

    void validate() const {
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
        if (!(epsilon_floor >= 0.0 && epsilon_floor <= epsilon_start && epsilon_start <= 1.0))
            throw std::invalid_argument("epsilon bounds must satisfy 0 <= floor <= start <= 1");
        if (!(epsilon_decay > 0.0 && epsilon_decay <= 1.0)) throw std::invalid_argument("epsilon decay must lie in (0, 1]");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
        if (episodes < 1 || batch_size == 0 || target_sync == 0 || replay_capacity < batch_size)
            throw std::invalid_argument("episodes, batch, sync interval and replay capacity must be positive");
        if (max_grad_norm < 0.0) throw std::invalid_argument("max_grad_norm must be non-negative");
    }
};

inline double epsilon_at(int episode, const Hyperparams& h) {
    if (episode < 0) throw std::invalid_argument("episode must be non-negative");
    return std::max(h.epsilon_floor, h.epsilon_start * std::pow(h.epsilon_decay, episode));
}

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> bias;

    double squared_norm() const {
        double s = 0.0;
        for (const auto& w : weights) s += w.squaredNorm();
        for (const auto& b : bias) s += b.squaredNorm();
        return s;
    }
};

struct TdEvaluation {
    double loss = 0.0;
    Gradients grads;
};

// TD targets r + gamma * max_a Q_target(s', a), or r on terminal transitions.
inline Eigen::VectorXd td_targets(const QNetwork& target_net, std::span<const Transition* const> batch, double gamma) {
    const auto n = static_cast<Eigen::Index>(batch.size());
    Eigen::MatrixXd next(target_net.input_size(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Observation& o = batch[j]->next_obs;
        if (o.size() != target_net.input_size()) throw std::invalid_argument("transition dimension mismatch");
        for (std::size_t i = 0; i < o.size(); ++i) next(static_cast<Eigen::Index>(i), j) = o[i];
    }
    const Eigen::MatrixXd q_next = target_net.forward(next);
    Eigen::VectorXd y(n);
    for (Eigen::Index j = 0; j < n; ++j)
        y(j) = batch[j]->terminal ? batch[j]->reward : batch[j]->reward + gamma * q_next.col(j).maxCoeff();
    return y;
}

// Mean squared TD error of `net` against the given targets, with its
// analytic parameter gradient.
inline TdEvaluation td_loss_and_gradient(const QNetwork& net, std::span<const Transition* const> batch,
                                         const Eigen::VectorXd& targets) {
    if (batch.empty()) throw std::invalid_argument("td batch must be non-empty");
    const auto n = static_cast<Eigen::Index>(batch.size());
    const auto& layers = net.layers();

    Eigen::MatrixXd x(net.input_size(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Observation& o = batch[j]->obs;
        if (o.size() != net.input_size()) throw std::invalid_argument("transition dimension mismatch");
        if (batch[j]->action >= net.output_size()) throw std::out_of_range("transition action out of range");
        for (std::size_t i = 0; i < o.size(); ++i) x(static_cast<Eigen::Index>(i), j) = o[i];
    }

    std::vector<Eigen::MatrixXd> acts{x};
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Eigen::MatrixXd z = (layers[i].weights * acts.back()).colwise() + layers[i].bias;
        if (i + 1 < layers.size()) z = z.cwiseMax(0.0);
        acts.push_back(std::move(z));
    }
    const Eigen::MatrixXd& q = acts.back();

    TdEvaluation ev;
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(q.rows(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto a = static_cast<Eigen::Index>(batch[j]->action);
        const double err = q(a, j) - targets(j);
        ev.loss += err * err;
        delta(a, j) = 2.0 * err / static_cast<double>(n);
    }
    ev.loss /= static_cast<double>(n);

    ev.grads.weights.resize(layers.size());
    ev.grads.bias.resize(layers.size());
    for (std::size_t i = layers.size(); i-- > 0;) {
        ev.grads.weights[i] = delta * acts[i].transpose();
        ev.grads.bias[i] = delta.rowwise().sum();
        if (i > 0) {
            delta = layers[i].weights.transpose() * delta;
            delta = delta.cwiseProduct((acts[i].array() > 0.0).cast<double>().matrix());
        }
    }
    return ev;
}

inline void apply_sgd(QNetwork& net, const Gradients& g, double learning_rate, double max_grad_norm) {
    double scale = learning_rate;
    if (max_grad_norm > 0.0) {
        const double norm = std::sqrt(g.squared_norm());
        if (norm > max_grad_norm) scale *= max_grad_norm / norm;
    }
    auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].weights -= scale * g.weights[i];
        layers[i].bias -= scale * g.bias[i];
    }
}

// One SGD step on the mean squared TD error; returns the pre-step loss.
inline double td_update(QNetwork& net, const QNetwork& target_net, std::span<const Transition* const> batch,
                        double gamma, double learning_rate, double max_grad_norm = 0.0) {
    const Eigen::VectorXd y = td_targets(target_net, batch, gamma);
    const TdEvaluation ev = td_loss_and_gradient(net, batch, y);
    if (!std::isfinite(ev.loss)) throw std::runtime_error("non-finite TD loss");
    apply_sgd(net, ev.grads, learning_rate, max_grad_norm);
    return ev.loss;
}

// Online network, target network and replay memory for one training run.
class DqnLearner {
public:
    DqnLearner(std::size_t obs_size, std::size_t actions, const Hyperparams& h, Rng& init_rng)
        : hyper_(h), replay_(h.replay_capacity) {
        std::vector<std::size_t> sizes{obs_size};
        sizes.insert(sizes.end(), h.hidden.begin(), h.hidden.end());
        sizes.push_back(actions);
        net_ = QNetwork::random(sizes, init_rng);
        target_ = net_;
    }

    const QNetwork& network() const { return net_; }
    const QNetwork& target_network() const { return target_; }
    const ReplayBuffer& replay() const { return replay_; }
    std::size_t update_count() const { return updates_; }

    EnvAction greedy(const Observation& obs) const { return greedy_action(net_, obs); }

    // Stores the transition and, once enough experience exists, performs one
    // TD update. Returns the loss of that update or a negative value when none ran.
    double observe(Transition t, Rng& rng) {
        replay_.push(std::move(t));
        if (replay_.size() < hyper_.batch_size) return -1.0;
        const auto batch = replay_.sample(hyper_.batch_size, rng);
        const double loss = td_update(net_, target_, batch, hyper_.gamma, hyper_.learning_rate, hyper_.max_grad_norm);
        if (!net_.finite()) throw std::runtime_error("network parameters diverged");
        if (++updates_ % hyper_.target_sync == 0) target_ = net_;
        return loss;
    }

private:
    Hyperparams hyper_;
    QNetwork net_;
    QNetwork target_;
    ReplayBuffer replay_;
    std::size_t updates_ = 0;
};

}  // namespace bpa
