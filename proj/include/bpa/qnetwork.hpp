#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpa/rng.hpp"
#include "bpa/types.hpp"

namespace bpa {

struct DenseLayer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;     // out
};

// Fully connected Q-network: rectifier on hidden layers, identity on the output.
class QNetwork {
public:
    QNetwork() = default;

    // Zero-initialised network with the given layer sizes (input first, output last).
    explicit QNetwork(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
        if (sizes_.size() < 2) throw std::invalid_argument("QNetwork needs at least input and output sizes");
        for (std::size_t s : sizes_)
            if (s == 0) throw std::invalid_argument("QNetwork layer size must be positive");
        for (std::size_t i = 0; i + 1 < sizes_.size(); ++i)
            layers_.push_back({Eigen::MatrixXd::Zero(sizes_[i + 1], sizes_[i]), Eigen::VectorXd::Zero(sizes_[i + 1])});
    }

    // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
    static QNetwork random(std::vector<std::size_t> sizes, Rng& rng) {
        QNetwork net(std::move(sizes));
        for (DenseLayer& l : net.layers_) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(l.weights.cols()));
            for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
                for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = rng.uniform(-bound, bound);
            for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = rng.uniform(-bound, bound);
        }
        return net;
    }

    std::size_t input_size() const { return sizes_.front(); }
    std::size_t output_size() const { return sizes_.back(); }
    const std::vector<std::size_t>& sizes() const { return sizes_; }
    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const DenseLayer& l : layers_) n += l.weights.size() + l.bias.size();
        return n;
    }

    // Column-per-sample batch forward pass.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const {
        if (static_cast<std::size_t>(inputs.rows()) != input_size())
            throw std::invalid_argument("QNetwork input dimension mismatch");
        Eigen::MatrixXd a = inputs;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            Eigen::MatrixXd z = (layers_[i].weights * a).colwise() + layers_[i].bias;
            a = i + 1 < layers_.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : std::move(z);
        }
        return a;
    }

    std::vector<double> q_values(const Observation& obs) const {
        if (obs.size() != input_size()) throw std::invalid_argument("QNetwork input dimension mismatch");
        const Eigen::Map<const Eigen::VectorXd> x(obs.vec().data(), static_cast<Eigen::Index>(obs.size()));
        const Eigen::MatrixXd q = forward(x);
        return {q.data(), q.data() + q.size()};
    }

    bool finite() const {
        for (const DenseLayer& l : layers_)
            if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
        return true;
    }

    friend bool operator==(const QNetwork& a, const QNetwork& b) {
        if (a.sizes_ != b.sizes_) return false;
        for (std::size_t i = 0; i < a.layers_.size(); ++i)
            if (a.layers_[i].weights != b.layers_[i].weights || a.layers_[i].bias != b.layers_[i].bias) return false;
        return true;
    }

    // Text checkpoint: a "bpa-qnet 1" line, a "layers" line with the layer
    // sizes, then per layer the weight rows (row-major) followed by one bias line.
    void save(std::ostream& out) const {
        out << "bpa-qnet 1\nlayers " << sizes_.size();
        for (std::size_t s : sizes_) out << ' ' << s;
        out << '\n' << std::setprecision(17);
        for (const DenseLayer& l : layers_) {
            for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
                for (Eigen::Index c = 0; c < l.weights.cols(); ++c) out << (c ? " " : "") << l.weights(r, c);
                out << '\n';
            }
            for (Eigen::Index r = 0; r < l.bias.size(); ++r) out << (r ? " " : "") << l.bias(r);
            out << '\n';
        }
    }

    static QNetwork load(std::istream& in) {
        std::string magic, tag;
        int version = 0;
        std::size_t count = 0;
        if (!(in >> magic >> version) || magic != "bpa-qnet" || version != 1)
            throw std::runtime_error("not a bpa-qnet v1 checkpoint");
        if (!(in >> tag >> count) || tag != "layers" || count < 2) throw std::runtime_error("bad checkpoint header");
        std::vector<std::size_t> sizes(count);
        for (std::size_t& s : sizes)
            if (!(in >> s)) throw std::runtime_error("bad checkpoint layer sizes");
        QNetwork net(sizes);
        for (DenseLayer& l : net.layers_) {
            for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
                for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
                    if (!(in >> l.weights(r, c))) throw std::runtime_error("truncated checkpoint");
            for (Eigen::Index r = 0; r < l.bias.size(); ++r)
                if (!(in >> l.bias(r))) throw std::runtime_error("truncated checkpoint");
        }
        return net;
    }

    void save_file(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
        save(out);
    }

    static QNetwork load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
        return load(in);
    }

private:
    std::vector<std::size_t> sizes_;
    std::vector<DenseLayer> layers_;
};

// Argmax of the Q-values; ties go to the lowest index.
inline EnvAction argmax_action(const std::vector<double>& q) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < q.size(); ++i)
        if (q[i] > q[best]) best = i;
    return EnvAction{best};
}

inline EnvAction greedy_action(const QNetwork& net, const Observation& obs) {
    return argmax_action(net.q_values(obs));
}

}  // namespace bpa
