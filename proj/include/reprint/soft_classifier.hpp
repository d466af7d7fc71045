#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "reprint/embedding_store.hpp"
#include "reprint/errors.hpp"
#include "reprint/rng.hpp"

namespace reprint {

enum class Optimizer { sgd, adam };

inline std::string_view to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

inline Optimizer parse_optimizer(std::string_view s) {
    if (s == "sgd") return Optimizer::sgd;
    if (s == "adam" || s == "adaptive_moments") return Optimizer::adam;
    throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

struct MlpConfig {
    std::vector<std::size_t> hidden_sizes{128};  // empty: softmax regression
    int epochs = 30;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    Optimizer optimizer = Optimizer::adam;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs <= 0) throw ConfigError("epochs must be positive");
        if (batch_size == 0) throw ConfigError("batch size must be positive");
        if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
        if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
        for (auto h : hidden_sizes) {
            if (h == 0) throw ConfigError("hidden layer width must be positive");
        }
    }
};

/// Affine map x -> W x + b with W of shape (out x in).
struct DenseLayer {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
};

/// ReLU MLP with a softmax output over the vocabulary.
class MlpModel {
public:
    MlpModel(std::size_t dim, ClassVocabulary vocab, std::vector<DenseLayer> layers)
        : dim_(dim), vocab_(std::move(vocab)), layers_(std::move(layers)) {
        if (layers_.empty()) throw DimError("model needs at least one layer");
        Eigen::Index in = static_cast<Eigen::Index>(dim_);
        for (const auto& l : layers_) {
            if (l.weights.cols() != in || l.bias.size() != l.weights.rows()) throw DimError("inconsistent layer shapes");
            if (!l.weights.allFinite() || !l.bias.allFinite()) throw DataError("non-finite model parameter");
            in = l.weights.rows();
        }
        if (in != static_cast<Eigen::Index>(vocab_.size())) throw DimError("output layer width differs from K");
    }

    /// Fan-in scaled uniform initialization U(-1/sqrt(in), 1/sqrt(in)).
    static MlpModel initialize(std::size_t dim, const ClassVocabulary& vocab, std::span<const std::size_t> hidden,
                               std::uint64_t seed) {
        std::vector<DenseLayer> layers;
        KeyedRng rng(seed, {stream::train, 0x1A17});
        std::size_t in = dim;
        auto make = [&](std::size_t out) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(in));
            std::uniform_real_distribution<double> u(-bound, bound);
            DenseLayer l{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
            for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
                for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = u(rng);
            }
            for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = u(rng);
            layers.push_back(std::move(l));
            in = out;
        };
        for (auto h : hidden) make(h);
        make(vocab.size());
        return MlpModel(dim, vocab, std::move(layers));
    }

    std::size_t dim() const noexcept { return dim_; }
    const ClassVocabulary& vocab() const noexcept { return vocab_; }
    std::size_t num_classes() const noexcept { return vocab_.size(); }
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    std::vector<DenseLayer>& mutable_layers() noexcept { return layers_; }

    /// Output logits for a batch of rows (n x d -> n x K).
    Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const {
        Eigen::MatrixXd a = x;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            Eigen::MatrixXd z = (a * layers_[l].weights.transpose()).rowwise() + layers_[l].bias.transpose();
            a = l + 1 < layers_.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : std::move(z);
        }
        return a;
    }

private:
    std::size_t dim_;
    ClassVocabulary vocab_;
    std::vector<DenseLayer> layers_;
};

/// Row-wise softmax.
inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd p = logits.colwise() - logits.rowwise().maxCoeff();
    p = p.array().exp();
    p.array().colwise() /= p.rowwise().sum().array();
    return p;
}

inline Eigen::MatrixXd to_matrix(std::span<const float> values, std::size_t rows, std::size_t cols) {
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * cols + c];
        }
    }
    return m;
}

struct LossAndGradient {
    double loss;
    std::vector<DenseLayer> gradient;
};

/// Mean soft cross-entropy -sum_k y_k log p_k over the rows of (x, y), plus
/// weight_decay / 2 * |W|^2 over all weight matrices, and its gradient.
inline LossAndGradient loss_and_gradient(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                         double weight_decay = 0.0) {
    const auto& layers = model.layers();
    const std::size_t depth = layers.size();
    std::vector<Eigen::MatrixXd> acts{x};  // inputs to each layer
    std::vector<Eigen::MatrixXd> pre;      // pre-activations
    for (std::size_t l = 0; l < depth; ++l) {
        pre.push_back((acts.back() * layers[l].weights.transpose()).rowwise() + layers[l].bias.transpose());
        if (l + 1 < depth) acts.push_back(pre.back().cwiseMax(0.0));
    }
    const Eigen::MatrixXd& z = pre.back();
    const Eigen::VectorXd zmax = z.rowwise().maxCoeff();
    const Eigen::MatrixXd shifted = z.colwise() - zmax;
    const Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log().matrix();
    const Eigen::MatrixXd logp = shifted.colwise() - lse;
    const double n = static_cast<double>(x.rows());

    LossAndGradient out;
    out.loss = -(y.array() * logp.array()).sum() / n;
    for (const auto& l : layers) out.loss += 0.5 * weight_decay * l.weights.squaredNorm();

    // softmax + cross-entropy: dL/dz = (p * sum_k y_k - y) / n
    const Eigen::MatrixXd p = logp.array().exp();
    Eigen::MatrixXd dz = ((p.array().colwise() * y.rowwise().sum().array()) - y.array()).matrix() / n;
    out.gradient.resize(depth);
    for (std::size_t l = depth; l-- > 0;) {
        out.gradient[l].weights = dz.transpose() * acts[l] + weight_decay * layers[l].weights;
        out.gradient[l].bias = dz.colwise().sum().transpose();
        if (l > 0) {
            Eigen::MatrixXd da = dz * layers[l].weights;
            dz = (pre[l - 1].array() > 0.0).select(da, 0.0);
        }
    }
    return out;
}

/// Mean soft cross-entropy of the model on a whole set (no weight decay).
inline double dataset_loss(const MlpModel& model, const SoftLabeledSet& set) {
    const auto x = to_matrix(set.values(), set.size(), set.dim());
    const auto y = to_matrix(set.soft_labels(), set.size(), set.num_classes());
    return loss_and_gradient(model, x, y).loss;
}

struct TrainingRun {
    MlpModel model;
    std::vector<double> epoch_losses;  // mean mini-batch loss of each epoch
};

/// Mini-batch training on soft labels. Shuffling and initialization are
/// drawn from streams keyed by the config seed.
inline TrainingRun train_with_history(const SoftLabeledSet& train_set, const MlpConfig& config) {
    config.validate();
    if (train_set.empty()) throw DataError("empty training set");
    const std::size_t n = train_set.size();
    const Eigen::MatrixXd x = to_matrix(train_set.values(), n, train_set.dim());
    const Eigen::MatrixXd y = to_matrix(train_set.soft_labels(), n, train_set.num_classes());

    TrainingRun run{MlpModel::initialize(train_set.dim(), train_set.vocab(), config.hidden_sizes, config.seed), {}};
    auto& layers = run.model.mutable_layers();

    std::vector<DenseLayer> m1;
    std::vector<DenseLayer> m2;
    for (const auto& l : layers) {
        m1.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()), Eigen::VectorXd::Zero(l.bias.size())});
    }
    m2 = m1;
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double adam_eps = 1e-8;
    long step = 0;

    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        KeyedRng rng(config.seed, {stream::train, static_cast<std::uint64_t>(epoch)});
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            const auto idx = std::span<const Eigen::Index>(order).subspan(start, end - start);
            const Eigen::MatrixXd bx = x(idx, Eigen::all);
            const Eigen::MatrixXd by = y(idx, Eigen::all);
            auto lg = loss_and_gradient(run.model, bx, by, config.weight_decay);
            if (!std::isfinite(lg.loss)) {
                throw DivergenceError(epoch, "non-finite training loss in epoch " + std::to_string(epoch));
            }
            loss_sum += lg.loss * static_cast<double>(end - start);
            ++step;
            for (std::size_t l = 0; l < layers.size(); ++l) {
                auto& g = lg.gradient[l];
                if (config.optimizer == Optimizer::sgd) {
                    layers[l].weights -= config.learning_rate * g.weights;
                    layers[l].bias -= config.learning_rate * g.bias;
                    continue;
                }
                const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
                const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
                m1[l].weights = beta1 * m1[l].weights + (1.0 - beta1) * g.weights;
                m2[l].weights = beta2 * m2[l].weights + (1.0 - beta2) * g.weights.cwiseAbs2();
                m1[l].bias = beta1 * m1[l].bias + (1.0 - beta1) * g.bias;
                m2[l].bias = beta2 * m2[l].bias + (1.0 - beta2) * g.bias.cwiseAbs2();
                layers[l].weights.array() -= config.learning_rate * (m1[l].weights.array() / c1) /
                                             ((m2[l].weights.array() / c2).sqrt() + adam_eps);
                layers[l].bias.array() -= config.learning_rate * (m1[l].bias.array() / c1) /
                                          ((m2[l].bias.array() / c2).sqrt() + adam_eps);
            }
        }
        const double epoch_loss = loss_sum / static_cast<double>(n);
        if (!std::isfinite(epoch_loss)) {
            throw DivergenceError(epoch, "non-finite training loss in epoch " + std::to_string(epoch));
        }
        run.epoch_losses.push_back(epoch_loss);
    }
    return run;
}

inline MlpModel train(const SoftLabeledSet& train_set, const MlpConfig& config) {
    return train_with_history(train_set, config).model;
}

inline std::vector<double> predict_proba(const MlpModel& model, std::span<const float> x) {
    if (x.size() != model.dim()) throw DimError("input dimension " + std::to_string(x.size()) + " vs model " + std::to_string(model.dim()));
    const Eigen::MatrixXd p = softmax_rows(model.logits(to_matrix(x, 1, x.size())));
    return std::vector<double>(p.data(), p.data() + p.size());
}

/// Argmax class of every row, lowest index on ties.
inline std::vector<std::uint32_t> predict_classes(const MlpModel& model, const LabeledEmbeddingSet& set) {
    if (set.dim() != model.dim()) throw DimError("test set dimension differs from the model");
    const Eigen::MatrixXd p = softmax_rows(model.logits(to_matrix(set.values(), set.size(), set.dim())));
    std::vector<std::uint32_t> out(set.size());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < p.cols(); ++c) {
            if (p(r, c) > p(r, best)) best = c;
        }
        out[static_cast<std::size_t>(r)] = static_cast<std::uint32_t>(best);
    }
    return out;
}

/// Fraction of argmax-correct predictions.
inline double evaluate(const MlpModel& model, const LabeledEmbeddingSet& test_set) {
    if (test_set.empty()) throw EmptyTestError("empty test set");
    if (!(test_set.vocab() == model.vocab())) throw VocabError("test vocabulary differs from the model");
    const auto pred = predict_classes(model, test_set);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test_set.label(i);
    return static_cast<double>(correct) / static_cast<double>(pred.size());
}

// Model container: "MLPW" u32 version=1, u32 d, u32 K, K x (u32 len, name),
// u32 layers, then per layer u32 out, u32 in, out*in f32 (row-major), out f32.

inline constexpr std::array<char, 4> kModelMagic{'M', 'L', 'P', 'W'};

inline void save_model(const MlpModel& model, const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.raw(kModelMagic.data(), kModelMagic.size());
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(model.dim()));
    w.u32(static_cast<std::uint32_t>(model.num_classes()));
    for (const auto& name : model.vocab().names()) {
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name);
    }
    w.u32(static_cast<std::uint32_t>(model.layers().size()));
    for (const auto& l : model.layers()) {
        w.u32(static_cast<std::uint32_t>(l.weights.rows()));
        w.u32(static_cast<std::uint32_t>(l.weights.cols()));
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.f32(static_cast<float>(l.weights(r, c)));
        }
        for (Eigen::Index r = 0; r < l.bias.size(); ++r) w.f32(static_cast<float>(l.bias[r]));
    }
    detail::dump(path, w.buffer());
}

inline MlpModel load_model(const std::filesystem::path& path) {
    const auto bytes = detail::slurp(path);
    detail::ByteReader r(bytes);
    std::array<char, 4> magic{};
    r.take(magic.data(), magic.size());
    if (magic != kModelMagic) throw FormatError("bad model magic");
    if (r.u32() != 1) throw FormatError("unsupported model version");
    const std::size_t d = r.u32();
    const std::size_t k = r.u32();
    std::vector<std::string> names;
    for (std::size_t c = 0; c < k; ++c) names.push_back(r.str(r.u32()));
    const std::size_t depth = r.u32();
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l < depth; ++l) {
        const Eigen::Index out = r.u32();
        const Eigen::Index in = r.u32();
        if (r.remaining() < static_cast<std::size_t>(4 * (out * in + out))) throw FormatError("truncated model");
        DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
        for (Eigen::Index i = 0; i < out; ++i) {
            for (Eigen::Index j = 0; j < in; ++j) layer.weights(i, j) = r.f32();
        }
        for (Eigen::Index i = 0; i < out; ++i) layer.bias[i] = r.f32();
        layers.push_back(std::move(layer));
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after model");
    return MlpModel(d, ClassVocabulary(std::move(names)), std::move(layers));
}

} // namespace reprint
