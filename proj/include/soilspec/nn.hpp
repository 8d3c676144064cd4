#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "soilspec/rng.hpp"
#include "soilspec/tensor.hpp"

namespace soilspec::nn {

/// A parameter tensor with its gradient buffer and weight-decay eligibility.
/// Gradients are overwritten (not accumulated) by each backward pass.
struct NamedTensor {
    std::string name;
    Tensor value;
    Tensor grad;
    bool decay = false;  // weight decay applies (conv/linear weights only)

    NamedTensor() = default;
    NamedTensor(std::string n, std::vector<std::size_t> shape, bool d)
        : name(std::move(n)), value(shape), grad(std::move(shape)), decay(d) {}
};

class Layer {
public:
    virtual ~Layer() = default;

    /// Feature maps are [batch, channels, length]; flat vectors [batch, features].
    virtual Tensor forward(const Tensor& x, bool train) = 0;

    /// Backpropagates grad_out through the most recent forward call; fills the
    /// layer's parameter gradients and returns the gradient w.r.t. its input.
    virtual Tensor backward(const Tensor& grad_out) = 0;

    virtual std::vector<NamedTensor*> parameters() { return {}; }

    /// Tensors persisted in checkpoints: parameter values plus buffers such as
    /// batch-norm running statistics.
    virtual std::vector<Tensor*> state_tensors() { return {}; }

    virtual void init_params(Rng&, double /*leak*/) {}

    virtual std::string kind() const = 0;
    virtual nlohmann::ordered_json descriptor() const;
};

class Conv1d : public Layer {
public:
    Conv1d(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
           std::size_t stride, std::size_t pad);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<NamedTensor*> parameters() override { return {&w_, &b_}; }
    std::vector<Tensor*> state_tensors() override { return {&w_.value, &b_.value}; }
    void init_params(Rng& rng, double leak) override;
    std::string kind() const override { return "conv1d"; }
    nlohmann::ordered_json descriptor() const override;

    static std::size_t output_length(std::size_t in_len, std::size_t kernel, std::size_t stride,
                                     std::size_t pad);

    NamedTensor& weights() { return w_; }
    NamedTensor& bias() { return b_; }

private:
    std::size_t in_ch_, out_ch_, kernel_, stride_, pad_;
    NamedTensor w_;  // [out_ch, in_ch, kernel]
    NamedTensor b_;  // [out_ch]
    Tensor input_;
    std::vector<double> col_;  // im2col buffer cached for backward
    std::size_t out_len_ = 0, batch_ = 0;

    void im2col(const Tensor& x);
};

class BatchNorm1d : public Layer {
public:
    BatchNorm1d(std::string name, std::size_t channels, double momentum = 0.01,
                double eps = 1e-5);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<NamedTensor*> parameters() override { return {&gamma_, &beta_}; }
    std::vector<Tensor*> state_tensors() override {
        return {&gamma_.value, &beta_.value, &running_mean_, &running_var_};
    }
    std::string kind() const override { return "batchnorm1d"; }
    nlohmann::ordered_json descriptor() const override;

    bool stats_ready() const { return stats_ready_; }
    void set_stats_ready(bool r) { stats_ready_ = r; }
    Tensor& running_mean() { return running_mean_; }
    Tensor& running_var() { return running_var_; }
    NamedTensor& gamma() { return gamma_; }
    NamedTensor& beta() { return beta_; }

private:
    std::size_t channels_;
    double momentum_, eps_;
    NamedTensor gamma_, beta_;
    Tensor running_mean_, running_var_;
    bool stats_ready_ = false;

    Tensor xhat_;
    std::vector<double> inv_std_;
    bool cached_train_ = false;
    std::vector<std::size_t> in_shape_;
};

class LeakyReLU : public Layer {
public:
    explicit LeakyReLU(double leak);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "leaky_relu"; }
    nlohmann::ordered_json descriptor() const override;

    double leak() const { return leak_; }

private:
    double leak_;
    Tensor input_;
};

class Linear : public Layer {
public:
    Linear(std::string name, std::size_t in_features, std::size_t out_features);

    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<NamedTensor*> parameters() override { return {&w_, &b_}; }
    std::vector<Tensor*> state_tensors() override { return {&w_.value, &b_.value}; }
    void init_params(Rng& rng, double leak) override;
    std::string kind() const override { return "linear"; }
    nlohmann::ordered_json descriptor() const override;

    NamedTensor& weights() { return w_; }
    NamedTensor& bias() { return b_; }

private:
    std::size_t in_features_, out_features_;
    NamedTensor w_;  // [out_features, in_features]
    NamedTensor b_;  // [out_features]
    Tensor input_;
};

class Flatten : public Layer {
public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "flatten"; }
    nlohmann::ordered_json descriptor() const override;

private:
    std::vector<std::size_t> in_shape_;
};

/// Architecture stage row, mirroring the summary table.
struct StageInfo {
    std::string stage;
    std::string operation;
    std::size_t channels = 0;
    std::size_t length = 0;   // 0 for flat vector stages
    std::size_t params = 0;
};

/// An ordered layer stack with building-block boundaries, a probe point for
/// activation/gradient capture, and checkpoint support.
class Model {
public:
    Model() = default;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
    void mark_block_end() { block_ends_.push_back(layers_.size()); }

    Tensor forward(const Tensor& x, bool train = false);
    Tensor backward(const Tensor& grad_out);

    std::vector<NamedTensor*> parameters();
    std::size_t count_params() const;

    std::size_t n_blocks() const { return block_ends_.size(); }
    std::size_t n_layers() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }
    const std::vector<std::size_t>& block_ends() const { return block_ends_; }
    void set_block_ends(std::vector<std::size_t> ends) { block_ends_ = std::move(ends); }

    /// Captures the activation and gradient at the output of building block
    /// `block` (0-based) on the next forward/backward pair; -1 disables.
    void set_probe(int block);
    const Tensor& probe_activation() const { return probe_activation_; }
    const Tensor& probe_gradient() const { return probe_gradient_; }

    /// Copy of every state tensor, used to retain the best-validation model.
    std::vector<double> state_snapshot() const;
    void restore_state(const std::vector<double>& snapshot);

    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    std::vector<StageInfo> stages;

private:
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<std::size_t> block_ends_;
    int probe_block_ = -1;
    Tensor probe_activation_, probe_gradient_;
};

/// Adam with decoupled weight decay. Decay is applied only to parameters
/// flagged for it (conv/linear weights; never biases or batch-norm gain/bias).
class AdamW {
public:
    AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
          double eps = 1e-8)
        : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<NamedTensor*>& params);
    std::uint64_t step_count() const { return t_; }

private:
    double lr_, wd_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    struct Slot {
        std::vector<double> m, v;
    };
    std::vector<Slot> slots_;
};

/// Central finite-difference check of every parameter and input gradient
/// against the analytic backward pass; returns the max relative error.
double gradient_check(Model& model, const Tensor& input, double eps = 1e-5,
                      std::uint64_t seed = 0, bool train = true);
double gradient_check(Layer& layer, const Tensor& input, double eps = 1e-5,
                      std::uint64_t seed = 0, bool train = true);

/// Checkpoint container: a JSON manifest (layer list, shapes, seed, step,
/// caller extras) followed by raw little-endian IEEE-754 tensor payloads.
void save_model(const Model& model, const std::string& path,
                const nlohmann::ordered_json& extras = nlohmann::ordered_json::object());
Model load_model(const std::string& path, nlohmann::ordered_json* extras = nullptr);

std::unique_ptr<Layer> layer_from_descriptor(const nlohmann::json& d);

}  // namespace soilspec::nn
