#include "soilspec/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <stdexcept>

namespace soilspec::nn {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

constexpr char kMagic[] = "SOILSPEC-CKPT-1\n";

bool little_endian_host() {
    const std::uint16_t probe = 0x1;
    return reinterpret_cast<const unsigned char*>(&probe)[0] == 1;
}

template <typename T>
void swap_bytes(T& v) {
    auto* p = reinterpret_cast<unsigned char*>(&v);
    std::reverse(p, p + sizeof(T));
}

template <typename T>
void write_le(std::ostream& out, T v) {
    if (!little_endian_host()) swap_bytes(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_le(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    if (!little_endian_host()) swap_bytes(v);
}

}  // namespace

nlohmann::ordered_json Layer::descriptor() const {
    nlohmann::ordered_json d;
    d["kind"] = kind();
    return d;
}

// ---------------------------------------------------------------------------
// Conv1d

Conv1d::Conv1d(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
               std::size_t stride, std::size_t pad)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      w_(name + ".w", {out_ch, in_ch, kernel}, true),
      b_(name + ".b", {out_ch}, false) {
    if (in_ch == 0 || out_ch == 0 || kernel == 0 || stride == 0)
        throw std::invalid_argument("Conv1d: zero-sized configuration");
}

std::size_t Conv1d::output_length(std::size_t in_len, std::size_t kernel, std::size_t stride,
                                  std::size_t pad) {
    if (in_len + 2 * pad < kernel)
        throw std::invalid_argument("Conv1d: input shorter than kernel");
    return (in_len + 2 * pad - kernel) / stride + 1;
}

void Conv1d::init_params(Rng& rng, double leak) {
    const double fan_in = static_cast<double>(in_ch_ * kernel_);
    const double gain = std::sqrt(2.0 / (1.0 + leak * leak));
    const double bound = gain * std::sqrt(3.0 / fan_in);
    for (double& v : w_.value.storage()) v = rng.uniform(-bound, bound);
    b_.value.fill(0.0);
}

void Conv1d::im2col(const Tensor& x) {
    const std::size_t B = x.dim(0), L = x.dim(2), P = out_len_;
    col_.assign(in_ch_ * kernel_ * B * P, 0.0);
    const std::size_t row_len = B * P;
    for (std::size_t c = 0; c < in_ch_; ++c) {
        for (std::size_t kk = 0; kk < kernel_; ++kk) {
            double* row = col_.data() + (c * kernel_ + kk) * row_len;
            for (std::size_t b = 0; b < B; ++b) {
                const double* xs = x.data() + (b * in_ch_ + c) * L;
                double* dst = row + b * P;
                for (std::size_t q = 0; q < P; ++q) {
                    const std::ptrdiff_t l = static_cast<std::ptrdiff_t>(q * stride_ + kk) -
                                             static_cast<std::ptrdiff_t>(pad_);
                    dst[q] = (l >= 0 && l < static_cast<std::ptrdiff_t>(L))
                                 ? xs[static_cast<std::size_t>(l)]
                                 : 0.0;
                }
            }
        }
    }
}

Tensor Conv1d::forward(const Tensor& x, bool /*train*/) {
    if (x.rank() != 3 || x.dim(1) != in_ch_)
        throw std::invalid_argument("Conv1d " + w_.name + ": input shape mismatch");
    const std::size_t B = x.dim(0), L = x.dim(2);
    out_len_ = output_length(L, kernel_, stride_, pad_);
    batch_ = B;
    input_ = x;
    im2col(x);

    const std::size_t P = out_len_;
    CMapRM wm(w_.value.data(), static_cast<Eigen::Index>(out_ch_),
              static_cast<Eigen::Index>(in_ch_ * kernel_));
    CMapRM colm(col_.data(), static_cast<Eigen::Index>(in_ch_ * kernel_),
                static_cast<Eigen::Index>(B * P));
    MatRM outm(static_cast<Eigen::Index>(out_ch_), static_cast<Eigen::Index>(B * P));
    outm.noalias() = wm * colm;

    Tensor out({B, out_ch_, P});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t oc = 0; oc < out_ch_; ++oc) {
            const double bias = b_.value[oc];
            const double* src = outm.data() + oc * B * P + b * P;
            double* dst = out.data() + (b * out_ch_ + oc) * P;
            for (std::size_t q = 0; q < P; ++q) dst[q] = src[q] + bias;
        }
    return out;
}

Tensor Conv1d::backward(const Tensor& grad_out) {
    const std::size_t B = batch_, P = out_len_, L = input_.dim(2);
    if (grad_out.rank() != 3 || grad_out.dim(0) != B || grad_out.dim(1) != out_ch_ ||
        grad_out.dim(2) != P)
        throw std::invalid_argument("Conv1d " + w_.name + ": grad shape mismatch");

    // Gather grad_out into [out_ch, B*P].
    MatRM gm(static_cast<Eigen::Index>(out_ch_), static_cast<Eigen::Index>(B * P));
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t oc = 0; oc < out_ch_; ++oc)
            std::memcpy(gm.data() + oc * B * P + b * P,
                        grad_out.data() + (b * out_ch_ + oc) * P, P * sizeof(double));

    for (std::size_t oc = 0; oc < out_ch_; ++oc)
        b_.grad[oc] = gm.row(static_cast<Eigen::Index>(oc)).sum();

    CMapRM colm(col_.data(), static_cast<Eigen::Index>(in_ch_ * kernel_),
                static_cast<Eigen::Index>(B * P));
    MapRM gwm(w_.grad.data(), static_cast<Eigen::Index>(out_ch_),
              static_cast<Eigen::Index>(in_ch_ * kernel_));
    gwm.noalias() = gm * colm.transpose();

    CMapRM wm(w_.value.data(), static_cast<Eigen::Index>(out_ch_),
              static_cast<Eigen::Index>(in_ch_ * kernel_));
    MatRM gcol(static_cast<Eigen::Index>(in_ch_ * kernel_), static_cast<Eigen::Index>(B * P));
    gcol.noalias() = wm.transpose() * gm;

    Tensor grad_x(input_.shape());
    for (std::size_t c = 0; c < in_ch_; ++c)
        for (std::size_t kk = 0; kk < kernel_; ++kk) {
            const double* row = gcol.data() + (c * kernel_ + kk) * B * P;
            for (std::size_t b = 0; b < B; ++b) {
                double* gx = grad_x.data() + (b * in_ch_ + c) * L;
                const double* src = row + b * P;
                for (std::size_t q = 0; q < P; ++q) {
                    const std::ptrdiff_t l = static_cast<std::ptrdiff_t>(q * stride_ + kk) -
                                             static_cast<std::ptrdiff_t>(pad_);
                    if (l >= 0 && l < static_cast<std::ptrdiff_t>(L))
                        gx[static_cast<std::size_t>(l)] += src[q];
                }
            }
        }
    return grad_x;
}

nlohmann::ordered_json Conv1d::descriptor() const {
    nlohmann::ordered_json d;
    d["kind"] = kind();
    d["name"] = w_.name.substr(0, w_.name.size() - 2);
    d["in_ch"] = in_ch_;
    d["out_ch"] = out_ch_;
    d["kernel"] = kernel_;
    d["stride"] = stride_;
    d["pad"] = pad_;
    return d;
}

// ---------------------------------------------------------------------------
// BatchNorm1d

BatchNorm1d::BatchNorm1d(std::string name, std::size_t channels, double momentum, double eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(name + ".gamma", {channels}, false),
      beta_(name + ".beta", {channels}, false),
      running_mean_({channels}),
      running_var_({channels}) {
    gamma_.value.fill(1.0);
    running_var_.fill(1.0);
}

Tensor BatchNorm1d::forward(const Tensor& x, bool train) {
    const bool map3d = x.rank() == 3;
    if (!map3d && x.rank() != 2)
        throw std::invalid_argument("BatchNorm1d: expects rank 2 or 3 input");
    const std::size_t B = x.dim(0);
    const std::size_t C = x.dim(1);
    const std::size_t L = map3d ? x.dim(2) : 1;
    if (C != channels_) throw std::invalid_argument("BatchNorm1d: channel count mismatch");
    const std::size_t m = B * L;

    in_shape_ = x.shape();
    cached_train_ = train;
    xhat_ = Tensor(x.shape());
    inv_std_.assign(channels_, 0.0);

    Tensor out(x.shape());
    if (train) {
        if (m < 2) throw std::invalid_argument("BatchNorm1d: train mode needs >= 2 values per channel");
        for (std::size_t c = 0; c < C; ++c) {
            double mean = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* xs = x.data() + (b * C + c) * L;
                for (std::size_t l = 0; l < L; ++l) mean += xs[l];
            }
            mean /= static_cast<double>(m);
            double var = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* xs = x.data() + (b * C + c) * L;
                for (std::size_t l = 0; l < L; ++l) var += (xs[l] - mean) * (xs[l] - mean);
            }
            var /= static_cast<double>(m);
            const double inv = 1.0 / std::sqrt(var + eps_);
            inv_std_[c] = inv;
            const double g = gamma_.value[c], be = beta_.value[c];
            for (std::size_t b = 0; b < B; ++b) {
                const double* xs = x.data() + (b * C + c) * L;
                double* xh = xhat_.data() + (b * C + c) * L;
                double* ys = out.data() + (b * C + c) * L;
                for (std::size_t l = 0; l < L; ++l) {
                    xh[l] = (xs[l] - mean) * inv;
                    ys[l] = g * xh[l] + be;
                }
            }
            running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean;
            running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * var;
        }
        stats_ready_ = true;
    } else {
        if (!stats_ready_)
            throw std::runtime_error("BatchNorm1d: eval before any running-stat update");
        for (std::size_t c = 0; c < C; ++c) {
            const double inv = 1.0 / std::sqrt(running_var_[c] + eps_);
            inv_std_[c] = inv;
            const double mean = running_mean_[c];
            const double g = gamma_.value[c], be = beta_.value[c];
            for (std::size_t b = 0; b < B; ++b) {
                const double* xs = x.data() + (b * C + c) * L;
                double* xh = xhat_.data() + (b * C + c) * L;
                double* ys = out.data() + (b * C + c) * L;
                for (std::size_t l = 0; l < L; ++l) {
                    xh[l] = (xs[l] - mean) * inv;
                    ys[l] = g * xh[l] + be;
                }
            }
        }
    }
    return out;
}

Tensor BatchNorm1d::backward(const Tensor& grad_out) {
    if (grad_out.shape() != in_shape_)
        throw std::invalid_argument("BatchNorm1d: grad shape mismatch");
    const std::size_t B = in_shape_[0], C = in_shape_[1];
    const std::size_t L = in_shape_.size() == 3 ? in_shape_[2] : 1;
    const double m = static_cast<double>(B * L);

    Tensor grad_x(in_shape_);
    for (std::size_t c = 0; c < C; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
            const double* dy = grad_out.data() + (b * C + c) * L;
            const double* xh = xhat_.data() + (b * C + c) * L;
            for (std::size_t l = 0; l < L; ++l) {
                sum_dy += dy[l];
                sum_dy_xhat += dy[l] * xh[l];
            }
        }
        gamma_.grad[c] = sum_dy_xhat;
        beta_.grad[c] = sum_dy;

        const double g = gamma_.value[c];
        const double inv = inv_std_[c];
        for (std::size_t b = 0; b < B; ++b) {
            const double* dy = grad_out.data() + (b * C + c) * L;
            const double* xh = xhat_.data() + (b * C + c) * L;
            double* dx = grad_x.data() + (b * C + c) * L;
            if (cached_train_) {
                for (std::size_t l = 0; l < L; ++l)
                    dx[l] = g * inv / m * (m * dy[l] - sum_dy - xh[l] * sum_dy_xhat);
            } else {
                for (std::size_t l = 0; l < L; ++l) dx[l] = g * inv * dy[l];
            }
        }
    }
    return grad_x;
}

nlohmann::ordered_json BatchNorm1d::descriptor() const {
    nlohmann::ordered_json d;
    d["kind"] = kind();
    d["name"] = gamma_.name.substr(0, gamma_.name.size() - 6);
    d["channels"] = channels_;
    d["momentum"] = momentum_;
    d["eps"] = eps_;
    d["stats_ready"] = stats_ready_;
    return d;
}

// ---------------------------------------------------------------------------
// LeakyReLU

LeakyReLU::LeakyReLU(double leak) : leak_(leak) {
    if (leak < 0.0 || leak >= 1.0)
        throw std::invalid_argument("LeakyReLU: leak must be in [0, 1)");
}

Tensor LeakyReLU::forward(const Tensor& x, bool /*train*/) {
    input_ = x;
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i)
        out[i] = x[i] >= 0.0 ? x[i] : leak_ * x[i];
    return out;
}

Tensor LeakyReLU::backward(const Tensor& grad_out) {
    if (!grad_out.same_shape(input_))
        throw std::invalid_argument("LeakyReLU: grad shape mismatch");
    Tensor grad_x(input_.shape());
    for (std::size_t i = 0; i < input_.numel(); ++i)
        grad_x[i] = grad_out[i] * (input_[i] >= 0.0 ? 1.0 : leak_);
    return grad_x;
}

nlohmann::ordered_json LeakyReLU::descriptor() const {
    nlohmann::ordered_json d;
    d["kind"] = kind();
    d["leak"] = leak_;
    return d;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::string name, std::size_t in_features, std::size_t out_features)
    : in_features_(in_features),
      out_features_(out_features),
      w_(name + ".w", {out_features, in_features}, true),
      b_(name + ".b", {out_features}, false) {}

void Linear::init_params(Rng& rng, double leak) {
    const double gain = std::sqrt(2.0 / (1.0 + leak * leak));
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(in_features_));
    for (double& v : w_.value.storage()) v = rng.uniform(-bound, bound);
    b_.value.fill(0.0);
}

Tensor Linear::forward(const Tensor& x, bool /*train*/) {
    if (x.rank() != 2 || x.dim(1) != in_features_)
        throw std::invalid_argument("Linear " + w_.name + ": input shape mismatch");
    input_ = x;
    const std::size_t B = x.dim(0);
    Tensor out({B, out_features_});
    CMapRM xm(x.data(), static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(in_features_));
    CMapRM wm(w_.value.data(), static_cast<Eigen::Index>(out_features_),
              static_cast<Eigen::Index>(in_features_));
    MapRM ym(out.data(), static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(out_features_));
    ym.noalias() = xm * wm.transpose();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < out_features_; ++o) out(b, o) += b_.value[o];
    return out;
}

Tensor Linear::backward(const Tensor& grad_out) {
    const std::size_t B = input_.dim(0);
    if (grad_out.rank() != 2 || grad_out.dim(0) != B || grad_out.dim(1) != out_features_)
        throw std::invalid_argument("Linear " + w_.name + ": grad shape mismatch");
    CMapRM gm(grad_out.data(), static_cast<Eigen::Index>(B),
              static_cast<Eigen::Index>(out_features_));
    CMapRM xm(input_.data(), static_cast<Eigen::Index>(B),
              static_cast<Eigen::Index>(in_features_));
    MapRM gwm(w_.grad.data(), static_cast<Eigen::Index>(out_features_),
              static_cast<Eigen::Index>(in_features_));
    gwm.noalias() = gm.transpose() * xm;
    for (std::size_t o = 0; o < out_features_; ++o)
        b_.grad[o] = gm.col(static_cast<Eigen::Index>(o)).sum();

    Tensor grad_x(input_.shape());
    CMapRM wm(w_.value.data(), static_cast<Eigen::Index>(out_features_),
              static_cast<Eigen::Index>(in_features_));
    MapRM gxm(grad_x.data(), static_cast<Eigen::Index>(B),
              static_cast<Eigen::Index>(in_features_));
    gxm.noalias() = gm * wm;
    return grad_x;
}

nlohmann::ordered_json Linear::descriptor() const {
    nlohmann::ordered_json d;
    d["kind"] = kind();
    d["name"] = w_.name.substr(0, w_.name.size() - 2);
    d["in_features"] = in_features_;
    d["out_features"] = out_features_;
    return d;
}

// ---------------------------------------------------------------------------
// Flatten

Tensor Flatten::forward(const Tensor& x, bool /*train*/) {
    if (x.rank() != 3) throw std::invalid_argument("Flatten: expects rank-3 input");
    in_shape_ = x.shape();
    return x.reshaped({x.dim(0), x.dim(1) * x.dim(2)});
}

Tensor Flatten::backward(const Tensor& grad_out) {
    return grad_out.reshaped(in_shape_);
}

nlohmann::ordered_json Flatten::descriptor() const {
    nlohmann::ordered_json d;
    d["kind"] = kind();
    return d;
}

// ---------------------------------------------------------------------------
// Model

Tensor Model::forward(const Tensor& x, bool train) {
    Tensor cur = x;
    const std::size_t probe_boundary =
        probe_block_ >= 0 ? block_ends_[static_cast<std::size_t>(probe_block_)] : SIZE_MAX;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        cur = layers_[i]->forward(cur, train);
        if (i + 1 == probe_boundary) probe_activation_ = cur;
    }
    return cur;
}

Tensor Model::backward(const Tensor& grad_out) {
    Tensor grad = grad_out;
    const std::size_t probe_boundary =
        probe_block_ >= 0 ? block_ends_[static_cast<std::size_t>(probe_block_)] : SIZE_MAX;
    if (probe_boundary == layers_.size()) probe_gradient_ = grad;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        grad = layers_[i]->backward(grad);
        if (i == probe_boundary) probe_gradient_ = grad;
    }
    return grad;
}

void Model::set_probe(int block) {
    if (block >= 0 && static_cast<std::size_t>(block) >= block_ends_.size())
        throw std::invalid_argument("Model::set_probe: block index out of range");
    probe_block_ = block;
}

std::vector<NamedTensor*> Model::parameters() {
    std::vector<NamedTensor*> out;
    for (auto& l : layers_)
        for (auto* p : l->parameters()) out.push_back(p);
    return out;
}

std::size_t Model::count_params() const {
    std::size_t n = 0;
    for (const auto& l : layers_)
        for (auto* p : const_cast<Layer&>(*l).parameters()) n += p->value.numel();
    return n;
}

std::vector<double> Model::state_snapshot() const {
    std::vector<double> out;
    for (const auto& l : layers_)
        for (auto* t : const_cast<Layer&>(*l).state_tensors())
            out.insert(out.end(), t->storage().begin(), t->storage().end());
    return out;
}

void Model::restore_state(const std::vector<double>& snapshot) {
    std::size_t pos = 0;
    for (auto& l : layers_)
        for (auto* t : l->state_tensors()) {
            if (pos + t->numel() > snapshot.size())
                throw std::invalid_argument("Model::restore_state: snapshot too short");
            std::copy(snapshot.begin() + static_cast<std::ptrdiff_t>(pos),
                      snapshot.begin() + static_cast<std::ptrdiff_t>(pos + t->numel()),
                      t->storage().begin());
            pos += t->numel();
        }
    if (pos != snapshot.size())
        throw std::invalid_argument("Model::restore_state: snapshot size mismatch");
}

// ---------------------------------------------------------------------------
// AdamW

void AdamW::step(const std::vector<NamedTensor*>& params) {
    if (slots_.empty()) {
        slots_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            slots_[i].m.assign(params[i]->value.numel(), 0.0);
            slots_[i].v.assign(params[i]->value.numel(), 0.0);
        }
    }
    if (slots_.size() != params.size())
        throw std::invalid_argument("AdamW: parameter count changed between steps");

    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));

    for (std::size_t i = 0; i < params.size(); ++i) {
        NamedTensor& p = *params[i];
        auto& m = slots_[i].m;
        auto& v = slots_[i].v;
        const double decay = p.decay ? wd_ : 0.0;
        for (std::size_t j = 0; j < p.value.numel(); ++j) {
            const double g = p.grad[j];
            if (!std::isfinite(g))
                throw std::runtime_error("AdamW: non-finite gradient in parameter " + p.name);
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            const double old = p.value[j];
            p.value[j] = old - lr_ * (mhat / (std::sqrt(vhat) + eps_)) - lr_ * decay * old;
        }
    }
}

// ---------------------------------------------------------------------------
// Gradient check

namespace {

double gradient_check_impl(const std::function<Tensor(const Tensor&)>& fwd,
                           const std::function<Tensor(const Tensor&)>& bwd,
                           const std::vector<NamedTensor*>& params, Tensor input, double eps,
                           std::uint64_t seed) {
    Tensor out0 = fwd(input);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    Tensor proj(out0.shape());
    for (double& v : proj.storage()) v = rng.uniform(-1.0, 1.0);

    auto scalar = [&](const Tensor& x) {
        const Tensor y = fwd(x);
        double s = 0.0;
        for (std::size_t i = 0; i < y.numel(); ++i) s += proj[i] * y[i];
        return s;
    };

    // Analytic gradients for <proj, f(x)>.
    fwd(input);
    const Tensor grad_in = bwd(proj);

    std::vector<std::vector<double>> analytic;
    for (auto* p : params) analytic.push_back(p->grad.storage());
    const std::vector<double> analytic_in = grad_in.storage();

    double max_rel = 0.0;
    auto update = [&](double a, double n) {
        const double denom = std::max({std::abs(a), std::abs(n), 1e-6});
        max_rel = std::max(max_rel, std::abs(a - n) / denom);
    };

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& value = params[pi]->value;
        for (std::size_t j = 0; j < value.numel(); ++j) {
            const double old = value[j];
            value[j] = old + eps;
            const double sp = scalar(input);
            value[j] = old - eps;
            const double sm = scalar(input);
            value[j] = old;
            update(analytic[pi][j], (sp - sm) / (2.0 * eps));
        }
    }
    for (std::size_t j = 0; j < input.numel(); ++j) {
        const double old = input[j];
        input[j] = old + eps;
        const double sp = scalar(input);
        input[j] = old - eps;
        const double sm = scalar(input);
        input[j] = old;
        update(analytic_in[j], (sp - sm) / (2.0 * eps));
    }
    return max_rel;
}

}  // namespace

double gradient_check(Model& model, const Tensor& input, double eps, std::uint64_t seed,
                      bool train) {
    return gradient_check_impl(
        [&](const Tensor& x) { return model.forward(x, train); },
        [&](const Tensor& g) { return model.backward(g); }, model.parameters(), input, eps, seed);
}

double gradient_check(Layer& layer, const Tensor& input, double eps, std::uint64_t seed,
                      bool train) {
    return gradient_check_impl(
        [&](const Tensor& x) { return layer.forward(x, train); },
        [&](const Tensor& g) { return layer.backward(g); }, layer.parameters(), input, eps, seed);
}

// ---------------------------------------------------------------------------
// Checkpoints

std::unique_ptr<Layer> layer_from_descriptor(const nlohmann::json& d) {
    const std::string kind = d.at("kind").get<std::string>();
    if (kind == "conv1d") {
        return std::make_unique<Conv1d>(d.at("name").get<std::string>(), d.at("in_ch"),
                                        d.at("out_ch"), d.at("kernel"), d.at("stride"),
                                        d.at("pad"));
    }
    if (kind == "batchnorm1d") {
        auto bn = std::make_unique<BatchNorm1d>(d.at("name").get<std::string>(), d.at("channels"),
                                                d.at("momentum"), d.at("eps"));
        bn->set_stats_ready(d.value("stats_ready", false));
        return bn;
    }
    if (kind == "leaky_relu") return std::make_unique<LeakyReLU>(d.at("leak").get<double>());
    if (kind == "linear") {
        return std::make_unique<Linear>(d.at("name").get<std::string>(), d.at("in_features"),
                                        d.at("out_features"));
    }
    if (kind == "flatten") return std::make_unique<Flatten>();
    throw std::runtime_error("checkpoint: unknown layer kind " + kind);
}

void save_model(const Model& model, const std::string& path,
                const nlohmann::ordered_json& extras) {
    Model& m = const_cast<Model&>(model);
    nlohmann::ordered_json manifest;
    manifest["format"] = "soilspec-ckpt-1";
    manifest["seed"] = model.seed;
    manifest["step"] = model.step;
    manifest["layers"] = nlohmann::ordered_json::array();
    manifest["block_ends"] = nlohmann::ordered_json::array();
    manifest["tensors"] = nlohmann::ordered_json::array();
    manifest["stages"] = nlohmann::ordered_json::array();

    for (std::size_t i = 0; i < m.n_layers(); ++i)
        manifest["layers"].push_back(m.layer(i).descriptor());
    manifest["block_ends"] = model.block_ends();
    for (std::size_t i = 0; i < m.n_layers(); ++i)
        for (auto* t : m.layer(i).state_tensors()) {
            nlohmann::ordered_json td;
            td["layer"] = i;
            td["shape"] = t->shape();
            manifest["tensors"].push_back(td);
        }
    for (const auto& s : model.stages) {
        nlohmann::ordered_json sd;
        sd["stage"] = s.stage;
        sd["operation"] = s.operation;
        sd["channels"] = s.channels;
        sd["length"] = s.length;
        sd["params"] = s.params;
        manifest["stages"].push_back(sd);
    }
    manifest["extras"] = extras;

    const std::string mstr = manifest.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic) - 1);
    write_le<std::uint64_t>(out, mstr.size());
    out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
    for (std::size_t i = 0; i < m.n_layers(); ++i)
        for (auto* t : m.layer(i).state_tensors())
            for (double v : t->storage()) write_le<double>(out, v);
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Model load_model(const std::string& path, nlohmann::ordered_json* extras) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[sizeof(kMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    std::uint64_t mlen = 0;
    read_le(in, mlen);
    std::string mstr(mlen, '\0');
    in.read(mstr.data(), static_cast<std::streamsize>(mlen));
    if (!in) throw std::runtime_error("checkpoint: truncated manifest in " + path);
    const nlohmann::ordered_json manifest = nlohmann::ordered_json::parse(mstr);

    Model model;
    model.seed = manifest.value("seed", 0ULL);
    model.step = manifest.value("step", 0ULL);
    for (const auto& d : manifest.at("layers")) model.add(layer_from_descriptor(d));
    model.set_block_ends(manifest.at("block_ends").get<std::vector<std::size_t>>());
    if (manifest.contains("stages"))
        for (const auto& sd : manifest["stages"]) {
            StageInfo s;
            s.stage = sd.value("stage", "");
            s.operation = sd.value("operation", "");
            s.channels = sd.value("channels", 0ULL);
            s.length = sd.value("length", 0ULL);
            s.params = sd.value("params", 0ULL);
            model.stages.push_back(std::move(s));
        }

    std::size_t ti = 0;
    const auto& tensor_list = manifest.at("tensors");
    for (std::size_t i = 0; i < model.n_layers(); ++i)
        for (auto* t : model.layer(i).state_tensors()) {
            if (ti >= tensor_list.size())
                throw std::runtime_error("checkpoint: tensor list too short");
            const auto shape = tensor_list[ti].at("shape").get<std::vector<std::size_t>>();
            if (shape != t->shape())
                throw std::runtime_error("checkpoint: tensor shape mismatch");
            for (double& v : t->storage()) read_le(in, v);
            ++ti;
        }
    if (extras) *extras = manifest.value("extras", nlohmann::ordered_json::object());
    return model;
}

}  // namespace soilspec::nn
