#pragma once

// Runtime neural-network layers with hand-written backward passes, plus the
// Adam optimizer. Layers cache what they need during forward; backward
// returns the gradient w.r.t. the layer input and accumulates parameter
// gradients.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "xray/rng.hpp"
#include "xray/tensor.hpp"

namespace xray::models {

struct Param {
    std::string name;
    std::vector<float> value;
    std::vector<float> grad;

    void resize(size_t n) {
        value.assign(n, 0.0f);
        grad.assign(n, 0.0f);
    }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

// Persistent non-trainable state (running stats, power-iteration vectors).
struct NamedBuffer {
    std::string name;
    std::vector<float>* data;
};

inline void init_normal(std::vector<float>& v, Rng& rng, double stddev) {
    for (float& x : v) x = static_cast<float>(rand_normal(rng) * stddev);
}

enum class Act { none, relu, lrelu, sigmoid, tanh };

inline const char* act_name(Act a) {
    switch (a) {
        case Act::none: return "none";
        case Act::relu: return "relu";
        case Act::lrelu: return "lrelu";
        case Act::sigmoid: return "sigmoid";
        case Act::tanh: return "tanh";
    }
    return "?";
}

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, bool train) = 0;
    virtual Tensor backward(const Tensor& grad_out) = 0;
    virtual void collect(const std::string& /*prefix*/, std::vector<Param*>& /*params*/,
                         std::vector<NamedBuffer>& /*buffers*/) {}
};

// ---------------------------------------------------------------------------
// Spectral normalization support (shared by Conv2D and FullyConnected)
// ---------------------------------------------------------------------------

// One power-iteration step per training forward over the weight viewed as a
// (rows x cols) matrix; u and v persist across steps and are checkpointed.
struct SpectralState {
    bool enabled = false;
    std::vector<float> u, v;
    float sigma = 1.0f;

    void init(int rows, int cols, Rng& rng) {
        u.resize(rows);
        v.resize(cols);
        init_normal(u, rng, 1.0);
        init_normal(v, rng, 1.0);
        normalize(u);
        normalize(v);
    }

    static void normalize(std::vector<float>& x) {
        double n = 0.0;
        for (float e : x) n += static_cast<double>(e) * e;
        n = std::sqrt(std::max(n, 1e-24));
        for (float& e : x) e = static_cast<float>(e / n);
    }

    // Returns the effective weight W / sigma.
    void apply(const std::vector<float>& w, int rows, int cols, bool train, std::vector<float>& w_eff) {
        ConstMatMap W(w.data(), rows, cols);
        Eigen::Map<Eigen::VectorXf> U(u.data(), rows), V(v.data(), cols);
        if (train) {
            Eigen::VectorXf vt = W.transpose() * U;
            float vn = std::max(vt.norm(), 1e-12f);
            V = vt / vn;
            Eigen::VectorXf ut = W * V;
            float un = std::max(ut.norm(), 1e-12f);
            U = ut / un;
        }
        sigma = U.dot(W * V);
        if (!(std::fabs(sigma) > 1e-12f)) sigma = 1.0f;  // zero matrix: leave unchanged
        w_eff.resize(w.size());
        ConstMatMap We(w.data(), rows, cols);
        MatMap Wo(w_eff.data(), rows, cols);
        Wo = We / sigma;
    }
};

// Standalone operation: weight divided by its largest singular value,
// estimated by power iteration run to convergence.
inline std::vector<float> spectral_normalize(const std::vector<float>& w, int rows, int cols,
                                             int iterations = 200) {
    double norm = 0.0;
    for (float e : w) norm += static_cast<double>(e) * e;
    if (norm <= 0.0) return w;  // zero matrix stays unchanged

    SpectralState st;
    Rng rng(12345);
    st.init(rows, cols, rng);
    std::vector<float> w_eff;
    for (int i = 0; i < iterations; ++i) st.apply(w, rows, cols, true, w_eff);
    return w_eff;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

class Conv2D : public Layer {
public:
    Conv2D(int in_c, int out_c, int kh, int kw, int stride, int pad, Rng& init_rng,
           bool spectral = false)
        : in_c_(in_c), out_c_(out_c), kh_(kh), kw_(kw), stride_(stride), pad_(pad) {
        weight_.resize(static_cast<size_t>(out_c) * in_c * kh * kw);
        bias_.resize(out_c);
        init_normal(weight_.value, init_rng, 0.02);
        sn_.enabled = spectral;
        if (spectral) sn_.init(out_c, in_c * kh * kw, init_rng);
    }

    Tensor forward(const Tensor& x, bool train) override {
        x_ = x;
        const int oh = conv_out_dim(x.h, kh_, stride_, pad_);
        const int ow = conv_out_dim(x.w, kw_, stride_, pad_);
        if (oh < 1 || ow < 1) throw std::runtime_error("Conv2D: output collapsed");
        Tensor y(x.n, out_c_, oh, ow);

        const float* w = effective_weight(train);
        const int cols_rows = in_c_ * kh_ * kw_;
        const int cols_cols = oh * ow;
        std::vector<float> cols(static_cast<size_t>(cols_rows) * cols_cols);
        ConstMatMap W(w, out_c_, cols_rows);
        for (int i = 0; i < x.n; ++i) {
            im2col(x.sample(i), in_c_, x.h, x.w, kh_, kw_, stride_, pad_, cols.data());
            ConstMatMap C(cols.data(), cols_rows, cols_cols);
            MatMap Y(y.sample(i), out_c_, cols_cols);
            Y.noalias() = W * C;
            for (int oc = 0; oc < out_c_; ++oc) Y.row(oc).array() += bias_.value[oc];
        }
        return y;
    }

    Tensor backward(const Tensor& gy) override {
        const int oh = gy.h, ow = gy.w;
        const int cols_rows = in_c_ * kh_ * kw_;
        const int cols_cols = oh * ow;
        Tensor gx(x_.n, in_c_, x_.h, x_.w);

        const float* w = sn_.enabled ? w_eff_.data() : weight_.value.data();
        ConstMatMap W(w, out_c_, cols_rows);
        MatMap dW(dw_scratch(), out_c_, cols_rows);
        std::vector<float> cols(static_cast<size_t>(cols_rows) * cols_cols);
        std::vector<float> dcols(cols.size());
        for (int i = 0; i < x_.n; ++i) {
            im2col(x_.sample(i), in_c_, x_.h, x_.w, kh_, kw_, stride_, pad_, cols.data());
            ConstMatMap C(cols.data(), cols_rows, cols_cols);
            ConstMatMap GY(gy.sample(i), out_c_, cols_cols);
            dW.noalias() += GY * C.transpose();
            for (int oc = 0; oc < out_c_; ++oc) bias_.grad[oc] += GY.row(oc).sum();
            MatMap DC(dcols.data(), cols_rows, cols_cols);
            DC.noalias() = W.transpose() * GY;
            col2im(dcols.data(), in_c_, x_.h, x_.w, kh_, kw_, stride_, pad_, gx.sample(i));
        }
        flush_dw();
        return gx;
    }

    void collect(const std::string& prefix, std::vector<Param*>& params,
                 std::vector<NamedBuffer>& buffers) override {
        weight_.name = prefix + ".weight";
        bias_.name = prefix + ".bias";
        params.push_back(&weight_);
        params.push_back(&bias_);
        if (sn_.enabled) {
            buffers.push_back({prefix + ".sn_u", &sn_.u});
            buffers.push_back({prefix + ".sn_v", &sn_.v});
        }
    }

private:
    const float* effective_weight(bool train) {
        if (!sn_.enabled) return weight_.value.data();
        sn_.apply(weight_.value, out_c_, in_c_ * kh_ * kw_, train, w_eff_);
        return w_eff_.data();
    }
    float* dw_scratch() {
        dw_.assign(weight_.value.size(), 0.0f);
        return dw_.data();
    }
    void flush_dw() {
        float scale = sn_.enabled ? 1.0f / sn_.sigma : 1.0f;
        for (size_t i = 0; i < dw_.size(); ++i) weight_.grad[i] += dw_[i] * scale;
    }

    int in_c_, out_c_, kh_, kw_, stride_, pad_;
    Param weight_, bias_;
    SpectralState sn_;
    std::vector<float> w_eff_, dw_;
    Tensor x_;
};

class ConvTranspose2D : public Layer {
public:
    ConvTranspose2D(int in_c, int out_c, int kh, int kw, int stride, int pad, Rng& init_rng)
        : in_c_(in_c), out_c_(out_c), kh_(kh), kw_(kw), stride_(stride), pad_(pad) {
        weight_.resize(static_cast<size_t>(in_c) * out_c * kh * kw);  // (in_c) x (out_c*kh*kw)
        bias_.resize(out_c);
        init_normal(weight_.value, init_rng, 0.02);
    }

    Tensor forward(const Tensor& x, bool train) override {
        (void)train;
        x_ = x;
        const int oh = tconv_out_dim(x.h, kh_, stride_, pad_);
        const int ow = tconv_out_dim(x.w, kw_, stride_, pad_);
        if (oh < 1 || ow < 1) throw std::runtime_error("ConvTranspose2D: output collapsed");
        Tensor y(x.n, out_c_, oh, ow);

        const int cols_rows = out_c_ * kh_ * kw_;
        const int cols_cols = x.h * x.w;
        std::vector<float> cols(static_cast<size_t>(cols_rows) * cols_cols);
        ConstMatMap W(weight_.value.data(), in_c_, cols_rows);
        for (int i = 0; i < x.n; ++i) {
            ConstMatMap X(x.sample(i), in_c_, cols_cols);
            MatMap C(cols.data(), cols_rows, cols_cols);
            C.noalias() = W.transpose() * X;
            // col2im with the *output* as the image grid
            col2im(cols.data(), out_c_, oh, ow, kh_, kw_, stride_, pad_, y.sample(i));
            MatMap Y(y.sample(i), out_c_, oh * ow);
            for (int oc = 0; oc < out_c_; ++oc) Y.row(oc).array() += bias_.value[oc];
        }
        return y;
    }

    Tensor backward(const Tensor& gy) override {
        const int cols_rows = out_c_ * kh_ * kw_;
        const int cols_cols = x_.h * x_.w;
        Tensor gx(x_.n, in_c_, x_.h, x_.w);
        ConstMatMap W(weight_.value.data(), in_c_, cols_rows);
        MatMap dW(dw_scratch(), in_c_, cols_rows);
        std::vector<float> dcols(static_cast<size_t>(cols_rows) * cols_cols);
        for (int i = 0; i < x_.n; ++i) {
            im2col(gy.sample(i), out_c_, gy.h, gy.w, kh_, kw_, stride_, pad_, dcols.data());
            ConstMatMap DC(dcols.data(), cols_rows, cols_cols);
            ConstMatMap X(x_.sample(i), in_c_, cols_cols);
            dW.noalias() += X * DC.transpose();
            MatMap GX(gx.sample(i), in_c_, cols_cols);
            GX.noalias() = W * DC;
            ConstMatMap GY(gy.sample(i), out_c_, gy.h * gy.w);
            for (int oc = 0; oc < out_c_; ++oc) bias_.grad[oc] += GY.row(oc).sum();
        }
        for (size_t i = 0; i < dw_.size(); ++i) weight_.grad[i] += dw_[i];
        return gx;
    }

    void collect(const std::string& prefix, std::vector<Param*>& params,
                 std::vector<NamedBuffer>& /*buffers*/) override {
        weight_.name = prefix + ".weight";
        bias_.name = prefix + ".bias";
        params.push_back(&weight_);
        params.push_back(&bias_);
    }

private:
    float* dw_scratch() {
        dw_.assign(weight_.value.size(), 0.0f);
        return dw_.data();
    }

    int in_c_, out_c_, kh_, kw_, stride_, pad_;
    Param weight_, bias_;
    std::vector<float> dw_;
    Tensor x_;
};

// ---------------------------------------------------------------------------
// Fully connected
// ---------------------------------------------------------------------------

class FullyConnected : public Layer {
public:
    FullyConnected(int in_features, int out_features, Rng& init_rng, bool spectral = false)
        : in_(in_features), out_(out_features) {
        weight_.resize(static_cast<size_t>(out_features) * in_features);
        bias_.resize(out_features);
        init_normal(weight_.value, init_rng, 0.02);
        sn_.enabled = spectral;
        if (spectral) sn_.init(out_features, in_features, init_rng);
    }

    Tensor forward(const Tensor& x, bool train) override {
        if (static_cast<int>(x.sample_size()) != in_)
            throw std::runtime_error("FullyConnected: feature size mismatch");
        x_ = x;
        const float* w = weight_.value.data();
        if (sn_.enabled) {
            sn_.apply(weight_.value, out_, in_, train, w_eff_);
            w = w_eff_.data();
        }
        Tensor y(x.n, out_, 1, 1);
        ConstMatMap X(x.v.data(), x.n, in_);
        ConstMatMap W(w, out_, in_);
        MatMap Y(y.v.data(), x.n, out_);
        Y.noalias() = X * W.transpose();
        for (int i = 0; i < x.n; ++i)
            for (int o = 0; o < out_; ++o) Y(i, o) += bias_.value[o];
        return y;
    }

    Tensor backward(const Tensor& gy) override {
        Tensor gx(x_.n, x_.c, x_.h, x_.w);
        const float* w = sn_.enabled ? w_eff_.data() : weight_.value.data();
        ConstMatMap W(w, out_, in_);
        ConstMatMap GY(gy.v.data(), gy.n, out_);
        ConstMatMap X(x_.v.data(), x_.n, in_);
        MatMap GX(gx.v.data(), gx.n, in_);
        GX.noalias() = GY * W;

        dw_.assign(weight_.value.size(), 0.0f);
        MatMap dW(dw_.data(), out_, in_);
        dW.noalias() = GY.transpose() * X;
        float scale = sn_.enabled ? 1.0f / sn_.sigma : 1.0f;
        for (size_t i = 0; i < dw_.size(); ++i) weight_.grad[i] += dw_[i] * scale;
        for (int i = 0; i < gy.n; ++i)
            for (int o = 0; o < out_; ++o) bias_.grad[o] += GY(i, o);
        return gx;
    }

    void collect(const std::string& prefix, std::vector<Param*>& params,
                 std::vector<NamedBuffer>& buffers) override {
        weight_.name = prefix + ".weight";
        bias_.name = prefix + ".bias";
        params.push_back(&weight_);
        params.push_back(&bias_);
        if (sn_.enabled) {
            buffers.push_back({prefix + ".sn_u", &sn_.u});
            buffers.push_back({prefix + ".sn_v", &sn_.v});
        }
    }

private:
    int in_, out_;
    Param weight_, bias_;
    SpectralState sn_;
    std::vector<float> w_eff_, dw_;
    Tensor x_;
};

// ---------------------------------------------------------------------------
// Batch normalization (per channel over N,H,W)
// ---------------------------------------------------------------------------

class BatchNorm2d : public Layer {
public:
    explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5)
        : c_(channels), momentum_(momentum), eps_(eps) {
        gamma_.resize(channels);
        beta_.resize(channels);
        std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0f);
        running_mean_.assign(channels, 0.0f);
        running_var_.assign(channels, 1.0f);
    }

    Tensor forward(const Tensor& x, bool train) override {
        const int m = x.n * x.h * x.w;
        Tensor y(x.n, x.c, x.h, x.w);
        xhat_ = Tensor(x.n, x.c, x.h, x.w);
        inv_std_.assign(c_, 0.0f);
        mean_cache_.assign(c_, 0.0f);

        for (int ch = 0; ch < c_; ++ch) {
            double mean, var;
            if (train) {
                double sum = 0.0, sq = 0.0;
                for (int i = 0; i < x.n; ++i) {
                    const float* p = x.sample(i) + static_cast<size_t>(ch) * x.h * x.w;
                    for (int k = 0; k < x.h * x.w; ++k) {
                        sum += p[k];
                        sq += static_cast<double>(p[k]) * p[k];
                    }
                }
                mean = sum / m;
                var = std::max(sq / m - mean * mean, 0.0);
                running_mean_[ch] = static_cast<float>((1.0 - momentum_) * running_mean_[ch] + momentum_ * mean);
                running_var_[ch] = static_cast<float>((1.0 - momentum_) * running_var_[ch] + momentum_ * var);
            } else {
                mean = running_mean_[ch];
                var = running_var_[ch];
            }
            float inv = static_cast<float>(1.0 / std::sqrt(var + eps_));
            inv_std_[ch] = inv;
            mean_cache_[ch] = static_cast<float>(mean);
            float g = gamma_.value[ch], b = beta_.value[ch];
            for (int i = 0; i < x.n; ++i) {
                const float* p = x.sample(i) + static_cast<size_t>(ch) * x.h * x.w;
                float* xh = xhat_.sample(i) + static_cast<size_t>(ch) * x.h * x.w;
                float* yo = y.sample(i) + static_cast<size_t>(ch) * x.h * x.w;
                for (int k = 0; k < x.h * x.w; ++k) {
                    xh[k] = (p[k] - static_cast<float>(mean)) * inv;
                    yo[k] = g * xh[k] + b;
                }
            }
        }
        train_mode_ = train;
        return y;
    }

    Tensor backward(const Tensor& gy) override {
        const int m = gy.n * gy.h * gy.w;
        Tensor gx(gy.n, gy.c, gy.h, gy.w);
        for (int ch = 0; ch < c_; ++ch) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int i = 0; i < gy.n; ++i) {
                const float* dy = gy.sample(i) + static_cast<size_t>(ch) * gy.h * gy.w;
                const float* xh = xhat_.sample(i) + static_cast<size_t>(ch) * gy.h * gy.w;
                for (int k = 0; k < gy.h * gy.w; ++k) {
                    sum_dy += dy[k];
                    sum_dy_xhat += static_cast<double>(dy[k]) * xh[k];
                }
            }
            gamma_.grad[ch] += static_cast<float>(sum_dy_xhat);
            beta_.grad[ch] += static_cast<float>(sum_dy);

            float g = gamma_.value[ch];
            float inv = inv_std_[ch];
            float mean_dy = static_cast<float>(sum_dy / m);
            float mean_dy_xhat = static_cast<float>(sum_dy_xhat / m);
            for (int i = 0; i < gy.n; ++i) {
                const float* dy = gy.sample(i) + static_cast<size_t>(ch) * gy.h * gy.w;
                const float* xh = xhat_.sample(i) + static_cast<size_t>(ch) * gy.h * gy.w;
                float* dx = gx.sample(i) + static_cast<size_t>(ch) * gy.h * gy.w;
                if (train_mode_) {
                    for (int k = 0; k < gy.h * gy.w; ++k)
                        dx[k] = g * inv * (dy[k] - mean_dy - xh[k] * mean_dy_xhat);
                } else {
                    for (int k = 0; k < gy.h * gy.w; ++k) dx[k] = g * inv * dy[k];
                }
            }
        }
        return gx;
    }

    void collect(const std::string& prefix, std::vector<Param*>& params,
                 std::vector<NamedBuffer>& buffers) override {
        gamma_.name = prefix + ".gamma";
        beta_.name = prefix + ".beta";
        params.push_back(&gamma_);
        params.push_back(&beta_);
        buffers.push_back({prefix + ".running_mean", &running_mean_});
        buffers.push_back({prefix + ".running_var", &running_var_});
    }

private:
    int c_;
    double momentum_, eps_;
    Param gamma_, beta_;
    std::vector<float> running_mean_, running_var_, inv_std_, mean_cache_;
    Tensor xhat_;
    bool train_mode_ = true;
};

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

class Activation : public Layer {
public:
    explicit Activation(Act act, float slope = 0.2f) : act_(act), slope_(slope) {}

    Tensor forward(const Tensor& x, bool) override {
        Tensor y = x;
        switch (act_) {
            case Act::none: break;
            case Act::relu:
                for (float& v : y.v) v = v > 0.0f ? v : 0.0f;
                break;
            case Act::lrelu:
                for (float& v : y.v) v = v > 0.0f ? v : slope_ * v;
                break;
            case Act::sigmoid:
                for (float& v : y.v) v = 1.0f / (1.0f + std::exp(-v));
                break;
            case Act::tanh:
                for (float& v : y.v) v = std::tanh(v);
                break;
        }
        y_ = y;
        return y;
    }

    Tensor backward(const Tensor& gy) override {
        Tensor gx = gy;
        switch (act_) {
            case Act::none: break;
            case Act::relu:
                for (size_t i = 0; i < gx.v.size(); ++i) gx.v[i] = y_.v[i] > 0.0f ? gy.v[i] : 0.0f;
                break;
            case Act::lrelu:
                for (size_t i = 0; i < gx.v.size(); ++i)
                    gx.v[i] = y_.v[i] > 0.0f ? gy.v[i] : slope_ * gy.v[i];
                break;
            case Act::sigmoid:
                for (size_t i = 0; i < gx.v.size(); ++i) gx.v[i] = gy.v[i] * y_.v[i] * (1.0f - y_.v[i]);
                break;
            case Act::tanh:
                for (size_t i = 0; i < gx.v.size(); ++i) gx.v[i] = gy.v[i] * (1.0f - y_.v[i] * y_.v[i]);
                break;
        }
        return gx;
    }

private:
    Act act_;
    float slope_;
    Tensor y_;
};

// ---------------------------------------------------------------------------
// Shape adapters
// ---------------------------------------------------------------------------

class Reshape : public Layer {
public:
    Reshape(int c, int h, int w) : c_(c), h_(h), w_(w) {}

    Tensor forward(const Tensor& x, bool) override {
        if (x.sample_size() != static_cast<size_t>(c_) * h_ * w_)
            throw std::runtime_error("Reshape: element count mismatch");
        in_c_ = x.c;
        in_h_ = x.h;
        in_w_ = x.w;
        Tensor y = x;
        y.c = c_;
        y.h = h_;
        y.w = w_;
        return y;
    }

    Tensor backward(const Tensor& gy) override {
        Tensor gx = gy;
        gx.c = in_c_;
        gx.h = in_h_;
        gx.w = in_w_;
        return gx;
    }

private:
    int c_, h_, w_;
    int in_c_ = 0, in_h_ = 0, in_w_ = 0;
};

class MaxPool2 : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        const int oh = x.h / 2, ow = x.w / 2;
        Tensor y(x.n, x.c, oh, ow);
        argmax_.assign(y.size(), 0);
        size_t oi = 0;
        for (int i = 0; i < x.n; ++i)
            for (int ch = 0; ch < x.c; ++ch)
                for (int r = 0; r < oh; ++r)
                    for (int c = 0; c < ow; ++c, ++oi) {
                        float best = -1e30f;
                        size_t best_idx = 0;
                        for (int dr = 0; dr < 2; ++dr)
                            for (int dc = 0; dc < 2; ++dc) {
                                size_t idx = ((static_cast<size_t>(i) * x.c + ch) * x.h + 2 * r + dr) * x.w +
                                             2 * c + dc;
                                if (x.v[idx] > best) {
                                    best = x.v[idx];
                                    best_idx = idx;
                                }
                            }
                        y.v[oi] = best;
                        argmax_[oi] = best_idx;
                    }
        in_shape_ = {x.n, x.c, x.h, x.w};
        return y;
    }

    Tensor backward(const Tensor& gy) override {
        Tensor gx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
        for (size_t i = 0; i < gy.v.size(); ++i) gx.v[argmax_[i]] += gy.v[i];
        return gx;
    }

private:
    std::vector<size_t> argmax_;
    std::array<int, 4> in_shape_{};
};

class NearestUpsample2 : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        Tensor y(x.n, x.c, x.h * 2, x.w * 2);
        for (int i = 0; i < x.n; ++i)
            for (int ch = 0; ch < x.c; ++ch)
                for (int r = 0; r < y.h; ++r)
                    for (int c = 0; c < y.w; ++c)
                        y.at(i, ch, r, c) = x.at(i, ch, r / 2, c / 2);
        in_shape_ = {x.n, x.c, x.h, x.w};
        return y;
    }

    Tensor backward(const Tensor& gy) override {
        Tensor gx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
        for (int i = 0; i < gy.n; ++i)
            for (int ch = 0; ch < gy.c; ++ch)
                for (int r = 0; r < gy.h; ++r)
                    for (int c = 0; c < gy.w; ++c)
                        gx.at(i, ch, r / 2, c / 2) += gy.at(i, ch, r, c);
        return gx;
    }

private:
    std::array<int, 4> in_shape_{};
};

// ---------------------------------------------------------------------------
// Minibatch discrimination
// ---------------------------------------------------------------------------

// Appends B cross-batch similarity channels. Features are spatially pooled,
// projected through the tensor T (F x B*C), and compared across the batch
// with o_b(i) = sum_{j != i} exp(-||M_i,b - M_j,b||_1). The appended values
// are broadcast over all spatial positions.
class MinibatchDiscrimination : public Layer {
public:
    MinibatchDiscrimination(int features, int kernels, int dims, Rng& init_rng)
        : f_(features), b_(kernels), c_(dims) {
        t_.resize(static_cast<size_t>(features) * kernels * dims);
        init_normal(t_.value, init_rng, 0.02);
    }

    Tensor forward(const Tensor& x, bool) override {
        if (x.c != f_) throw std::runtime_error("MinibatchDiscrimination: channel mismatch");
        x_shape_ = {x.n, x.c, x.h, x.w};
        const int n = x.n, hw = x.h * x.w;

        pooled_.assign(static_cast<size_t>(n) * f_, 0.0f);
        for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < f_; ++ch) {
                const float* p = x.sample(i) + static_cast<size_t>(ch) * hw;
                double s = 0.0;
                for (int k = 0; k < hw; ++k) s += p[k];
                pooled_[static_cast<size_t>(i) * f_ + ch] = static_cast<float>(s / hw);
            }

        m_.assign(static_cast<size_t>(n) * b_ * c_, 0.0f);
        ConstMatMap X(pooled_.data(), n, f_);
        ConstMatMap T(t_.value.data(), f_, b_ * c_);
        MatMap M(m_.data(), n, b_ * c_);
        M.noalias() = X * T;

        o_.assign(static_cast<size_t>(n) * b_, 0.0f);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                for (int bk = 0; bk < b_; ++bk) {
                    double d = 0.0;
                    for (int ck = 0; ck < c_; ++ck)
                        d += std::fabs(M(i, bk * c_ + ck) - M(j, bk * c_ + ck));
                    o_[static_cast<size_t>(i) * b_ + bk] += static_cast<float>(std::exp(-d));
                }
            }

        Tensor y(n, f_ + b_, x.h, x.w);
        for (int i = 0; i < n; ++i) {
            std::copy(x.sample(i), x.sample(i) + x.sample_size(), y.sample(i));
            for (int bk = 0; bk < b_; ++bk) {
                float val = o_[static_cast<size_t>(i) * b_ + bk];
                float* dst = y.sample(i) + (static_cast<size_t>(f_) + bk) * hw;
                std::fill(dst, dst + hw, val);
            }
        }
        return y;
    }

    Tensor backward(const Tensor& gy) override {
        const int n = x_shape_[0], h = x_shape_[2], w = x_shape_[3], hw = h * w;
        Tensor gx(n, f_, h, w);
        // pass-through gradient for the original channels
        for (int i = 0; i < n; ++i)
            std::copy(gy.sample(i), gy.sample(i) + gx.sample_size(), gx.sample(i));

        // gradient of the appended channels: sum over spatial broadcast
        std::vector<float> go(static_cast<size_t>(n) * b_, 0.0f);
        for (int i = 0; i < n; ++i)
            for (int bk = 0; bk < b_; ++bk) {
                const float* src = gy.sample(i) + (static_cast<size_t>(f_) + bk) * hw;
                double s = 0.0;
                for (int k = 0; k < hw; ++k) s += src[k];
                go[static_cast<size_t>(i) * b_ + bk] = static_cast<float>(s);
            }

        ConstMatMap M(m_.data(), n, b_ * c_);
        std::vector<float> gm(static_cast<size_t>(n) * b_ * c_, 0.0f);
        MatMap GM(gm.data(), n, b_ * c_);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                for (int bk = 0; bk < b_; ++bk) {
                    double d = 0.0;
                    for (int ck = 0; ck < c_; ++ck)
                        d += std::fabs(M(i, bk * c_ + ck) - M(j, bk * c_ + ck));
                    float e = static_cast<float>(std::exp(-d));
                    float coeff = go[static_cast<size_t>(i) * b_ + bk] + go[static_cast<size_t>(j) * b_ + bk];
                    for (int ck = 0; ck < c_; ++ck) {
                        float diff = M(i, bk * c_ + ck) - M(j, bk * c_ + ck);
                        float sign = diff > 0.0f ? 1.0f : (diff < 0.0f ? -1.0f : 0.0f);
                        // coeff covers both o_i and o_j; each GM row is filled
                        // exactly once by the pass where it is the first index.
                        GM(i, bk * c_ + ck) += -coeff * e * sign;
                    }
                }
            }

        ConstMatMap X(pooled_.data(), n, f_);
        ConstMatMap T(t_.value.data(), f_, b_ * c_);
        std::vector<float> gpool(static_cast<size_t>(n) * f_, 0.0f);
        MatMap GP(gpool.data(), n, f_);
        GP.noalias() = GM * T.transpose();
        MatMap GT(gt_scratch(), f_, b_ * c_);
        GT.noalias() = X.transpose() * GM;
        for (size_t i = 0; i < t_.value.size(); ++i) t_.grad[i] += gt_[i];

        float inv_hw = 1.0f / hw;
        for (int i = 0; i < n; ++i)
            for (int ch = 0; ch < f_; ++ch) {
                float add = gpool[static_cast<size_t>(i) * f_ + ch] * inv_hw;
                float* dst = gx.sample(i) + static_cast<size_t>(ch) * hw;
                for (int k = 0; k < hw; ++k) dst[k] += add;
            }
        return gx;
    }

    void collect(const std::string& prefix, std::vector<Param*>& params,
                 std::vector<NamedBuffer>& /*buffers*/) override {
        t_.name = prefix + ".tensor";
        params.push_back(&t_);
    }

private:
    float* gt_scratch() {
        gt_.assign(t_.value.size(), 0.0f);
        return gt_.data();
    }

    int f_, b_, c_;
    Param t_;
    std::vector<float> pooled_, m_, o_, gt_;
    std::array<int, 4> x_shape_{};
};

// ---------------------------------------------------------------------------
// Self-attention over spatial positions (non-local block with a learned,
// zero-initialized residual gate)
// ---------------------------------------------------------------------------

class SelfAttention : public Layer {
public:
    SelfAttention(int channels, Rng& init_rng) : c_(channels), c8_(std::max(1, channels / 8)) {
        wf_.resize(static_cast<size_t>(c8_) * c_);
        wg_.resize(static_cast<size_t>(c8_) * c_);
        wh_.resize(static_cast<size_t>(c_) * c_);
        gamma_.resize(1);
        init_normal(wf_.value, init_rng, 0.02);
        init_normal(wg_.value, init_rng, 0.02);
        init_normal(wh_.value, init_rng, 0.02);
    }

    Tensor forward(const Tensor& x, bool) override {
        x_ = x;
        const int p = x.h * x.w;
        Tensor y = x;
        f_.assign(static_cast<size_t>(x.n) * c8_ * p, 0.0f);
        g_.assign(static_cast<size_t>(x.n) * c8_ * p, 0.0f);
        hh_.assign(static_cast<size_t>(x.n) * c_ * p, 0.0f);
        attn_.assign(static_cast<size_t>(x.n) * p * p, 0.0f);
        o_.assign(static_cast<size_t>(x.n) * c_ * p, 0.0f);

        ConstMatMap WF(wf_.value.data(), c8_, c_), WG(wg_.value.data(), c8_, c_), WH(wh_.value.data(), c_, c_);
        for (int i = 0; i < x.n; ++i) {
            ConstMatMap X(x.sample(i), c_, p);
            MatMap F(f_.data() + static_cast<size_t>(i) * c8_ * p, c8_, p);
            MatMap G(g_.data() + static_cast<size_t>(i) * c8_ * p, c8_, p);
            MatMap H(hh_.data() + static_cast<size_t>(i) * c_ * p, c_, p);
            F.noalias() = WF * X;
            G.noalias() = WG * X;
            H.noalias() = WH * X;

            MatMap A(attn_.data() + static_cast<size_t>(i) * p * p, p, p);
            A.noalias() = F.transpose() * G;
            for (int col = 0; col < p; ++col) {
                float mx = A.col(col).maxCoeff();
                A.col(col) = (A.col(col).array() - mx).exp();
                A.col(col) /= A.col(col).sum();
            }
            MatMap O(o_.data() + static_cast<size_t>(i) * c_ * p, c_, p);
            O.noalias() = H * A;
            MatMap Y(y.sample(i), c_, p);
            Y.array() += gamma_.value[0] * O.array();
        }
        return y;
    }

    Tensor backward(const Tensor& gy) override {
        const int p = x_.h * x_.w;
        Tensor gx = gy;  // identity path
        ConstMatMap WF(wf_.value.data(), c8_, c_), WG(wg_.value.data(), c8_, c_), WH(wh_.value.data(), c_, c_);
        RowMat dWF = RowMat::Zero(c8_, c_), dWG = RowMat::Zero(c8_, c_), dWH = RowMat::Zero(c_, c_);
        double dgamma = 0.0;
        const float gam = gamma_.value[0];

        for (int i = 0; i < x_.n; ++i) {
            ConstMatMap X(x_.sample(i), c_, p);
            ConstMatMap GY(gy.sample(i), c_, p);
            ConstMatMap F(f_.data() + static_cast<size_t>(i) * c8_ * p, c8_, p);
            ConstMatMap G(g_.data() + static_cast<size_t>(i) * c8_ * p, c8_, p);
            ConstMatMap H(hh_.data() + static_cast<size_t>(i) * c_ * p, c_, p);
            ConstMatMap A(attn_.data() + static_cast<size_t>(i) * p * p, p, p);
            ConstMatMap O(o_.data() + static_cast<size_t>(i) * c_ * p, c_, p);

            dgamma += (GY.array() * O.array()).sum();
            RowMat dO = gam * GY;
            RowMat dH = dO * A.transpose();
            RowMat dA = H.transpose() * dO;
            RowMat dS(p, p);
            for (int col = 0; col < p; ++col) {
                auto a = A.col(col);
                auto da = dA.col(col);
                float dot = a.dot(da);
                dS.col(col) = a.array() * (da.array() - dot);
            }
            RowMat dF = G * dS.transpose();
            RowMat dG = F * dS;

            MatMap GX(gx.sample(i), c_, p);
            GX.noalias() += WF.transpose() * dF + WG.transpose() * dG + WH.transpose() * dH;
            dWF.noalias() += dF * X.transpose();
            dWG.noalias() += dG * X.transpose();
            dWH.noalias() += dH * X.transpose();
        }

        accumulate(wf_.grad, dWF);
        accumulate(wg_.grad, dWG);
        accumulate(wh_.grad, dWH);
        gamma_.grad[0] += static_cast<float>(dgamma);
        return gx;
    }

    void collect(const std::string& prefix, std::vector<Param*>& params,
                 std::vector<NamedBuffer>& /*buffers*/) override {
        wf_.name = prefix + ".wf";
        wg_.name = prefix + ".wg";
        wh_.name = prefix + ".wh";
        gamma_.name = prefix + ".gamma";
        params.push_back(&wf_);
        params.push_back(&wg_);
        params.push_back(&wh_);
        params.push_back(&gamma_);
    }

private:
    static void accumulate(std::vector<float>& grad, const RowMat& m) {
        const float* src = m.data();
        for (size_t i = 0; i < grad.size(); ++i) grad[i] += src[i];
    }

    int c_, c8_;
    Param wf_, wg_, wh_, gamma_;
    std::vector<float> f_, g_, hh_, attn_, o_;
    Tensor x_;
};

// ---------------------------------------------------------------------------
// Sequential container
// ---------------------------------------------------------------------------

class Sequential : public Layer {
public:
    Sequential() = default;

    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
    size_t size() const { return layers_.size(); }
    bool empty() const { return layers_.empty(); }

    Tensor forward(const Tensor& x, bool train) override {
        Tensor cur = x;
        for (auto& l : layers_) cur = l->forward(cur, train);
        return cur;
    }

    Tensor backward(const Tensor& gy) override {
        Tensor cur = gy;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
        return cur;
    }

    void collect(const std::string& prefix, std::vector<Param*>& params,
                 std::vector<NamedBuffer>& buffers) override {
        for (size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->collect(prefix + "." + std::to_string(i), params, buffers);
    }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// ---------------------------------------------------------------------------
// Adam optimizer
// ---------------------------------------------------------------------------

class Adam {
public:
    explicit Adam(std::vector<Param*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i]->value.size(), 0.0f);
            v_[i].assign(params_[i]->value.size(), 0.0f);
        }
    }

    void zero_grad() {
        for (Param* p : params_) p->zero_grad();
    }

    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, t_);
        double bc2 = 1.0 - std::pow(beta2_, t_);
        for (size_t i = 0; i < params_.size(); ++i) {
            Param& p = *params_[i];
            for (size_t k = 0; k < p.value.size(); ++k) {
                double g = p.grad[k];
                m_[i][k] = static_cast<float>(beta1_ * m_[i][k] + (1.0 - beta1_) * g);
                v_[i][k] = static_cast<float>(beta2_ * v_[i][k] + (1.0 - beta2_) * g * g);
                double mh = m_[i][k] / bc1;
                double vh = v_[i][k] / bc2;
                p.value[k] -= static_cast<float>(lr_ * mh / (std::sqrt(vh) + eps_));
            }
        }
    }

    double learning_rate() const { return lr_; }

private:
    std::vector<Param*> params_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

}  // namespace xray::models
