#pragma once

// Minimal NCHW float tensor plus the im2col/col2im kernels the convolution
// layers are built on. Matrix products go through Eigen.

#include <Eigen/Dense>

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "xray/image.hpp"

namespace xray::models {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<float> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, float fill = 0.0f)
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

    size_t size() const { return v.size(); }
    size_t sample_size() const { return static_cast<size_t>(c) * h * w; }
    float* sample(int i) { return v.data() + static_cast<size_t>(i) * sample_size(); }
    const float* sample(int i) const { return v.data() + static_cast<size_t>(i) * sample_size(); }

    float& at(int ni, int ci, int hi, int wi) {
        return v[((static_cast<size_t>(ni) * c + ci) * h + hi) * w + wi];
    }
    float at(int ni, int ci, int hi, int wi) const {
        return v[((static_cast<size_t>(ni) * c + ci) * h + hi) * w + wi];
    }

    void zero() { std::fill(v.begin(), v.end(), 0.0f); }
};

inline Tensor image_batch(const std::vector<Image>& images) {
    if (images.empty()) throw std::invalid_argument("image_batch: empty");
    int h = images[0].height, w = images[0].width;
    Tensor t(static_cast<int>(images.size()), 1, h, w);
    for (size_t i = 0; i < images.size(); ++i) {
        if (images[i].height != h || images[i].width != w)
            throw std::invalid_argument("image_batch: mixed shapes");
        std::copy(images[i].data.begin(), images[i].data.end(), t.sample(static_cast<int>(i)));
    }
    return t;
}

inline Image tensor_to_image(const Tensor& t, int sample_idx) {
    if (t.c != 1) throw std::invalid_argument("tensor_to_image: expected 1 channel");
    Image img(t.h, t.w);
    const float* s = t.sample(sample_idx);
    std::copy(s, s + img.data.size(), img.data.begin());
    return img;
}

inline int conv_out_dim(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

inline int tconv_out_dim(int in, int kernel, int stride, int pad) {
    return (in - 1) * stride - 2 * pad + kernel;
}

// Gathers convolution patches of one sample (c,h,w) into a matrix of shape
// (c*kh*kw) x (oh*ow); out-of-bounds positions read zero.
inline void im2col(const float* x, int c, int h, int w, int kh, int kw, int stride, int pad,
                   float* cols) {
    const int oh = conv_out_dim(h, kh, stride, pad);
    const int ow = conv_out_dim(w, kw, stride, pad);
    size_t idx = 0;
    for (int ci = 0; ci < c; ++ci) {
        const float* plane = x + static_cast<size_t>(ci) * h * w;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= h) {
                        for (int ox = 0; ox < ow; ++ox) cols[idx++] = 0.0f;
                        continue;
                    }
                    const float* row = plane + static_cast<size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride - pad + kj;
                        cols[idx++] = (ix >= 0 && ix < w) ? row[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters the column matrix back, accumulating overlaps.
inline void col2im(const float* cols, int c, int h, int w, int kh, int kw, int stride, int pad,
                   float* x) {
    const int oh = conv_out_dim(h, kh, stride, pad);
    const int ow = conv_out_dim(w, kw, stride, pad);
    std::fill(x, x + static_cast<size_t>(c) * h * w, 0.0f);
    size_t idx = 0;
    for (int ci = 0; ci < c; ++ci) {
        float* plane = x + static_cast<size_t>(ci) * h * w;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= h) {
                        idx += ow;
                        continue;
                    }
                    float* row = plane + static_cast<size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride - pad + kj;
                        if (ix >= 0 && ix < w) row[ix] += cols[idx];
                        ++idx;
                    }
                }
            }
        }
    }
}

}  // namespace xray::models
