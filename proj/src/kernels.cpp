#include "rfnet/kernels.hpp"

#include <cstdint>

namespace rfnet {

int conv2d_out_extent(int in, int k, int stride, int padding, int dilation) {
    return (in + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
}

namespace kernels {

// Loop order keeps the innermost walk contiguous in both input and output
// rows, which the compiler vectorizes. Parallel over output channels.
template <class T>
void conv2d_forward(const T* in, const T* w, const T* b, T* out, const Conv2dGeom& g) {
    const std::int64_t work = static_cast<std::int64_t>(g.out_c) * g.out_h * g.out_w;
#pragma omp parallel for schedule(static) if (work > 2048)
    for (int k = 0; k < g.out_c; ++k) {
        T* out_k = out + static_cast<std::int64_t>(k) * g.out_h * g.out_w;
        for (int i = 0; i < g.out_h * g.out_w; ++i) out_k[i] = b[k];
        for (int c = 0; c < g.in_c; ++c) {
            const T* in_c = in + static_cast<std::int64_t>(c) * g.in_h * g.in_w;
            const T* w_kc = w + ((static_cast<std::int64_t>(k) * g.in_c + c) * g.kh) * g.kw;
            for (int ky = 0; ky < g.kh; ++ky) {
                for (int kx = 0; kx < g.kw; ++kx) {
                    const T wv = w_kc[ky * g.kw + kx];
                    for (int oy = 0; oy < g.out_h; ++oy) {
                        const int iy = oy * g.stride - g.padding + ky * g.dilation;
                        if (iy < 0 || iy >= g.in_h) continue;
                        const T* in_row = in_c + static_cast<std::int64_t>(iy) * g.in_w;
                        T* out_row = out_k + static_cast<std::int64_t>(oy) * g.out_w;
                        for (int ox = 0; ox < g.out_w; ++ox) {
                            const int ix = ox * g.stride - g.padding + kx * g.dilation;
                            if (ix < 0 || ix >= g.in_w) continue;
                            out_row[ox] += wv * in_row[ix];
                        }
                    }
                }
            }
        }
    }
}

// Gather form: each thread owns one input channel of gin.
template <class T>
void conv2d_backward_input(const T* gout, const T* w, T* gin, const Conv2dGeom& g) {
    const std::int64_t work = static_cast<std::int64_t>(g.in_c) * g.in_h * g.in_w;
#pragma omp parallel for schedule(static) if (work > 2048)
    for (int c = 0; c < g.in_c; ++c) {
        T* gin_c = gin + static_cast<std::int64_t>(c) * g.in_h * g.in_w;
        for (int k = 0; k < g.out_c; ++k) {
            const T* gout_k = gout + static_cast<std::int64_t>(k) * g.out_h * g.out_w;
            const T* w_kc = w + ((static_cast<std::int64_t>(k) * g.in_c + c) * g.kh) * g.kw;
            for (int ky = 0; ky < g.kh; ++ky) {
                for (int kx = 0; kx < g.kw; ++kx) {
                    const T wv = w_kc[ky * g.kw + kx];
                    for (int oy = 0; oy < g.out_h; ++oy) {
                        const int iy = oy * g.stride - g.padding + ky * g.dilation;
                        if (iy < 0 || iy >= g.in_h) continue;
                        const T* gout_row = gout_k + static_cast<std::int64_t>(oy) * g.out_w;
                        T* gin_row = gin_c + static_cast<std::int64_t>(iy) * g.in_w;
                        for (int ox = 0; ox < g.out_w; ++ox) {
                            const int ix = ox * g.stride - g.padding + kx * g.dilation;
                            if (ix < 0 || ix >= g.in_w) continue;
                            gin_row[ix] += wv * gout_row[ox];
                        }
                    }
                }
            }
        }
    }
}

// Each thread owns the weight rows of one output channel.
template <class T>
void conv2d_backward_weight(const T* gout, const T* in, T* gw, const Conv2dGeom& g) {
    const std::int64_t work = static_cast<std::int64_t>(g.out_c) * g.in_c * g.kh * g.kw;
#pragma omp parallel for schedule(static) if (work > 512)
    for (int k = 0; k < g.out_c; ++k) {
        const T* gout_k = gout + static_cast<std::int64_t>(k) * g.out_h * g.out_w;
        for (int c = 0; c < g.in_c; ++c) {
            const T* in_c = in + static_cast<std::int64_t>(c) * g.in_h * g.in_w;
            T* gw_kc = gw + ((static_cast<std::int64_t>(k) * g.in_c + c) * g.kh) * g.kw;
            for (int ky = 0; ky < g.kh; ++ky) {
                for (int kx = 0; kx < g.kw; ++kx) {
                    T acc = T(0);
                    for (int oy = 0; oy < g.out_h; ++oy) {
                        const int iy = oy * g.stride - g.padding + ky * g.dilation;
                        if (iy < 0 || iy >= g.in_h) continue;
                        const T* in_row = in_c + static_cast<std::int64_t>(iy) * g.in_w;
                        const T* gout_row = gout_k + static_cast<std::int64_t>(oy) * g.out_w;
                        for (int ox = 0; ox < g.out_w; ++ox) {
                            const int ix = ox * g.stride - g.padding + kx * g.dilation;
                            if (ix < 0 || ix >= g.in_w) continue;
                            acc += in_row[ix] * gout_row[ox];
                        }
                    }
                    gw_kc[ky * g.kw + kx] += acc;
                }
            }
        }
    }
}

template <class T>
void conv2d_backward_bias(const T* gout, T* gb, const Conv2dGeom& g) {
    for (int k = 0; k < g.out_c; ++k) {
        const T* gout_k = gout + static_cast<std::int64_t>(k) * g.out_h * g.out_w;
        T acc = T(0);
        for (int i = 0; i < g.out_h * g.out_w; ++i) acc += gout_k[i];
        gb[k] += acc;
    }
}

template <class T>
void matmul_forward(const T* a, const T* b, T* c, int m, int k, int n) {
    const std::int64_t work = static_cast<std::int64_t>(m) * k * n;
#pragma omp parallel for schedule(static) if (work > 8192)
    for (int i = 0; i < m; ++i) {
        T* c_row = c + static_cast<std::int64_t>(i) * n;
        for (int j = 0; j < n; ++j) c_row[j] = T(0);
        const T* a_row = a + static_cast<std::int64_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T av = a_row[p];
            const T* b_row = b + static_cast<std::int64_t>(p) * n;
            for (int j = 0; j < n; ++j) c_row[j] += av * b_row[j];
        }
    }
}

template <class T>
void matmul_backward_a(const T* gc, const T* b, T* ga, int m, int k, int n) {
    const std::int64_t work = static_cast<std::int64_t>(m) * k * n;
#pragma omp parallel for schedule(static) if (work > 8192)
    for (int i = 0; i < m; ++i) {
        T* ga_row = ga + static_cast<std::int64_t>(i) * k;
        const T* gc_row = gc + static_cast<std::int64_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T* b_row = b + static_cast<std::int64_t>(p) * n;
            T acc = T(0);
            for (int j = 0; j < n; ++j) acc += gc_row[j] * b_row[j];
            ga_row[p] += acc;
        }
    }
}

template <class T>
void matmul_backward_b(const T* gc, const T* a, T* gb, int m, int k, int n) {
    const std::int64_t work = static_cast<std::int64_t>(m) * k * n;
#pragma omp parallel for schedule(static) if (work > 8192)
    for (int p = 0; p < k; ++p) {
        T* gb_row = gb + static_cast<std::int64_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const T av = a[static_cast<std::int64_t>(i) * k + p];
            const T* gc_row = gc + static_cast<std::int64_t>(i) * n;
            for (int j = 0; j < n; ++j) gb_row[j] += av * gc_row[j];
        }
    }
}

template void conv2d_forward<float>(const float*, const float*, const float*, float*, const Conv2dGeom&);
template void conv2d_forward<double>(const double*, const double*, const double*, double*, const Conv2dGeom&);
template void conv2d_backward_input<float>(const float*, const float*, float*, const Conv2dGeom&);
template void conv2d_backward_input<double>(const double*, const double*, double*, const Conv2dGeom&);
template void conv2d_backward_weight<float>(const float*, const float*, float*, const Conv2dGeom&);
template void conv2d_backward_weight<double>(const double*, const double*, double*, const Conv2dGeom&);
template void conv2d_backward_bias<float>(const float*, float*, const Conv2dGeom&);
template void conv2d_backward_bias<double>(const double*, double*, const Conv2dGeom&);
template void matmul_forward<float>(const float*, const float*, float*, int, int, int);
template void matmul_forward<double>(const double*, const double*, double*, int, int, int);
template void matmul_backward_a<float>(const float*, const float*, float*, int, int, int);
template void matmul_backward_a<double>(const double*, const double*, double*, int, int, int);
template void matmul_backward_b<float>(const float*, const float*, float*, int, int, int);
template void matmul_backward_b<double>(const double*, const double*, double*, int, int, int);

}  // namespace kernels

namespace serial {

// Textbook seven-loop convolution, kept as the oracle for the fast kernel.
template <class T>
void conv2d_forward(const T* in, const T* w, const T* b, T* out, const Conv2dGeom& g) {
    for (int k = 0; k < g.out_c; ++k) {
        for (int oy = 0; oy < g.out_h; ++oy) {
            for (int ox = 0; ox < g.out_w; ++ox) {
                T acc = b[k];
                for (int c = 0; c < g.in_c; ++c) {
                    for (int ky = 0; ky < g.kh; ++ky) {
                        for (int kx = 0; kx < g.kw; ++kx) {
                            const int iy = oy * g.stride - g.padding + ky * g.dilation;
                            const int ix = ox * g.stride - g.padding + kx * g.dilation;
                            if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                            acc += w[((static_cast<std::int64_t>(k) * g.in_c + c) * g.kh + ky) * g.kw + kx] *
                                   in[(static_cast<std::int64_t>(c) * g.in_h + iy) * g.in_w + ix];
                        }
                    }
                }
                out[(static_cast<std::int64_t>(k) * g.out_h + oy) * g.out_w + ox] = acc;
            }
        }
    }
}

template <class T>
void matmul_forward(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            T acc = T(0);
            for (int p = 0; p < k; ++p) {
                acc += a[static_cast<std::int64_t>(i) * k + p] * b[static_cast<std::int64_t>(p) * n + j];
            }
            c[static_cast<std::int64_t>(i) * n + j] = acc;
        }
    }
}

template void conv2d_forward<float>(const float*, const float*, const float*, float*, const Conv2dGeom&);
template void conv2d_forward<double>(const double*, const double*, const double*, double*, const Conv2dGeom&);
template void matmul_forward<float>(const float*, const float*, float*, int, int, int);
template void matmul_forward<double>(const double*, const double*, double*, int, int, int);

}  // namespace serial

}  // namespace rfnet
