#pragma once

// Low-level array kernels behind the tensor ops. The parallel versions in
// rfnet::kernels use OpenMP with each iteration owning a disjoint output
// slice (gather form), so results are bit-identical for any thread count.
// rfnet::serial holds naive reference implementations of the heavy kernels,
// used by the tests and the kernel benchmark.

namespace rfnet {

struct Conv2dGeom {
    int in_c = 0, in_h = 0, in_w = 0;
    int out_c = 0, kh = 0, kw = 0;
    int stride = 1, padding = 0, dilation = 1;
    int out_h = 0, out_w = 0;
};

// Output extent for one spatial axis; <= 0 means the geometry is invalid.
int conv2d_out_extent(int in, int k, int stride, int padding, int dilation);

namespace kernels {

template <class T>
void conv2d_forward(const T* in, const T* w, const T* b, T* out, const Conv2dGeom& g);

// All backward kernels accumulate (+=) into their destination buffers.
template <class T>
void conv2d_backward_input(const T* gout, const T* w, T* gin, const Conv2dGeom& g);
template <class T>
void conv2d_backward_weight(const T* gout, const T* in, T* gw, const Conv2dGeom& g);
template <class T>
void conv2d_backward_bias(const T* gout, T* gb, const Conv2dGeom& g);

template <class T>
void matmul_forward(const T* a, const T* b, T* c, int m, int k, int n);
// ga += gc * b^T
template <class T>
void matmul_backward_a(const T* gc, const T* b, T* ga, int m, int k, int n);
// gb += a^T * gc
template <class T>
void matmul_backward_b(const T* gc, const T* a, T* gb, int m, int k, int n);

}  // namespace kernels

namespace serial {

template <class T>
void conv2d_forward(const T* in, const T* w, const T* b, T* out, const Conv2dGeom& g);

template <class T>
void matmul_forward(const T* a, const T* b, T* c, int m, int k, int n);

}  // namespace serial

}  // namespace rfnet
