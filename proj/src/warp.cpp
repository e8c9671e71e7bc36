#include "morphwin/warp.hpp"

#include <algorithm>
#include <cmath>

namespace morphwin {

namespace {

template <class T>
struct AxisSample {
    long i0 = 0, i1 = 0;
    bool ok0 = true, ok1 = true;
    T t = 0;   // weight of i1
    T dp = 1;  // d(position used)/d(phi)
};

template <class T>
AxisSample<T> axis_sample(T p, std::size_t n, Border border) {
    AxisSample<T> s;
    const long last = static_cast<long>(n) - 1;
    if (border == Border::Clamp) {
        // Right-continuous: the clamp has unit slope on [0, n-1).
        s.dp = (p >= T(0) && p < static_cast<T>(last)) ? T(1) : T(0);
        const T q = std::clamp(p, T(0), static_cast<T>(last));
        s.i0 = static_cast<long>(std::floor(q));
        if (s.i0 >= last) {
            s.i0 = s.i1 = last;
            s.t = 0;
        } else {
            s.i1 = s.i0 + 1;
            s.t = q - static_cast<T>(s.i0);
        }
    } else {
        s.i0 = static_cast<long>(std::floor(p));
        s.i1 = s.i0 + 1;
        s.t = p - static_cast<T>(s.i0);
        s.ok0 = s.i0 >= 0 && s.i0 <= last;
        s.ok1 = s.i1 >= 0 && s.i1 <= last;
    }
    return s;
}

void check_field(const Shape& vol, const Shape& phi, const char* what) {
    if (vol.size() < 3 || phi.size() != 4 || phi[3] != 3 || phi[0] != vol[0] || phi[1] != vol[1] || phi[2] != vol[2]) {
        throw ShapeError(std::string(what) + ": field " + shape_str(phi) + " does not match volume " + shape_str(vol));
    }
}

// Calls f(corner_voxel_index, weight, dweight/dz, dweight/dy, dweight/dx) for
// every in-range corner of the sample at voxel (z, y, x).
template <class T, class F>
void for_each_corner(const Dims3& dims, std::size_t z, std::size_t y, std::size_t x, const T* ph, Border border, F f) {
    const AxisSample<T> a[3] = {axis_sample(static_cast<T>(z) + ph[0], dims[0], border),
                                axis_sample(static_cast<T>(y) + ph[1], dims[1], border),
                                axis_sample(static_cast<T>(x) + ph[2], dims[2], border)};
    for (int cz = 0; cz < 2; ++cz) {
        if (!(cz ? a[0].ok1 : a[0].ok0)) continue;
        const T wz = cz ? a[0].t : T(1) - a[0].t;
        const T dz = cz ? T(1) : T(-1);
        const long iz = cz ? a[0].i1 : a[0].i0;
        for (int cy = 0; cy < 2; ++cy) {
            if (!(cy ? a[1].ok1 : a[1].ok0)) continue;
            const T wy = cy ? a[1].t : T(1) - a[1].t;
            const T dy = cy ? T(1) : T(-1);
            const long iy = cy ? a[1].i1 : a[1].i0;
            for (int cx = 0; cx < 2; ++cx) {
                if (!(cx ? a[2].ok1 : a[2].ok0)) continue;
                const T wx = cx ? a[2].t : T(1) - a[2].t;
                const T dx = cx ? T(1) : T(-1);
                const long ix = cx ? a[2].i1 : a[2].i0;
                const auto corner = (static_cast<std::size_t>(iz) * dims[1] + static_cast<std::size_t>(iy)) * dims[2] +
                                    static_cast<std::size_t>(ix);
                f(corner, wz * wy * wx, dz * wy * wx * a[0].dp, wz * dy * wx * a[1].dp, wz * wy * dx * a[2].dp);
            }
        }
    }
}

}  // namespace

template <class T>
Tensor<T> sampling_grid(const Dims3& dims) {
    std::vector<T> g(dims[0] * dims[1] * dims[2] * 3);
    std::size_t i = 0;
    for (std::size_t z = 0; z < dims[0]; ++z) {
        for (std::size_t y = 0; y < dims[1]; ++y) {
            for (std::size_t x = 0; x < dims[2]; ++x) {
                g[i++] = static_cast<T>(z);
                g[i++] = static_cast<T>(y);
                g[i++] = static_cast<T>(x);
            }
        }
    }
    return Tensor<T>({dims[0], dims[1], dims[2], 3}, std::move(g));
}

template <class T>
Tensor<T> warp_trilinear(const Tensor<T>& img, const Tensor<T>& phi, Border border) {
    if (img.rank() != 4) throw ShapeError("warp_trilinear expects an image [D,H,W,C], got " + shape_str(img.shape()));
    check_field(img.shape(), phi.shape(), "warp_trilinear");
    const Dims3 dims{img.dim(0), img.dim(1), img.dim(2)};
    const auto c = img.dim(3);
    const T* pi = img.data().data();
    const T* pp = phi.data().data();
    std::vector<T> out(img.numel(), T(0));
    std::size_t v = 0;
    for (std::size_t z = 0; z < dims[0]; ++z) {
        for (std::size_t y = 0; y < dims[1]; ++y) {
            for (std::size_t x = 0; x < dims[2]; ++x, ++v) {
                T* o = out.data() + v * c;
                for_each_corner<T>(dims, z, y, x, pp + 3 * v, border, [&](std::size_t corner, T w, T, T, T) {
                    const T* src = pi + corner * c;
                    for (std::size_t k = 0; k < c; ++k) o[k] += w * src[k];
                });
            }
        }
    }
    return make_result<T>("warp_trilinear", img.shape(), std::move(out), {&img, &phi},
                          [img, phi, dims, c, border](std::span<const T> g, std::span<T* const> gin) {
                              const T* pi = img.data().data();
                              const T* pp = phi.data().data();
                              T* gi = gin[0];
                              T* gp = gin[1];
                              std::size_t v = 0;
                              for (std::size_t z = 0; z < dims[0]; ++z) {
                                  for (std::size_t y = 0; y < dims[1]; ++y) {
                                      for (std::size_t x = 0; x < dims[2]; ++x, ++v) {
                                          const T* gv = g.data() + v * c;
                                          for_each_corner<T>(dims, z, y, x, pp + 3 * v, border,
                                                             [&](std::size_t corner, T w, T dz, T dy, T dx) {
                                                                 const T* src = pi + corner * c;
                                                                 T dot = 0;
                                                                 for (std::size_t k = 0; k < c; ++k) {
                                                                     if (gi) gi[corner * c + k] += w * gv[k];
                                                                     dot += gv[k] * src[k];
                                                                 }
                                                                 if (gp) {
                                                                     gp[3 * v] += dz * dot;
                                                                     gp[3 * v + 1] += dy * dot;
                                                                     gp[3 * v + 2] += dx * dot;
                                                                 }
                                                             });
                                      }
                                  }
                              }
                          });
}

template <class T>
LabelMap warp_nearest(const LabelMap& labels, const Tensor<T>& phi) {
    const auto& d = labels.dims;
    check_field({d[0], d[1], d[2]}, phi.shape(), "warp_nearest");
    const T* pp = phi.data().data();
    auto nearest = [](T p, std::size_t n) {
        const auto i = static_cast<long>(std::floor(p + T(0.5)));
        return static_cast<std::size_t>(std::clamp(i, 0L, static_cast<long>(n) - 1));
    };
    std::vector<Label> out(labels.size());
    std::size_t v = 0;
    for (std::size_t z = 0; z < d[0]; ++z) {
        for (std::size_t y = 0; y < d[1]; ++y) {
            for (std::size_t x = 0; x < d[2]; ++x, ++v) {
                const T* ph = pp + 3 * v;
                out[v] = labels.at(nearest(static_cast<T>(z) + ph[0], d[0]), nearest(static_cast<T>(y) + ph[1], d[1]),
                                   nearest(static_cast<T>(x) + ph[2], d[2]));
            }
        }
    }
    return LabelMap(d, std::move(out));
}

std::vector<Label> LabelMap::foreground_labels() const {
    std::vector<bool> seen(65536, false);
    for (auto v : values) seen[v] = true;
    std::vector<Label> out;
    for (std::size_t l = 1; l < seen.size(); ++l) {
        if (seen[l]) out.push_back(static_cast<Label>(l));
    }
    return out;
}

#define MORPHWIN_INSTANTIATE_WARP(T)                                                  \
    template Tensor<T> sampling_grid<T>(const Dims3&);                                \
    template Tensor<T> warp_trilinear<T>(const Tensor<T>&, const Tensor<T>&, Border); \
    template LabelMap warp_nearest<T>(const LabelMap&, const Tensor<T>&);

MORPHWIN_INSTANTIATE_WARP(float)
MORPHWIN_INSTANTIATE_WARP(double)

}  // namespace morphwin
