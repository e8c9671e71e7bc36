#include "morphwin/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "binary_io.hpp"
#include "morphwin/rng.hpp"
#include "morphwin/warp.hpp"

namespace morphwin {

namespace {

constexpr std::uint64_t kFieldStream = 0xf1e1d5eedULL;
constexpr std::uint64_t kTextureStream = 0x7e87u;
constexpr int kPlacementAttempts = 200;

Dims3 control_grid(const Dims3& dims, std::size_t spacing) {
    Dims3 g{};
    for (int a = 0; a < 3; ++a) g[a] = std::max<std::size_t>(2, (dims[a] - 1 + spacing - 1) / spacing + 1);
    return g;
}

// Trilinear upsampling of a [g0,g1,g2,c] control grid so that its corners
// land on the corners of the output volume.
std::vector<double> upsample(const std::vector<double>& grid, const Dims3& g, std::size_t c, const Dims3& dims) {
    std::vector<double> out(dims[0] * dims[1] * dims[2] * c, 0.0);
    auto locate = [](std::size_t v, std::size_t n, std::size_t gn, std::size_t& i0, double& t) {
        const double p = n > 1 ? static_cast<double>(v) / static_cast<double>(n - 1) * static_cast<double>(gn - 1) : 0.0;
        i0 = std::min(static_cast<std::size_t>(p), gn - 2);
        t = p - static_cast<double>(i0);
    };
    std::size_t o = 0;
    for (std::size_t z = 0; z < dims[0]; ++z) {
        std::size_t iz;
        double tz;
        locate(z, dims[0], g[0], iz, tz);
        for (std::size_t y = 0; y < dims[1]; ++y) {
            std::size_t iy;
            double ty;
            locate(y, dims[1], g[1], iy, ty);
            for (std::size_t x = 0; x < dims[2]; ++x, o += c) {
                std::size_t ix;
                double tx;
                locate(x, dims[2], g[2], ix, tx);
                for (int cz = 0; cz < 2; ++cz) {
                    for (int cy = 0; cy < 2; ++cy) {
                        for (int cx = 0; cx < 2; ++cx) {
                            const double w = (cz ? tz : 1 - tz) * (cy ? ty : 1 - ty) * (cx ? tx : 1 - tx);
                            const auto src = (((iz + cz) * g[1] + iy + cy) * g[2] + ix + cx) * c;
                            for (std::size_t k = 0; k < c; ++k) out[o + k] += w * grid[src + k];
                        }
                    }
                }
            }
        }
    }
    return out;
}

std::size_t voxel_count(const Dims3& d) { return d[0] * d[1] * d[2]; }

struct Ellipsoid {
    std::array<double, 3> center{}, radius{};

    // Normalized radial coordinate; < 1 inside.
    double rho(std::size_t z, std::size_t y, std::size_t x) const {
        const double p[3] = {static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)};
        double s = 0;
        for (int a = 0; a < 3; ++a) {
            const double u = (p[a] - center[a]) / radius[a];
            s += u * u;
        }
        return std::sqrt(s);
    }
    double min_radius() const { return std::min({radius[0], radius[1], radius[2]}); }
};

}  // namespace

void check_registrable(const PhantomSpec& spec, const Dims3& window) {
    const auto smallest = *std::min_element(window.begin(), window.end());
    if (!(spec.amplitude < static_cast<double>(smallest))) {
        throw ValidationError("deformation amplitude " + std::to_string(spec.amplitude) +
                              " must be below the smallest window extent " + std::to_string(smallest));
    }
}

LabeledVolume generate_phantom(const PhantomSpec& spec) {
    const auto& d = spec.dims;
    if (voxel_count(d) == 0) throw ValidationError("phantom dims must be positive");
    if (spec.radius_min <= 0 || spec.radius_max < spec.radius_min) throw ValidationError("invalid organ radius range");
    if (spec.texture_spacing == 0) throw ValidationError("texture spacing must be positive");
    Rng rng(spec.seed);

    Rng texture_rng(spec.seed ^ kTextureStream);
    const auto tg = control_grid(d, spec.texture_spacing);
    std::vector<double> tgrid(voxel_count(tg));
    for (auto& v : tgrid) v = texture_rng.uniform(-1.0, 1.0);
    const auto texture = upsample(tgrid, tg, 1, d);

    std::vector<double> img(voxel_count(d));
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = spec.background + spec.texture * texture[i];

    auto labels = LabelMap::zeros(d);
    std::vector<double> levels(spec.organs);
    for (std::size_t i = 0; i < spec.organs; ++i) {
        const double f = spec.organs > 1 ? static_cast<double>(i) / static_cast<double>(spec.organs - 1) : 0.5;
        levels[i] = spec.intensity_min + f * (spec.intensity_max - spec.intensity_min);
    }
    for (std::size_t i = spec.organs; i > 1; --i) std::swap(levels[i - 1], levels[rng.below(i)]);

    for (std::size_t organ = 0; organ < spec.organs; ++organ) {
        const auto label = static_cast<Label>(organ + 1);
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            Ellipsoid e;
            bool fits = true;
            for (int a = 0; a < 3; ++a) {
                const double extent = static_cast<double>(d[a]);
                e.radius[a] = rng.uniform(spec.radius_min, spec.radius_max);
                const double lo = e.radius[a], hi = extent - 1 - e.radius[a];
                if (hi < lo) {
                    fits = false;
                    break;
                }
                e.center[a] = rng.uniform(lo, hi);
            }
            if (!fits) continue;
            std::size_t inside = 0, free = 0;
            for (std::size_t z = 0; z < d[0]; ++z) {
                for (std::size_t y = 0; y < d[1]; ++y) {
                    for (std::size_t x = 0; x < d[2]; ++x) {
                        if (e.rho(z, y, x) < 1.0) {
                            ++inside;
                            free += labels.at(z, y, x) == 0;
                        }
                    }
                }
            }
            if (inside == 0 || free * 10 < inside * 9) continue;
            placed = true;
            const double width = e.min_radius() / spec.edge_softness;
            std::size_t v = 0;
            for (std::size_t z = 0; z < d[0]; ++z) {
                for (std::size_t y = 0; y < d[1]; ++y) {
                    for (std::size_t x = 0; x < d[2]; ++x, ++v) {
                        const auto owner = labels.values[v];
                        if (owner != 0) continue;
                        const double rho = e.rho(z, y, x);
                        const double m = 1.0 / (1.0 + std::exp(-(1.0 - rho) * width));
                        img[v] = img[v] * (1.0 - m) + (levels[organ] + 0.5 * spec.texture * texture[v]) * m;
                        if (rho < 1.0) labels.values[v] = label;
                    }
                }
            }
        }
        if (!placed) {
            throw ValidationError("volume " + std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" +
                                  std::to_string(d[2]) + " is too small to place organ " + std::to_string(label));
        }
    }

    std::vector<float> values(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) values[i] = static_cast<float>(std::clamp(img[i], 0.0, 1.0));
    LabeledVolume out;
    out.intensity = Tensor<float>({d[0], d[1], d[2], 1}, std::move(values));
    out.labels = std::move(labels);
    out.spacing = spec.spacing;
    return out;
}

Tensor<float> random_smooth_field(const PhantomSpec& spec) {
    if (spec.amplitude < 0) throw ValidationError("deformation amplitude must be non-negative");
    if (spec.control_spacing == 0) throw ValidationError("control spacing must be positive");
    const auto& d = spec.dims;
    Rng rng(spec.seed ^ kFieldStream);
    const auto g = control_grid(d, spec.control_spacing);
    auto direction = [&rng](double out[3]) {
        double n = 0;
        while (n < 1e-6) {
            for (int k = 0; k < 3; ++k) out[k] = rng.normal();
            n = std::sqrt(out[0] * out[0] + out[1] * out[1] + out[2] * out[2]);
        }
        for (int k = 0; k < 3; ++k) out[k] /= n;
    };
    double shared[3];
    direction(shared);
    std::vector<double> grid(voxel_count(g) * 3);
    for (std::size_t i = 0; i < grid.size(); i += 3) {
        double own[3];
        direction(own);
        const double norm = rng.uniform(0.5, 1.0);
        for (int k = 0; k < 3; ++k) grid[i + k] = spec.coherence * shared[k] + (1.0 - spec.coherence) * norm * own[k];
    }
    auto field = upsample(grid, g, 3, d);
    double peak = 0;
    for (std::size_t i = 0; i < field.size(); i += 3) {
        peak = std::max(peak, std::sqrt(field[i] * field[i] + field[i + 1] * field[i + 1] + field[i + 2] * field[i + 2]));
    }
    const double scale = peak > 0 ? spec.amplitude / peak : 0.0;
    std::vector<float> out(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) out[i] = static_cast<float>(field[i] * scale);
    return Tensor<float>({d[0], d[1], d[2], 3}, std::move(out));
}

RegistrationPair make_pair(const PhantomSpec& spec) {
    RegistrationPair p;
    p.fixed = generate_phantom(spec);
    p.ground_truth = random_smooth_field(spec);
    p.moving.intensity = warp_trilinear(p.fixed.intensity, p.ground_truth);
    p.moving.labels = warp_nearest(p.fixed.labels, p.ground_truth);
    p.moving.spacing = spec.spacing;

    std::vector<std::size_t> before(spec.organs + 1, 0), after(spec.organs + 1, 0);
    for (auto v : p.fixed.labels.values) ++before[v];
    for (auto v : p.moving.labels.values) ++after[v];
    for (std::size_t l = 1; l <= spec.organs; ++l) {
        if (after[l] * 2 < before[l]) {
            p.warnings.push_back("label " + std::to_string(l) + " lost " + std::to_string(before[l] - after[l]) + " of " +
                                 std::to_string(before[l]) + " voxels to the volume border");
        }
    }
    return p;
}

// ---- MWVOL1 ----------------------------------------------------------

namespace {

const std::string kMagic = "MWVOL1";
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kHasLabels = 1u;
constexpr std::uint32_t kHasField = 2u;
constexpr std::uint64_t kMaxVoxels = std::uint64_t{1} << 32;

}  // namespace

void write_volume(std::ostream& os, const VolumeFile& v) {
    const auto& t = v.data;
    if (t.rank() != 4 || (t.dim(3) != 1 && t.dim(3) != 3)) {
        throw ShapeError("volume data must be [D,H,W,1] or [D,H,W,3], got " + shape_str(t.shape()));
    }
    const Dims3 dims{t.dim(0), t.dim(1), t.dim(2)};
    if (v.labels && v.labels->dims != dims) throw ShapeError("volume labels do not match intensity dims");
    os.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
    binary::put_le<std::uint32_t>(os, kVersion);
    for (auto n : dims) binary::put_le<std::uint64_t>(os, n);
    for (auto s : v.spacing) binary::put_f64(os, s);
    std::uint32_t flags = 0;
    if (v.labels) flags |= kHasLabels;
    if (v.is_field()) flags |= kHasField;
    binary::put_le<std::uint32_t>(os, flags);
    for (float x : t.data()) binary::put_f32(os, x);
    if (v.labels) {
        for (auto l : v.labels->values) binary::put_le<std::uint16_t>(os, l);
    }
    if (!os) throw Error("write failed");
}

VolumeFile read_volume(std::istream& is) {
    binary::expect_magic(is, kMagic);
    const auto version = binary::get_le<std::uint32_t>(is, "version");
    if (version != kVersion) throw FormatError("unsupported volume version " + std::to_string(version));
    Dims3 dims{};
    std::uint64_t total = 1;
    for (auto& n : dims) {
        const auto raw = binary::get_le<std::uint64_t>(is, "dims");
        if (raw == 0) throw FormatError("volume header has a zero dimension");
        if (raw > kMaxVoxels / total) throw FormatError("volume header dims overflow the size limit");
        total *= raw;
        n = static_cast<std::size_t>(raw);
    }
    VolumeFile v;
    for (auto& s : v.spacing) s = binary::get_f64(is, "spacing");
    const auto flags = binary::get_le<std::uint32_t>(is, "flags");
    if (flags & ~(kHasLabels | kHasField)) throw FormatError("unknown volume flags " + std::to_string(flags));
    const std::size_t channels = (flags & kHasField) ? 3 : 1;

    std::vector<float> data(total * channels);
    for (auto& x : data) x = binary::get_f32(is, "voxel data");
    v.data = Tensor<float>({dims[0], dims[1], dims[2], channels}, std::move(data));
    if (flags & kHasLabels) {
        std::vector<Label> labels(total);
        for (auto& l : labels) l = binary::get_le<std::uint16_t>(is, "labels");
        v.labels = LabelMap(dims, std::move(labels));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("payload is longer than the header dims describe");
    return v;
}

void save_volume(const std::string& path, const VolumeFile& v) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    write_volume(os, v);
}

VolumeFile load_volume(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open volume '" + path + "'");
    try {
        return read_volume(is);
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

void save_labeled(const std::string& path, const LabeledVolume& v) {
    VolumeFile f;
    f.data = v.intensity;
    if (v.labels.size() > 0) f.labels = v.labels;
    f.spacing = v.spacing;
    save_volume(path, f);
}

LabeledVolume load_labeled(const std::string& path) {
    auto f = load_volume(path);
    if (f.is_field()) throw FormatError(path + ": expected an intensity volume, found a deformation field");
    LabeledVolume v;
    v.intensity = f.data;
    if (f.labels) v.labels = std::move(*f.labels);
    v.spacing = f.spacing;
    return v;
}

void save_field(const std::string& path, const Tensor<float>& phi, const Spacing& spacing) {
    if (phi.rank() != 4 || phi.dim(3) != 3) throw ShapeError("field must be [D,H,W,3], got " + shape_str(phi.shape()));
    VolumeFile f;
    f.data = phi;
    f.spacing = spacing;
    save_volume(path, f);
}

Tensor<float> load_field(const std::string& path) {
    auto f = load_volume(path);
    if (!f.is_field()) throw FormatError(path + ": expected a deformation field");
    return f.data;
}

}  // namespace morphwin
