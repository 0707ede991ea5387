#include "volume.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "rng.hpp"

namespace cloudnn {

namespace {

constexpr char kMagic[4] = {'V', 'O', 'X', 'G'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return static_cast<bool>(in);
}

}  // namespace

void DensityGrid::validate() const {
    if (nx <= 0 || ny <= 0 || nz <= 0)
        throw FormatError("grid dims must be positive");
    if (data.size() != static_cast<size_t>(nx) * ny * nz)
        throw FormatError("grid payload size does not match dims");
    Vec3 e = world_box.extent();
    if (!(e.x > 0 && e.y > 0 && e.z > 0))
        throw FormatError("world_box must have positive extent");
    for (size_t i = 0; i < data.size(); ++i) {
        float v = data[i];
        if (!(v >= 0.0f) || !std::isfinite(v))
            throw FormatError("negative or non-finite density at voxel " + std::to_string(i));
    }
}

double DensityGrid::sample(const Vec3& p) const {
    if (!world_box.contains(p)) return 0.0;
    Vec3 e = world_box.extent();
    // continuous voxel coordinates with cell-centered data
    double fx = (p.x - world_box.min.x) / e.x * nx - 0.5;
    double fy = (p.y - world_box.min.y) / e.y * ny - 0.5;
    double fz = (p.z - world_box.min.z) / e.z * nz - 0.5;
    int x0 = static_cast<int>(std::floor(fx));
    int y0 = static_cast<int>(std::floor(fy));
    int z0 = static_cast<int>(std::floor(fz));
    double tx = fx - x0, ty = fy - y0, tz = fz - z0;
    auto clampi = [](int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); };
    int x1 = clampi(x0 + 1, nx), y1 = clampi(y0 + 1, ny), z1 = clampi(z0 + 1, nz);
    x0 = clampi(x0, nx);
    y0 = clampi(y0, ny);
    z0 = clampi(z0, nz);
    double c000 = at(x0, y0, z0), c100 = at(x1, y0, z0);
    double c010 = at(x0, y1, z0), c110 = at(x1, y1, z0);
    double c001 = at(x0, y0, z1), c101 = at(x1, y0, z1);
    double c011 = at(x0, y1, z1), c111 = at(x1, y1, z1);
    double c00 = c000 + (c100 - c000) * tx;
    double c10 = c010 + (c110 - c010) * tx;
    double c01 = c001 + (c101 - c001) * tx;
    double c11 = c011 + (c111 - c011) * tx;
    double c0 = c00 + (c10 - c00) * ty;
    double c1 = c01 + (c11 - c01) * ty;
    return c0 + (c1 - c0) * tz;
}

void save_grid(const DensityGrid& grid, const std::string& path) {
    grid.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out.write(kMagic, 4);
    write_pod(out, kVersion);
    write_pod(out, static_cast<uint32_t>(grid.nx));
    write_pod(out, static_cast<uint32_t>(grid.ny));
    write_pod(out, static_cast<uint32_t>(grid.nz));
    double box[6] = {grid.world_box.min.x, grid.world_box.min.y, grid.world_box.min.z,
                     grid.world_box.max.x, grid.world_box.max.y, grid.world_box.max.z};
    out.write(reinterpret_cast<const char*>(box), sizeof(box));
    out.write(reinterpret_cast<const char*>(grid.data.data()),
              static_cast<std::streamsize>(grid.data.size() * sizeof(float)));
    if (!out) throw FormatError("write failed: " + path);
}

DensityGrid load_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(path + ": bad magic at byte 0");
    uint32_t version, nx, ny, nz;
    if (!read_pod(in, version)) throw FormatError(path + ": truncated header at byte 4");
    if (version != kVersion)
        throw FormatError(path + ": unsupported version " + std::to_string(version));
    if (!read_pod(in, nx) || !read_pod(in, ny) || !read_pod(in, nz))
        throw FormatError(path + ": truncated header at byte 8");
    if (nx == 0 || ny == 0 || nz == 0 || static_cast<uint64_t>(nx) * ny * nz > (1ULL << 32))
        throw FormatError(path + ": bad dims at byte 8");
    double box[6];
    in.read(reinterpret_cast<char*>(box), sizeof(box));
    if (!in) throw FormatError(path + ": truncated world box at byte 20");
    DensityGrid grid;
    grid.nx = static_cast<int>(nx);
    grid.ny = static_cast<int>(ny);
    grid.nz = static_cast<int>(nz);
    grid.world_box = {{box[0], box[1], box[2]}, {box[3], box[4], box[5]}};
    size_t count = static_cast<size_t>(nx) * ny * nz;
    grid.data.resize(count);
    in.read(reinterpret_cast<char*>(grid.data.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!in)
        throw FormatError(path + ": truncated payload at byte " +
                          std::to_string(68 + in.gcount()));
    for (size_t i = 0; i < count; ++i) {
        float v = grid.data[i];
        if (!(v >= 0.0f) || !std::isfinite(v))
            throw FormatError(path + ": negative or non-finite density at byte " +
                              std::to_string(68 + i * sizeof(float)));
    }
    grid.validate();
    return grid;
}

namespace {

double fade(double t) { return t * t * (3.0 - 2.0 * t); }

double lattice(uint64_t seed, int x, int y, int z) {
    uint64_t h = hash_combine(seed, (static_cast<uint64_t>(static_cast<uint32_t>(x)) << 40) ^
                                        (static_cast<uint64_t>(static_cast<uint32_t>(y)) << 20) ^
                                        static_cast<uint32_t>(z));
    return (h >> 11) * 0x1p-53 * 2.0 - 1.0;  // [-1, 1)
}

double value_noise(uint64_t seed, const Vec3& p) {
    int x0 = static_cast<int>(std::floor(p.x));
    int y0 = static_cast<int>(std::floor(p.y));
    int z0 = static_cast<int>(std::floor(p.z));
    double tx = fade(p.x - x0), ty = fade(p.y - y0), tz = fade(p.z - z0);
    double acc = 0;
    for (int dz = 0; dz <= 1; ++dz)
        for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx) {
                double w = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty) * (dz ? tz : 1 - tz);
                acc += w * lattice(seed, x0 + dx, y0 + dy, z0 + dz);
            }
    return acc;
}

double fbm(uint64_t seed, Vec3 p, int octaves = 5) {
    double acc = 0, amp = 0.5, norm = 0;
    for (int o = 0; o < octaves; ++o) {
        acc += amp * value_noise(seed + o, p);
        norm += amp;
        p *= 2.0;
        amp *= 0.5;
    }
    return acc / norm;
}

struct Ellipsoid {
    Vec3 center, radii;
};

}  // namespace

DensityGrid gen_procedural_cloud(uint64_t seed, int res, const CloudParams& params) {
    if (res < 16) throw std::invalid_argument("cloud resolution must be >= 16");
    if (params.ellipsoids < 1) throw std::invalid_argument("need at least one ellipsoid");

    Rng rng = make_stream(seed, 0xc10d);
    std::vector<Ellipsoid> blobs;
    if (params.ellipsoids == 1) {
        blobs.push_back({{0.5, 0.5, 0.5}, {0.35, 0.3, 0.35}});
    } else {
        for (int i = 0; i < params.ellipsoids; ++i) {
            Vec3 c{0.3 + 0.4 * rng.uniform(), 0.35 + 0.3 * rng.uniform(),
                   0.3 + 0.4 * rng.uniform()};
            Vec3 r{0.12 + 0.18 * rng.uniform(), 0.1 + 0.12 * rng.uniform(),
                   0.12 + 0.18 * rng.uniform()};
            blobs.push_back({c, r});
        }
    }

    DensityGrid grid;
    grid.nx = grid.ny = grid.nz = res;
    grid.world_box = {{0, 0, 0}, {1, 1, 1}};
    grid.data.resize(static_cast<size_t>(res) * res * res);

    uint64_t noise_seed = hash_combine(seed, 0xf00f);
    for (int z = 0; z < res; ++z)
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x) {
                Vec3 p{(x + 0.5) / res, (y + 0.5) / res, (z + 0.5) / res};
                double shape = 0;
                for (const auto& e : blobs) {
                    Vec3 q = (p - e.center) / 1.0;
                    double d2 = (q.x / e.radii.x) * (q.x / e.radii.x) +
                                (q.y / e.radii.y) * (q.y / e.radii.y) +
                                (q.z / e.radii.z) * (q.z / e.radii.z);
                    shape = std::max(shape, 1.0 - d2);
                }
                double n = params.noise_amp == 0.0
                               ? 0.0
                               : params.noise_amp * fbm(noise_seed, p * params.noise_freq);
                double d = std::max(0.0, shape + n - params.threshold);
                grid.at(x, y, z) = static_cast<float>(d);
            }

    size_t nonzero = 0;
    for (float v : grid.data)
        if (v > 0) ++nonzero;
    if (nonzero < grid.data.size() / 100)
        throw std::runtime_error("procedural cloud came out (nearly) empty; adjust params/seed");
    return grid;
}

int max_mip_levels(const DensityGrid& grid) {
    int m = std::max(grid.nx, std::max(grid.ny, grid.nz));
    int levels = 1;
    while ((1 << (levels - 1)) < m) ++levels;
    return levels;  // ceil(log2(m)) + 1
}

namespace {

// Separable Gaussian, zero boundary (density outside the box is zero),
// kernel truncated at 3 sigma and renormalized.
std::vector<float> gaussian_blur(const DensityGrid& g, double sigma) {
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        kernel[i + radius] = w;
        sum += w;
    }
    for (auto& w : kernel) w /= sum;

    size_t n = g.data.size();
    std::vector<double> a(g.data.begin(), g.data.end()), b(n);
    int dims[3] = {g.nx, g.ny, g.nz};
    size_t strides[3] = {1, static_cast<size_t>(g.nx), static_cast<size_t>(g.nx) * g.ny};

    for (int axis = 0; axis < 3; ++axis) {
        int len = dims[axis];
        size_t stride = strides[axis];
        int d1 = (axis == 0) ? 1 : 0;           // the two cross axes
        int d2 = (axis == 2) ? 1 : 2;
#pragma omp parallel for schedule(static)
        for (int c2 = 0; c2 < dims[d2]; ++c2) {
            for (int c1 = 0; c1 < dims[d1]; ++c1) {
                size_t base = static_cast<size_t>(c1) * strides[d1] +
                              static_cast<size_t>(c2) * strides[d2];
                for (int i = 0; i < len; ++i) {
                    double acc = 0;
                    int j0 = std::max(0, i - radius), j1 = std::min(len - 1, i + radius);
                    for (int j = j0; j <= j1; ++j)
                        acc += kernel[j - i + radius] * a[base + j * stride];
                    b[base + i * stride] = acc;
                }
            }
        }
        std::swap(a, b);
    }

    std::vector<float> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = static_cast<float>(std::max(0.0, a[i]));
    return out;
}

}  // namespace

Mipmap build_mipmap(const DensityGrid& grid, int n_levels) {
    grid.validate();
    if (n_levels < 1 || n_levels > max_mip_levels(grid))
        throw std::invalid_argument("mipmap level count out of range");

    Mipmap mm;
    mm.levels.push_back(grid);
    mm.filter_sigmas.push_back(0.0);

    for (int lvl = 1; lvl < n_levels; ++lvl) {
        double sigma = std::pow(2.0, lvl);
        std::vector<float> blurred = gaussian_blur(grid, sigma);

        int f = 1 << lvl;
        DensityGrid level;
        level.nx = (grid.nx + f - 1) / f;
        level.ny = (grid.ny + f - 1) / f;
        level.nz = (grid.nz + f - 1) / f;
        level.world_box = grid.world_box;
        level.data.resize(static_cast<size_t>(level.nx) * level.ny * level.nz);

        for (int z = 0; z < level.nz; ++z)
            for (int y = 0; y < level.ny; ++y)
                for (int x = 0; x < level.nx; ++x) {
                    double acc = 0;
                    int cnt = 0;
                    for (int dz = z * f; dz < std::min(grid.nz, (z + 1) * f); ++dz)
                        for (int dy = y * f; dy < std::min(grid.ny, (y + 1) * f); ++dy)
                            for (int dx = x * f; dx < std::min(grid.nx, (x + 1) * f); ++dx) {
                                acc += blurred[grid.index(dx, dy, dz)];
                                ++cnt;
                            }
                    level.at(x, y, z) = static_cast<float>(acc / cnt);
                }
        mm.levels.push_back(std::move(level));
        mm.filter_sigmas.push_back(sigma);
    }
    return mm;
}

NormalizedVolume normalize(const DensityGrid& grid, double sigma_t, int n_levels) {
    grid.validate();
    if (!(sigma_t > 0)) throw std::invalid_argument("sigma_t must be positive");

    double sum = 0;
    double dmax = 0;
    size_t nonzero = 0;
    for (float v : grid.data) {
        if (v > 0) {
            sum += v;
            ++nonzero;
        }
        dmax = std::max(dmax, static_cast<double>(v));
    }
    if (nonzero == 0) throw std::runtime_error("cannot normalize an all-zero volume");

    NormalizedVolume vol;
    vol.grid = grid;
    Vec3 e = grid.world_box.extent();
    double longest = std::max(e.x, std::max(e.y, e.z));
    double s = 1.0 / longest;
    vol.grid.world_box.min = grid.world_box.min * s;
    vol.grid.world_box.max = grid.world_box.max * s;

    vol.d_bar = sum / static_cast<double>(nonzero);
    vol.sigma_t = sigma_t;
    vol.mfp = 1.0 / (sigma_t * vol.d_bar);
    vol.d_max = dmax;
    if (n_levels <= 0) n_levels = max_mip_levels(vol.grid);
    vol.mipmap = build_mipmap(vol.grid, n_levels);
    return vol;
}

double NormalizedVolume::density_at(const Vec3& p, int mip) const {
    if (mip < 0 || mip >= mipmap.n_levels())
        throw std::out_of_range("mip level out of range");
    return mipmap.levels[mip].sample(p) / d_bar;
}

}  // namespace cloudnn
