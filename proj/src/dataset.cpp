#include "dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cloudnn {

Eigen::MatrixXf Dataset::features_matrix() const {
    Eigen::MatrixXf X(feature_len, records.size());
    for (size_t i = 0; i < records.size(); ++i)
        X.col(static_cast<long>(i)) =
            Eigen::Map<const Eigen::VectorXf>(records[i].features.data(), feature_len);
    return X;
}

Eigen::VectorXf Dataset::targets_vector() const {
    Eigen::VectorXf y(records.size());
    for (size_t i = 0; i < records.size(); ++i) y(static_cast<long>(i)) = records[i].target;
    return y;
}

Vec3 sample_light_dir(Rng& rng) { return rng.uniform_sphere(); }

ShadingPoint sample_shading_point(const Medium& medium, Rng& rng, int max_attempts) {
    Box3 box = medium.bounds();
    Vec3 center = box.center();
    double radius = 0.5 * length(box.extent());

    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        Vec3 omega = rng.uniform_sphere();
        // uniform point on the perpendicular disk of the bounding sphere
        double r = radius * std::sqrt(rng.uniform());
        double phi = 2.0 * M_PI * rng.uniform();
        Vec3 t, b;
        onb(omega, t, b);
        Vec3 disk = t * (r * std::cos(phi)) + b * (r * std::sin(phi));
        // back off by one extra radius so the origin is outside the sphere
        Vec3 origin = center + disk - omega * (2.0 * radius);
        auto hit = sample_free_flight(medium, origin, omega, rng);
        if (hit) return {*hit, omega};
    }
    throw std::runtime_error("failed to sample a shading point inside the medium");
}

Dataset generate_records(const std::vector<Medium>& media, size_t n, const GenOptions& opt) {
    if (media.empty()) throw std::invalid_argument("need at least one medium");
    for (const auto& m : media)
        if (!m.volume) throw std::invalid_argument("record generation needs grid media");

    Dataset ds;
    ds.levels = static_cast<uint32_t>(opt.stencil.levels);
    ds.points_per_level = static_cast<uint32_t>(opt.stencil.points_per_level());
    ds.feature_len = static_cast<uint32_t>(opt.stencil.feature_len());
    ds.records.resize(n);
    if (opt.with_debug) ds.debug.resize(n);

    std::string error;
#pragma omp parallel for schedule(dynamic, 4)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        try {
            Rng rng = make_stream(opt.seed, static_cast<uint64_t>(i));
            const Medium& medium = media[i % media.size()];
            ShadingPoint sp = sample_shading_point(medium, rng);
            Vec3 omega_l = sample_light_dir(rng);
            LiEstimate est = estimate_Li(medium, sp.x, sp.omega, omega_l, opt.stop, rng);
            Descriptor d =
                extract_descriptor(*medium.volume, sp.x, sp.omega, omega_l, opt.stencil);

            TrainingRecord& rec = ds.records[i];
            rec.features = d.flat();
            rec.target = static_cast<float>(est.mean);
            rec.cloud_id = static_cast<uint16_t>(i % media.size());
            rec.n_oracle_samples = est.n_samples;
            if (opt.with_debug) ds.debug[i] = {sp.x, sp.omega, omega_l};
        } catch (const std::exception& e) {
#pragma omp critical
            if (error.empty())
                error = "record " + std::to_string(i) + ": " + e.what();
        }
    }
    if (!error.empty()) throw std::runtime_error(error);
    return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, uint64_t seed) {
    if (!(train_fraction > 0 && train_fraction < 1))
        throw std::invalid_argument("train fraction must lie in (0, 1)");
    size_t n = data.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = make_stream(seed, 0x5b17);
    for (size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_int(static_cast<uint32_t>(i))]);

    size_t n_train = static_cast<size_t>(std::llround(train_fraction * n));
    auto make_subset = [&](size_t begin, size_t end) {
        Dataset out;
        out.levels = data.levels;
        out.points_per_level = data.points_per_level;
        out.feature_len = data.feature_len;
        for (size_t i = begin; i < end; ++i) {
            out.records.push_back(data.records[order[i]]);
            if (!data.debug.empty()) out.debug.push_back(data.debug[order[i]]);
        }
        return out;
    };
    return {make_subset(0, n_train), make_subset(n_train, n)};
}

namespace {
constexpr char kMagic[4] = {'R', 'P', 'N', 'D'};
constexpr char kDebugMagic[4] = {'D', 'B', 'U', 'G'};
constexpr uint32_t kVersion = 1;
}  // namespace

void save_dataset(const Dataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out.write(kMagic, 4);
    uint32_t header[4] = {kVersion, data.levels, data.points_per_level, data.feature_len};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    uint64_t count = data.records.size();
    out.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& rec : data.records) {
        if (rec.features.size() != data.feature_len)
            throw FormatError("record feature length does not match dataset header");
        out.write(reinterpret_cast<const char*>(rec.features.data()),
                  static_cast<std::streamsize>(data.feature_len * sizeof(float)));
        out.write(reinterpret_cast<const char*>(&rec.target), 4);
        out.write(reinterpret_cast<const char*>(&rec.cloud_id), 2);
        out.write(reinterpret_cast<const char*>(&rec.n_oracle_samples), 4);
    }
    if (!data.debug.empty()) {
        if (data.debug.size() != data.records.size())
            throw FormatError("debug section must cover every record");
        out.write(kDebugMagic, 4);
        for (const auto& d : data.debug) {
            float v[9] = {static_cast<float>(d.x.x),       static_cast<float>(d.x.y),
                          static_cast<float>(d.x.z),       static_cast<float>(d.omega.x),
                          static_cast<float>(d.omega.y),   static_cast<float>(d.omega.z),
                          static_cast<float>(d.omega_l.x), static_cast<float>(d.omega_l.y),
                          static_cast<float>(d.omega_l.z)};
            out.write(reinterpret_cast<const char*>(v), sizeof(v));
        }
    }
    if (!out) throw FormatError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(path + ": not a dataset file (bad magic)");
    uint32_t header[4];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    uint64_t count;
    in.read(reinterpret_cast<char*>(&count), 8);
    if (!in) throw FormatError(path + ": truncated header");
    if (header[0] != kVersion) throw FormatError(path + ": unsupported dataset version");

    Dataset ds;
    ds.levels = header[1];
    ds.points_per_level = header[2];
    ds.feature_len = header[3];
    if (ds.feature_len != ds.levels * ds.points_per_level + 1)
        throw FormatError(path + ": inconsistent feature length in header");
    ds.records.resize(count);
    for (auto& rec : ds.records) {
        rec.features.resize(ds.feature_len);
        in.read(reinterpret_cast<char*>(rec.features.data()),
                static_cast<std::streamsize>(ds.feature_len * sizeof(float)));
        in.read(reinterpret_cast<char*>(&rec.target), 4);
        in.read(reinterpret_cast<char*>(&rec.cloud_id), 2);
        in.read(reinterpret_cast<char*>(&rec.n_oracle_samples), 4);
        if (!in) throw FormatError(path + ": truncated record payload");
        if (!(rec.target >= 0) || !std::isfinite(rec.target))
            throw FormatError(path + ": negative or non-finite target");
    }
    char dmagic[4];
    in.read(dmagic, 4);
    if (in && std::memcmp(dmagic, kDebugMagic, 4) == 0) {
        ds.debug.resize(count);
        for (auto& d : ds.debug) {
            float v[9];
            in.read(reinterpret_cast<char*>(v), sizeof(v));
            if (!in) throw FormatError(path + ": truncated debug section");
            d.x = {v[0], v[1], v[2]};
            d.omega = {v[3], v[4], v[5]};
            d.omega_l = {v[6], v[7], v[8]};
        }
    }
    return ds;
}

}  // namespace cloudnn
