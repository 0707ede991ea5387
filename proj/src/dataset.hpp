#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "descriptor.hpp"
#include "transport.hpp"

namespace cloudnn {

struct TrainingRecord {
    std::vector<float> features;  // [Sigma..., gamma]
    float target = 0;             // L_i per unit irradiance
    uint16_t cloud_id = 0;
    uint32_t n_oracle_samples = 0;
};

struct DebugRecord {  // optional per-record provenance
    Vec3 x, omega, omega_l;
};

struct Dataset {
    uint32_t levels = 10;
    uint32_t points_per_level = 225;
    uint32_t feature_len = 2251;
    std::vector<TrainingRecord> records;
    std::vector<DebugRecord> debug;  // empty, or one entry per record

    size_t size() const { return records.size(); }

    Eigen::MatrixXf features_matrix() const;  // feature_len x N
    Eigen::VectorXf targets_vector() const;
};

// Shading configuration sampling: direction uniform over the sphere, ray
// origin uniform over the bounding sphere's cross section, x by free flight.
struct ShadingPoint {
    Vec3 x;
    Vec3 omega;
};
ShadingPoint sample_shading_point(const Medium& medium, Rng& rng, int max_attempts = 10000);

Vec3 sample_light_dir(Rng& rng);

struct GenOptions {
    StopRule stop;
    StencilSpec stencil;
    uint64_t seed = 0;
    bool with_debug = false;
};

Dataset generate_records(const std::vector<Medium>& media, size_t n, const GenOptions& opt);

std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, uint64_t seed);

void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace cloudnn
