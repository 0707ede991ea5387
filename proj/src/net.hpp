#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace cloudnn {

enum class ArchKind : uint8_t { Rpnn = 0, DeepNarrowMlp = 1, ShallowWideMlp = 2 };

struct Architecture {
    ArchKind kind = ArchKind::Rpnn;
    int levels = 10;      // K, residual blocks (Rpnn only)
    int width = 200;
    int n_final = 3;      // trailing dense layers, the last one scalar
    int points_per_level = 225;

    int per_level_input() const { return points_per_level + 1; }           // 226
    int input_size() const { return levels * points_per_level + 1; }       // 2251
    int layer_count() const { return 2 * levels + n_final; }               // 23

    // Hidden widths for the MLP baselines (output layer excluded).
    std::vector<int> mlp_widths() const;

    // Tensor shapes in the serialization/enumeration order.
    std::vector<std::pair<int, int>> tensor_shapes() const;
    long param_count() const;
};

// All trainable tensors in the fixed enumeration order:
//   Rpnn: per block k = 1..K: V, W1, b1, W2, b2; then per final layer: W, b.
//   MLPs: per layer: W, b.
// Biases are stored as n x 1 matrices.
struct Params {
    Architecture arch;
    std::vector<Eigen::MatrixXd> tensors;
};

struct AdamState {
    std::vector<Eigen::MatrixXd> m, v;
    long t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

Params init_params(const Architecture& arch, uint64_t seed);
AdamState init_adam(const Params& params, double lr = 1e-3);

// Single-sample prediction; z is the flat feature vector [Sigma..., gamma].
double forward(const Params& params, const Eigen::VectorXd& z);

// Batched prediction; columns of Z are samples.
Eigen::VectorXd forward_batch(const Params& params, const Eigen::MatrixXd& Z);

double loss(double pred, double target);

// Mean loss and its exact gradient over the minibatch (columns of Z).
struct BatchGrad {
    double loss = 0;
    std::vector<Eigen::MatrixXd> grads;
};
BatchGrad backward(const Params& params, const Eigen::MatrixXd& Z,
                   const Eigen::VectorXd& targets);

void adam_step(Params& params, AdamState& state, const std::vector<Eigen::MatrixXd>& grads);

struct TrainConfig {
    long steps = 0;
    int batch_size = 1000;
    uint64_t seed = 0;
    long val_every = 100;
    double lr = 1e-3;
};

struct CurvePoint {
    long step;
    double train_loss;
    double val_loss;
};

struct TrainResult {
    Params params;                  // best validation loss seen
    Params final_params;
    AdamState final_adam;
    std::vector<CurvePoint> curves;
    double best_val_loss = 0;
};

// Features stored as float (input_size x N); targets per column.
TrainResult train(const Eigen::MatrixXf& train_X, const Eigen::VectorXf& train_y,
                  const Eigen::MatrixXf& val_X, const Eigen::VectorXf& val_y,
                  const Architecture& arch, const TrainConfig& cfg,
                  const Params* resume_params = nullptr, const AdamState* resume_adam = nullptr);

double mean_loss(const Params& params, const Eigen::MatrixXf& X, const Eigen::VectorXf& y);

void save_model(const Params& params, const std::string& path, const AdamState* adam = nullptr);
struct LoadedModel {
    Params params;
    bool has_adam = false;
    AdamState adam;
};
LoadedModel load_model(const std::string& path);

}  // namespace cloudnn
