#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fap/rng.hpp"

namespace fap {

enum class PyramidMode { formula, fixed_main, fixed_gkx };
enum class Rounding { floor, round_half_up, ceil };

struct PyramidSpec {
  int input_dim = 0;
  int output_dim = 1;
  int depth = 1;  // hidden layers, 1..5
  PyramidMode mode = PyramidMode::formula;
  Rounding rounding = Rounding::floor;
};

// Hidden widths U_1..U_L. Formula mode shrinks geometrically from the input
// dimension toward the output dimension; the fixed modes return the preset
// architectures used by the fw* and gkx_fw* model families.
std::vector<int> pyramid_widths(const PyramidSpec& spec);

// Dense feedforward net: hidden layers are affine -> batch norm (optional)
// -> ReLU, output layer affine. Weight matrices are (fan_in x fan_out).
struct MLPNetwork {
  std::vector<int> widths;  // [I, U_1..U_L, O]
  struct Layer {
    Eigen::MatrixXd W;
    Eigen::VectorXd b;
  };
  std::vector<Layer> layers;  // hidden layers then output layer

  bool batch_norm = false;
  double bn_momentum = 0.9;
  double bn_eps = 1e-8;
  std::vector<Eigen::VectorXd> bn_running_mean;  // per hidden layer
  std::vector<Eigen::VectorXd> bn_running_var;

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int hidden_layers() const { return static_cast<int>(widths.size()) - 2; }
  Eigen::Index parameter_count() const;
};

// Validates the pyramid chain (I > U_1 > ... > U_L >= O) and Glorot-uniform
// initializes weights from the seeded generator; biases start at zero.
MLPNetwork make_network(int input_dim, const std::vector<int>& hidden,
                        int output_dim, bool batch_norm, std::uint64_t seed,
                        double bn_momentum = 0.9);

Eigen::VectorXd flatten_parameters(const MLPNetwork& net);
void unflatten_parameters(MLPNetwork& net, const Eigen::VectorXd& flat);

struct ForwardCache {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> z;     // pre-activations per hidden layer
  std::vector<Eigen::MatrixXd> zhat;  // post-batch-norm pre-activations
  std::vector<Eigen::MatrixXd> a;     // post-ReLU activations per hidden layer
  std::vector<Eigen::RowVectorXd> mu;   // batch stats actually used
  std::vector<Eigen::RowVectorXd> var;
  bool training = false;
};

// Rows are samples. Training mode uses batch statistics and updates the
// running ones; inference mode uses the running statistics.
Eigen::MatrixXd forward(MLPNetwork& net, const Eigen::MatrixXd& batch,
                        bool training, ForwardCache* cache = nullptr);

// Mean squared error plus lambda * sum|W| over weight matrices (not biases).
double l1_penalty(const MLPNetwork& net);
double l1_mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                   const MLPNetwork& net, double lambda);

// Gradient of l1_mse_loss w.r.t. every weight and bias, in flat layout.
// Requires the cache of a training-mode forward pass on the same batch.
Eigen::VectorXd backprop(const MLPNetwork& net, const ForwardCache& cache,
                         const Eigen::MatrixXd& targets, double lambda);

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lambda = 1e-4;  // L1 strength
  int batch_size = 32;
  int max_epochs = 200;
  int patience = 10;
  std::uint64_t seed = 0;
  double batchnorm_momentum = 0.9;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  static AdamState zeros(Eigen::Index n) {
    return AdamState{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};
  }
};

// One Adam update: moment accumulation, bias correction, parameter step.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& state, const TrainConfig& config);

// Validation-loss controller: keeps the best value seen and counts
// consecutive non-improving epochs against the patience budget.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Returns true when this value improves on the best so far.
  bool observe(double val_loss) {
    if (val_loss < best_) {
      best_ = val_loss;
      bad_epochs_ = 0;
      return true;
    }
    ++bad_epochs_;
    return false;
  }
  bool should_stop() const { return bad_epochs_ >= patience_; }
  double best() const { return best_; }

 private:
  int patience_;
  int bad_epochs_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_mse = 0.0;
};

struct TrainResult {
  MLPNetwork best;  // snapshot with the lowest validation MSE
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  bool aborted = false;  // a non-finite loss/gradient stopped training early
};

// Shuffled minibatch Adam with early stopping; the returned snapshot is the
// epoch with the lowest validation MSE (L1 excluded from validation).
// Deterministic given config.seed.
TrainResult train(MLPNetwork net, const Eigen::MatrixXd& train_X,
                  const Eigen::VectorXd& train_y, const Eigen::MatrixXd& val_X,
                  const Eigen::VectorXd& val_y, const TrainConfig& config);

void save_network(const MLPNetwork& net, const std::filesystem::path& path,
                  const std::string& config_hash);
MLPNetwork load_network(const std::filesystem::path& path,
                        const std::string& expected_config_hash = "");

}  // namespace fap
