#include "fap/mlp.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fap/csv.hpp"
#include "fap/errors.hpp"

namespace fap {

std::vector<int> pyramid_widths(const PyramidSpec& spec) {
  if (spec.depth < 1 || spec.depth > 5) {
    throw ArchitectureError("depth must be between 1 and 5, got " + std::to_string(spec.depth));
  }
  if (spec.output_dim < 1 || spec.input_dim <= spec.output_dim) {
    throw ArchitectureError("need input_dim > output_dim >= 1");
  }

  static const std::vector<std::vector<int>> kMain = {
      {15}, {36, 6}, {56, 15, 4}, {73, 25, 9, 3}, {87, 36, 15, 6, 3}};
  static const std::vector<std::vector<int>> kGkx = {
      {32}, {32, 16}, {32, 16, 8}, {32, 16, 8, 4}, {32, 16, 8, 4, 2}};

  if (spec.mode == PyramidMode::fixed_main) return kMain[spec.depth - 1];
  if (spec.mode == PyramidMode::fixed_gkx) return kGkx[spec.depth - 1];

  const double I = spec.input_dim;
  const double O = spec.output_dim;
  const int L = spec.depth;
  std::vector<int> widths(L);
  for (int k = 1; k <= L; ++k) {
    double exact = O * std::pow(I / O, static_cast<double>(L + 1 - k) / (L + 1));
    // Snap values that are integers up to floating-point noise, so e.g.
    // 8^(1/3) floors to 2 rather than 1.
    if (std::abs(exact - std::round(exact)) < 1e-9) exact = std::round(exact);
    double rounded;
    switch (spec.rounding) {
      case Rounding::floor: rounded = std::floor(exact); break;
      case Rounding::round_half_up: rounded = std::floor(exact + 0.5); break;
      case Rounding::ceil: rounded = std::ceil(exact); break;
      default: rounded = std::floor(exact); break;
    }
    widths[k - 1] = static_cast<int>(rounded);
  }
  for (int k = 0; k < L; ++k) {
    if (widths[k] <= spec.output_dim) {
      throw ArchitectureError("pyramid formula yields width " + std::to_string(widths[k]) +
                              " <= output dim " + std::to_string(spec.output_dim));
    }
    int upper = k == 0 ? spec.input_dim : widths[k - 1];
    if (widths[k] >= upper) {
      throw ArchitectureError("pyramid formula yields a non-decreasing width sequence");
    }
  }
  return widths;
}

Eigen::Index MLPNetwork::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& layer : layers) n += layer.W.size() + layer.b.size();
  return n;
}

MLPNetwork make_network(int input_dim, const std::vector<int>& hidden,
                        int output_dim, bool batch_norm, std::uint64_t seed,
                        double bn_momentum) {
  if (hidden.empty()) throw ArchitectureError("at least one hidden layer required");
  std::vector<int> widths;
  widths.push_back(input_dim);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(output_dim);
  if (output_dim < 1) throw ArchitectureError("output dim must be >= 1");
  for (std::size_t i = 0; i + 2 < widths.size(); ++i) {
    if (widths[i] <= widths[i + 1]) {
      throw ArchitectureError("widths must strictly decrease: " + std::to_string(widths[i]) +
                              " then " + std::to_string(widths[i + 1]));
    }
  }
  if (hidden.back() < output_dim) {
    throw ArchitectureError("last hidden width " + std::to_string(hidden.back()) +
                            " below output dim " + std::to_string(output_dim));
  }

  MLPNetwork net;
  net.widths = widths;
  net.batch_norm = batch_norm;
  net.bn_momentum = bn_momentum;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    int fan_in = widths[l];
    int fan_out = widths[l + 1];
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd W(fan_in, fan_out);
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      for (Eigen::Index i = 0; i < W.rows(); ++i) {
        W(i, j) = rng.uniform(-bound, bound);
      }
    }
    net.layers.push_back({std::move(W), Eigen::VectorXd::Zero(fan_out)});
  }
  for (int l = 0; l < net.hidden_layers(); ++l) {
    net.bn_running_mean.push_back(Eigen::VectorXd::Zero(widths[l + 1]));
    net.bn_running_var.push_back(Eigen::VectorXd::Ones(widths[l + 1]));
  }
  return net;
}

Eigen::VectorXd flatten_parameters(const MLPNetwork& net) {
  Eigen::VectorXd flat(net.parameter_count());
  Eigen::Index off = 0;
  for (const auto& layer : net.layers) {
    flat.segment(off, layer.W.size()) = Eigen::Map<const Eigen::VectorXd>(layer.W.data(), layer.W.size());
    off += layer.W.size();
    flat.segment(off, layer.b.size()) = layer.b;
    off += layer.b.size();
  }
  return flat;
}

void unflatten_parameters(MLPNetwork& net, const Eigen::VectorXd& flat) {
  if (flat.size() != net.parameter_count()) throw ShapeError("parameter vector size mismatch");
  Eigen::Index off = 0;
  for (auto& layer : net.layers) {
    Eigen::Map<Eigen::VectorXd>(layer.W.data(), layer.W.size()) = flat.segment(off, layer.W.size());
    off += layer.W.size();
    layer.b = flat.segment(off, layer.b.size());
    off += layer.b.size();
  }
}

Eigen::MatrixXd forward(MLPNetwork& net, const Eigen::MatrixXd& batch,
                        bool training, ForwardCache* cache) {
  if (batch.cols() != net.input_dim()) {
    throw ShapeError("batch width " + std::to_string(batch.cols()) +
                     " does not match input dim " + std::to_string(net.input_dim()));
  }
  if (training && net.batch_norm && batch.rows() < 2) {
    throw ShapeError("batch norm needs at least 2 samples per training batch");
  }
  const int hidden = net.hidden_layers();
  if (cache) {
    cache->input = batch;
    cache->z.assign(hidden, {});
    cache->zhat.assign(hidden, {});
    cache->a.assign(hidden, {});
    cache->mu.assign(hidden, {});
    cache->var.assign(hidden, {});
    cache->training = training;
  }

  Eigen::MatrixXd act = batch;
  for (int l = 0; l < hidden; ++l) {
    const auto& layer = net.layers[l];
    Eigen::MatrixXd z = (act * layer.W).rowwise() + layer.b.transpose();
    Eigen::MatrixXd zhat;
    Eigen::RowVectorXd mu, var;
    if (net.batch_norm) {
      if (training) {
        const double m = static_cast<double>(z.rows());
        mu = z.colwise().mean();
        Eigen::MatrixXd centered = z.rowwise() - mu;
        var = (centered.array().square().colwise().sum() / m).matrix();  // biased
        zhat = (centered.array().rowwise() / (var.array() + net.bn_eps).sqrt()).matrix();
        net.bn_running_mean[l] = net.bn_momentum * net.bn_running_mean[l] +
                                 (1.0 - net.bn_momentum) * mu.transpose();
        net.bn_running_var[l] = net.bn_momentum * net.bn_running_var[l] +
                                (1.0 - net.bn_momentum) * var.transpose();
      } else {
        mu = net.bn_running_mean[l].transpose();
        var = net.bn_running_var[l].transpose();
        zhat = ((z.rowwise() - mu).array().rowwise() / (var.array() + net.bn_eps).sqrt()).matrix();
      }
    } else {
      zhat = z;
    }
    Eigen::MatrixXd a = zhat.cwiseMax(0.0);  // ReLU
    if (!a.allFinite()) throw NumericError("non-finite activation in hidden layer " + std::to_string(l + 1));
    if (cache) {
      cache->z[l] = std::move(z);
      cache->zhat[l] = zhat;
      cache->a[l] = a;
      cache->mu[l] = mu;
      cache->var[l] = var;
    }
    act = std::move(a);
  }
  const auto& out_layer = net.layers.back();
  Eigen::MatrixXd out = (act * out_layer.W).rowwise() + out_layer.b.transpose();
  if (!out.allFinite()) throw NumericError("non-finite network output");
  return out;
}

double l1_penalty(const MLPNetwork& net) {
  double sum = 0.0;
  for (const auto& layer : net.layers) sum += layer.W.array().abs().sum();
  return sum;
}

double l1_mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                   const MLPNetwork& net, double lambda) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeError("prediction/target shape mismatch");
  }
  if (pred.rows() < 1) throw ShapeError("empty prediction vector");
  double mse = (target - pred).array().square().sum() / static_cast<double>(pred.rows());
  return mse + lambda * l1_penalty(net);
}

namespace {

// Batch-norm backward for one hidden layer (no affine parameters):
// dz = (m*g - sum(g) - zhat * <g, zhat>) / (m * sqrt(var + eps)), per column.
Eigen::MatrixXd batchnorm_backward(const Eigen::MatrixXd& dzhat,
                                   const Eigen::MatrixXd& zhat,
                                   const Eigen::RowVectorXd& var, double eps) {
  const double m = static_cast<double>(dzhat.rows());
  Eigen::RowVectorXd inv_std = (var.array() + eps).sqrt().inverse();
  Eigen::RowVectorXd sum_g = dzhat.colwise().sum();
  Eigen::RowVectorXd sum_gz = (dzhat.array() * zhat.array()).colwise().sum();
  Eigen::MatrixXd dz = (m * dzhat).rowwise() - sum_g;
  dz.noalias() -= zhat * sum_gz.asDiagonal();
  dz = (dz.array().rowwise() * (inv_std.array() / m)).matrix();
  return dz;
}

}  // namespace

Eigen::VectorXd backprop(const MLPNetwork& net, const ForwardCache& cache,
                         const Eigen::MatrixXd& targets, double lambda) {
  const int hidden = net.hidden_layers();
  if (!cache.training && net.batch_norm) {
    throw ShapeError("backprop requires a training-mode forward cache");
  }
  const Eigen::MatrixXd& last_act = hidden > 0 ? cache.a[hidden - 1] : cache.input;
  const auto& out_layer = net.layers.back();
  Eigen::MatrixXd pred = (last_act * out_layer.W).rowwise() + out_layer.b.transpose();
  if (pred.rows() != targets.rows() || pred.cols() != targets.cols()) {
    throw ShapeError("target shape mismatch in backprop");
  }
  const double T = static_cast<double>(pred.rows());

  std::vector<Eigen::MatrixXd> grad_W(net.layers.size());
  std::vector<Eigen::VectorXd> grad_b(net.layers.size());

  // Output layer: identity activation, delta = dMSE/dpred.
  Eigen::MatrixXd delta = 2.0 / T * (pred - targets);
  grad_W.back() = last_act.transpose() * delta;
  grad_b.back() = delta.colwise().sum().transpose();
  Eigen::MatrixXd dact = delta * out_layer.W.transpose();

  for (int l = hidden - 1; l >= 0; --l) {
    // ReLU applied to the (possibly normalized) pre-activation.
    Eigen::MatrixXd dzhat =
        (cache.zhat[l].array() > 0.0).select(dact, Eigen::MatrixXd::Zero(dact.rows(), dact.cols()));
    Eigen::MatrixXd dz = net.batch_norm
                             ? batchnorm_backward(dzhat, cache.zhat[l], cache.var[l], net.bn_eps)
                             : std::move(dzhat);
    const Eigen::MatrixXd& prev_act = l == 0 ? cache.input : cache.a[l - 1];
    grad_W[l] = prev_act.transpose() * dz;
    grad_b[l] = dz.colwise().sum().transpose();
    if (l > 0) dact = dz * net.layers[l].W.transpose();
  }

  // L1 subgradient on weights only; sign(0) = 0.
  if (lambda != 0.0) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      grad_W[l].array() += lambda * net.layers[l].W.array().sign();
    }
  }

  Eigen::VectorXd flat(net.parameter_count());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    flat.segment(off, grad_W[l].size()) =
        Eigen::Map<const Eigen::VectorXd>(grad_W[l].data(), grad_W[l].size());
    off += grad_W[l].size();
    flat.segment(off, grad_b[l].size()) = grad_b[l];
    off += grad_b[l].size();
  }
  if (!flat.allFinite()) throw NumericError("non-finite gradient");
  return flat;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& state, const TrainConfig& config) {
  if (params.size() != grads.size() || state.m.size() != params.size()) {
    throw ShapeError("Adam state/gradient size mismatch");
  }
  state.step += 1;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grads;
  state.v = (config.beta2 * state.v.array() + (1.0 - config.beta2) * grads.array().square()).matrix();
  const double m_corr = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double v_corr = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  Eigen::ArrayXd m_hat = state.m.array() / m_corr;
  Eigen::ArrayXd v_hat = state.v.array() / v_corr;
  params.array() -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
}

TrainResult train(MLPNetwork net, const Eigen::MatrixXd& train_X,
                  const Eigen::VectorXd& train_y, const Eigen::MatrixXd& val_X,
                  const Eigen::VectorXd& val_y, const TrainConfig& config) {
  if (train_X.rows() != train_y.size() || val_X.rows() != val_y.size()) {
    throw ShapeError("feature/target row mismatch");
  }
  if (train_X.cols() != net.input_dim() || val_X.cols() != net.input_dim()) {
    throw ShapeError("feature width does not match network input dim");
  }
  if (net.output_dim() != 1) throw ShapeError("train() expects a single-output network");
  if (config.patience < 1) throw ShapeError("patience must be >= 1");
  if (config.batch_size < 1) throw ShapeError("batch size must be >= 1");
  if (!(config.learning_rate > 0.0)) throw ShapeError("learning rate must be > 0");
  if (config.beta1 < 0.0 || config.beta1 >= 1.0 || config.beta2 < 0.0 || config.beta2 >= 1.0) {
    throw ShapeError("Adam betas must lie in [0, 1)");
  }
  if (net.batch_norm && (train_X.rows() < 2 || config.batch_size < 2)) {
    throw ShapeError("batch norm training needs batches of at least 2 samples");
  }

  net.bn_momentum = config.batchnorm_momentum;
  const Eigen::Index n = train_X.rows();

  TrainResult result;
  result.best = net;  // fallback if training aborts before the first epoch completes
  EarlyStopper stopper(config.patience);
  Rng shuffle_rng(mix_seed(config.seed, 0x53485546ULL));

  Eigen::VectorXd params = flatten_parameters(net);
  AdamState adam = AdamState::zeros(params.size());

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    auto order = shuffled_indices(static_cast<std::size_t>(n), shuffle_rng);
    double epoch_loss = 0.0;
    bool numeric_failure = false;

    Eigen::Index pos = 0;
    while (pos < n) {
      Eigen::Index take = std::min<Eigen::Index>(config.batch_size, n - pos);
      // A singleton remainder cannot be batch-normalized; absorb it here.
      if (net.batch_norm && n - pos - take == 1) take += 1;
      Eigen::MatrixXd X_b(take, train_X.cols());
      Eigen::MatrixXd y_b(take, 1);
      for (Eigen::Index i = 0; i < take; ++i) {
        X_b.row(i) = train_X.row(static_cast<Eigen::Index>(order[pos + i]));
        y_b(i, 0) = train_y(static_cast<Eigen::Index>(order[pos + i]));
      }
      pos += take;

      try {
        ForwardCache cache;
        Eigen::MatrixXd pred = forward(net, X_b, /*training=*/true, &cache);
        double batch_loss = l1_mse_loss(pred, y_b, net, config.lambda);
        if (!std::isfinite(batch_loss)) throw NumericError("non-finite training loss");
        epoch_loss += batch_loss * static_cast<double>(take) / static_cast<double>(n);
        Eigen::VectorXd grads = backprop(net, cache, y_b, config.lambda);
        adam_step(params, grads, adam, config);
        unflatten_parameters(net, params);
      } catch (const NumericError&) {
        numeric_failure = true;
        break;
      }
    }
    if (numeric_failure) {
      result.aborted = true;
      break;
    }

    double val_mse;
    try {
      Eigen::MatrixXd val_pred = forward(net, val_X, /*training=*/false);
      val_mse = (val_y - val_pred.col(0)).array().square().sum() /
                static_cast<double>(val_y.size());
      if (!std::isfinite(val_mse)) throw NumericError("non-finite validation MSE");
    } catch (const NumericError&) {
      result.aborted = true;
      break;
    }

    result.log.push_back({epoch, epoch_loss, val_mse});
    if (stopper.observe(val_mse)) {
      result.best = net;
      result.best_epoch = epoch;
    }
    if (stopper.should_stop()) break;
  }
  return result;
}

namespace {

void write_vector(std::ostream& out, const char* tag, const Eigen::VectorXd& v) {
  out << tag;
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << format_double(v(i));
  out << '\n';
}

Eigen::VectorXd read_vector(std::istringstream& line, Eigen::Index n, const std::string& where) {
  Eigen::VectorXd v(n);
  std::string cell;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(line >> cell)) throw ParseError(where + ": truncated parameter vector");
    double x;
    if (!parse_double(cell, x)) throw ParseError(where + ": bad number '" + cell + "'");
    v(i) = x;
  }
  return v;
}

}  // namespace

void save_network(const MLPNetwork& net, const std::filesystem::path& path,
                  const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "fap-mlp-params v1\n";
  out << "config_hash " << (config_hash.empty() ? "-" : config_hash) << '\n';
  out << "batch_norm " << (net.batch_norm ? 1 : 0) << '\n';
  out << "bn_momentum " << format_double(net.bn_momentum) << '\n';
  out << "bn_eps " << format_double(net.bn_eps) << '\n';
  out << "widths";
  for (int w : net.widths) out << ' ' << w;
  out << '\n';
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    out << "W " << l;
    for (Eigen::Index i = 0; i < layer.W.size(); ++i) out << ' ' << format_double(layer.W.data()[i]);
    out << '\n';
    write_vector(out, "b", layer.b);
  }
  for (int l = 0; l < net.hidden_layers(); ++l) {
    write_vector(out, "bn_mean", net.bn_running_mean[l]);
    write_vector(out, "bn_var", net.bn_running_var[l]);
  }
}

MLPNetwork load_network(const std::filesystem::path& path,
                        const std::string& expected_config_hash) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  const std::string where = path.string();
  std::string line;
  if (!std::getline(in, line) || line != "fap-mlp-params v1") {
    throw ParseError(where + ": not a model parameter file");
  }

  MLPNetwork net;
  std::string stored_hash;
  auto next_line = [&](const std::string& tag) -> std::istringstream {
    if (!std::getline(in, line)) throw ParseError(where + ": missing '" + tag + "' line");
    std::istringstream ss(line);
    std::string got;
    ss >> got;
    if (got != tag) throw ParseError(where + ": expected '" + tag + "', got '" + got + "'");
    return ss;
  };

  { auto ss = next_line("config_hash"); ss >> stored_hash; }
  { auto ss = next_line("batch_norm"); int flag; ss >> flag; net.batch_norm = flag != 0; }
  { auto ss = next_line("bn_momentum"); std::string c; ss >> c; parse_double(c, net.bn_momentum); }
  { auto ss = next_line("bn_eps"); std::string c; ss >> c; parse_double(c, net.bn_eps); }
  {
    auto ss = next_line("widths");
    int w;
    while (ss >> w) net.widths.push_back(w);
    if (net.widths.size() < 3) throw ParseError(where + ": widths must list input, hidden, output");
  }
  if (!expected_config_hash.empty() && stored_hash != "-" && stored_hash != expected_config_hash) {
    throw StaleArtifactError(where + ": config hash " + stored_hash +
                             " does not match current " + expected_config_hash);
  }
  for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
    Eigen::Index fan_in = net.widths[l];
    Eigen::Index fan_out = net.widths[l + 1];
    auto wss = next_line("W");
    int idx;
    wss >> idx;
    Eigen::VectorXd wflat = read_vector(wss, fan_in * fan_out, where);
    Eigen::MatrixXd W = Eigen::Map<Eigen::MatrixXd>(wflat.data(), fan_in, fan_out);
    auto bss = next_line("b");
    Eigen::VectorXd b = read_vector(bss, fan_out, where);
    net.layers.push_back({std::move(W), std::move(b)});
  }
  for (std::size_t l = 0; l + 2 < net.widths.size(); ++l) {
    auto mss = next_line("bn_mean");
    net.bn_running_mean.push_back(read_vector(mss, net.widths[l + 1], where));
    auto vss = next_line("bn_var");
    net.bn_running_var.push_back(read_vector(vss, net.widths[l + 1], where));
  }
  return net;
}

}  // namespace fap
