#include "fap/linear.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fap/csv.hpp"
#include "fap/errors.hpp"

namespace fap {

std::string to_string(LinearKind kind) {
  switch (kind) {
    case LinearKind::ols: return "ols";
    case LinearKind::pls: return "pls";
    case LinearKind::pcr: return "pcr";
  }
  return "?";
}

namespace {

struct Centered {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd x_mean;
  double y_mean;
};

Centered center(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw ShapeError("X/y row mismatch");
  if (X.rows() < 1) throw ShapeError("empty design matrix");
  Centered c;
  c.x_mean = X.colwise().mean();
  c.y_mean = y.mean();
  c.X = X.rowwise() - c.x_mean.transpose();
  c.y = y.array() - c.y_mean;
  return c;
}

void finish_from_centered_beta(LinearModel& model, const Centered& c,
                               const Eigen::VectorXd& beta) {
  model.coefficients = beta;
  model.intercept = c.y_mean - c.x_mean.dot(beta);
}

}  // namespace

LinearModel fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Centered c = center(X, y);
  LinearModel model;
  model.kind = LinearKind::ols;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(c.X);
  model.rank_deficient = cod.rank() < X.cols();
  Eigen::VectorXd beta = cod.solve(c.y);  // minimum-norm when rank-deficient
  finish_from_centered_beta(model, c, beta);
  return model;
}

LinearModel fit_pcr(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    double variance_threshold) {
  if (variance_threshold <= 0.0 || variance_threshold > 1.0) {
    throw DegenerateInputError("variance threshold must be in (0, 1]");
  }
  Centered c = center(X, y);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c.X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  double total = sv.array().square().sum();
  if (!(total > 0.0)) throw DegenerateInputError("design matrix has zero variance");

  const double rank_tol = sv(0) * std::max(X.rows(), X.cols()) *
                          std::numeric_limits<double>::epsilon();
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > rank_tol) ++rank;
  }

  // Explained-variance fractions are non-increasing in component order, so
  // the smallest qualifying k is the first prefix reaching the threshold.
  int k = 0;
  double cum = 0.0;
  for (int i = 0; i < rank; ++i) {
    cum += sv(i) * sv(i) / total;
    k = i + 1;
    if (cum >= variance_threshold - 1e-12) break;
  }
  if (k == 0) k = 1;

  Eigen::MatrixXd components = svd.matrixV().leftCols(k);
  Eigen::MatrixXd scores = c.X * components;  // centered by construction
  Eigen::VectorXd gamma =
      scores.completeOrthogonalDecomposition().solve(c.y);

  LinearModel model;
  model.kind = LinearKind::pcr;
  model.variance_threshold = variance_threshold;
  model.n_components = k;
  model.projection = LinearModel::Projection{components, c.x_mean};
  finish_from_centered_beta(model, c, components * gamma);
  return model;
}

LinearModel fit_pls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    double variance_threshold) {
  if (variance_threshold <= 0.0 || variance_threshold > 1.0) {
    throw DegenerateInputError("variance threshold must be in (0, 1]");
  }
  Centered c = center(X, y);
  const double total_var = c.X.array().square().sum();
  if (!(total_var > 0.0)) throw DegenerateInputError("design matrix has zero variance");

  const Eigen::Index P = X.cols();
  Eigen::MatrixXd deflated = c.X;
  Eigen::MatrixXd W(P, P), Pl(P, P);
  Eigen::VectorXd q(P);
  const double cov_tol = 1e-12 * std::sqrt(total_var) * std::max(1.0, c.y.norm());

  LinearModel model;
  model.kind = LinearKind::pls;
  model.variance_threshold = variance_threshold;

  int k = 0;
  double captured = 0.0;
  while (k < P) {
    Eigen::VectorXd w = deflated.transpose() * c.y;
    double wnorm = w.norm();
    if (wnorm <= cov_tol) {
      model.flagged = true;  // covariance exhausted before the threshold
      break;
    }
    w /= wnorm;
    Eigen::VectorXd t = deflated * w;
    double tt = t.squaredNorm();
    if (!(tt > 0.0)) {
      model.flagged = true;
      break;
    }
    Eigen::VectorXd p = deflated.transpose() * t / tt;
    W.col(k) = w;
    Pl.col(k) = p;
    q(k) = c.y.dot(t) / tt;
    deflated.noalias() -= t * p.transpose();
    captured += tt * p.squaredNorm() / total_var;
    ++k;
    if (captured >= variance_threshold - 1e-12) break;
  }
  if (k == 0) throw DegenerateInputError("response has no covariance with the features");

  Eigen::MatrixXd Wk = W.leftCols(k);
  Eigen::MatrixXd Pk = Pl.leftCols(k);
  Eigen::VectorXd qk = q.head(k);
  // beta = W (P' W)^-1 q maps the deflation recursion back to feature space.
  Eigen::MatrixXd PtW = Pk.transpose() * Wk;
  Eigen::VectorXd beta = Wk * PtW.colPivHouseholderQr().solve(qk);

  model.n_components = k;
  model.projection = LinearModel::Projection{Wk * PtW.colPivHouseholderQr()
                                                      .solve(Eigen::MatrixXd::Identity(k, k)),
                                             c.x_mean};
  finish_from_centered_beta(model, c, beta);
  return model;
}

Eigen::VectorXd predict_linear(const LinearModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != model.coefficients.size()) {
    throw ShapeError("feature width " + std::to_string(X.cols()) +
                     " does not match model width " + std::to_string(model.coefficients.size()));
  }
  return (X * model.coefficients).array() + model.intercept;
}

void save_linear(const LinearModel& model, const std::filesystem::path& path,
                 const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "fap-linear-params v1\n";
  out << "config_hash " << (config_hash.empty() ? "-" : config_hash) << '\n';
  out << "kind " << to_string(model.kind) << '\n';
  out << "intercept " << format_double(model.intercept) << '\n';
  out << "n_components " << model.n_components << '\n';
  out << "variance_threshold " << format_double(model.variance_threshold) << '\n';
  out << "flags " << (model.rank_deficient ? 1 : 0) << ' ' << (model.flagged ? 1 : 0) << '\n';
  out << "coefficients";
  for (Eigen::Index i = 0; i < model.coefficients.size(); ++i) {
    out << ' ' << format_double(model.coefficients(i));
  }
  out << '\n';
  if (model.projection) {
    out << "projection " << model.projection->components.rows() << ' '
        << model.projection->components.cols();
    for (Eigen::Index i = 0; i < model.projection->components.size(); ++i) {
      out << ' ' << format_double(model.projection->components.data()[i]);
    }
    out << '\n';
    out << "feature_means";
    for (Eigen::Index i = 0; i < model.projection->feature_means.size(); ++i) {
      out << ' ' << format_double(model.projection->feature_means(i));
    }
    out << '\n';
  }
}

LinearModel load_linear(const std::filesystem::path& path,
                        const std::string& expected_config_hash) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  const std::string where = path.string();
  std::string line;
  if (!std::getline(in, line) || line != "fap-linear-params v1") {
    throw ParseError(where + ": not a linear parameter file");
  }
  LinearModel model;
  std::string stored_hash, kind;
  auto read_tagged = [&](const std::string& tag) -> std::istringstream {
    if (!std::getline(in, line)) throw ParseError(where + ": missing '" + tag + "'");
    std::istringstream ss(line);
    std::string got;
    ss >> got;
    if (got != tag) throw ParseError(where + ": expected '" + tag + "'");
    return ss;
  };
  auto read_doubles = [&](std::istringstream& ss) {
    std::vector<double> vals;
    std::string cell;
    while (ss >> cell) {
      double v;
      if (!parse_double(cell, v)) throw ParseError(where + ": bad number '" + cell + "'");
      vals.push_back(v);
    }
    return vals;
  };

  { auto ss = read_tagged("config_hash"); ss >> stored_hash; }
  { auto ss = read_tagged("kind"); ss >> kind; }
  if (kind == "ols") model.kind = LinearKind::ols;
  else if (kind == "pls") model.kind = LinearKind::pls;
  else if (kind == "pcr") model.kind = LinearKind::pcr;
  else throw ParseError(where + ": unknown kind '" + kind + "'");
  { auto ss = read_tagged("intercept"); std::string c; ss >> c; parse_double(c, model.intercept); }
  { auto ss = read_tagged("n_components"); ss >> model.n_components; }
  { auto ss = read_tagged("variance_threshold"); std::string c; ss >> c; parse_double(c, model.variance_threshold); }
  { auto ss = read_tagged("flags"); int a, b; ss >> a >> b; model.rank_deficient = a; model.flagged = b; }
  if (!expected_config_hash.empty() && stored_hash != "-" && stored_hash != expected_config_hash) {
    throw StaleArtifactError(where + ": config hash mismatch");
  }
  {
    auto ss = read_tagged("coefficients");
    auto vals = read_doubles(ss);
    model.coefficients = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  }
  if (std::getline(in, line) && line.rfind("projection", 0) == 0) {
    std::istringstream ss(line);
    std::string tag;
    Eigen::Index rows, cols;
    ss >> tag >> rows >> cols;
    auto vals = read_doubles(ss);
    if (static_cast<Eigen::Index>(vals.size()) != rows * cols) {
      throw ParseError(where + ": projection size mismatch");
    }
    LinearModel::Projection proj;
    proj.components = Eigen::Map<Eigen::MatrixXd>(vals.data(), rows, cols);
    auto mss = read_tagged("feature_means");
    auto means = read_doubles(mss);
    proj.feature_means = Eigen::Map<Eigen::VectorXd>(means.data(), static_cast<Eigen::Index>(means.size()));
    model.projection = std::move(proj);
  }
  return model;
}

}  // namespace fap
