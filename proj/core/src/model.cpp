#include "girsanov/model.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/SVD>

namespace girsanov {

void ProblemSpec::validate() const {
  if (dimension < 1) throw InvalidInputError("dimension must be positive");
  if (domain.lo.size() != dimension || domain.hi.size() != dimension)
    throw InvalidInputError("domain bounds must match the dimension");
  for (int j = 0; j < dimension; ++j) {
    if (!std::isfinite(domain.lo[j]) || !std::isfinite(domain.hi[j]) ||
        !(domain.lo[j] < domain.hi[j]))
      throw InvalidInputError("domain must be a nonempty finite box");
  }
  if (initial_state.size() != dimension)
    throw InvalidInputError("initial_state must match the dimension");
  if (!domain.contains(initial_state.data(), dimension))
    throw InvalidInputError("initial_state must lie strictly inside the domain");
  if (!(alpha > 0.0)) throw InvalidInputError("alpha must be positive");
  if (!(lambda > 0.0)) throw InvalidInputError("lambda must be positive");
  if (!(dt > 0.0)) throw InvalidInputError("dt must be positive");
  if (!(t_max >= dt)) throw InvalidInputError("t_max must be at least dt");
  if (!(lambda0_hint > 0.0)) throw InvalidInputError("lambda0_hint must be positive");
  if (!(svd_rel_tol > 0.0 && svd_rel_tol < 1.0))
    throw InvalidInputError("svd_rel_tol must lie in (0, 1)");
  if (diffusion.dimension() != dimension)
    throw InvalidInputError("diffusion dimension must match the problem dimension");
  if (drift.dimension() != dimension)
    throw InvalidInputError("drift dimension must match the problem dimension");
  for (const BasisEntry& entry : basis) {
    if (entry.field.dimension() != dimension)
      throw InvalidInputError("basis field dimension must match the problem dimension");
    if (!std::isfinite(entry.sup_bound) || !(entry.sup_bound > 0.0))
      throw InvalidInputError("basis sup-norm bounds must be finite and positive");
  }
}

Eigen::VectorXd pseudo_apply(const Eigen::MatrixXd& f_matrix, const Eigen::VectorXd& y,
                             double rel_tol) {
  if (!(rel_tol > 0.0 && rel_tol < 1.0))
    throw InvalidInputError("pseudo_apply: rel_tol must lie in (0, 1)");
  if (!f_matrix.allFinite() || !y.allFinite())
    throw InvalidInputError("pseudo_apply: non-finite input");
  if (f_matrix.rows() != y.size())
    throw InvalidInputError("pseudo_apply: incompatible shapes");

  // f = U S V^T gives (f f^T)^+ = U S^+^2 U^T with the cutoff applied to S.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(f_matrix, Eigen::ComputeThinU);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? rel_tol * sv(0) : 0.0;
  Eigen::VectorXd scaled = svd.matrixU().transpose() * y;
  for (Eigen::Index i = 0; i < scaled.size(); ++i) {
    scaled(i) = sv(i) > cutoff && sv(i) > 0.0 ? scaled(i) / (sv(i) * sv(i)) : 0.0;
  }
  return svd.matrixU() * scaled;
}

double admissible_radius(double alpha, double lambda0) {
  if (!(alpha > 0.0) || !(lambda0 > 0.0))
    throw InvalidInputError("admissible_radius: inputs must be positive");
  return 2.0 * alpha * std::sqrt(lambda0) * (1.0 - 1.0 / std::sqrt(2.0));
}

double integrability_exponent(double alpha, double lambda_u, double v_norm) {
  if (!(alpha > 0.0) || !(lambda_u > 0.0) || !(v_norm >= 0.0))
    throw InvalidInputError("integrability_exponent: invalid inputs");
  if (v_norm == 0.0) return std::numeric_limits<double>::infinity();
  // The guarantee holds for exponents p with (1 - 1/sqrt(p))^2 >= s^2,
  // s = v_norm / (2 alpha sqrt(lambda_u)); at equality q = p/(p-1) = 1/(s(2-s)).
  const double s = v_norm / (2.0 * alpha * std::sqrt(lambda_u));
  if (s >= 1.0) return 1.0;  // no q > 1 guaranteed
  return 1.0 / (s * (2.0 - s));
}

Eigen::VectorXd evaluate_control(const ProblemSpec& spec, const CoeffVector& a, double t,
                                 const Eigen::VectorXd& x) {
  if (a.size() != spec.n_basis())
    throw InvalidInputError("coefficient vector length must match the basis size");
  Eigen::VectorXd u = Eigen::VectorXd::Zero(spec.dimension);
  Eigen::VectorXd bk(spec.dimension);
  for (int k = 0; k < spec.n_basis(); ++k) {
    spec.basis[static_cast<std::size_t>(k)].field.eval(t, x.data(), bk.data());
    u += a[k] * bk;
  }
  return u;
}

double control_sup_bound(const ProblemSpec& spec, const CoeffVector& a) {
  if (a.size() != spec.n_basis())
    throw InvalidInputError("coefficient vector length must match the basis size");
  double bound = 0.0;
  for (int k = 0; k < spec.n_basis(); ++k)
    bound += std::abs(a[k]) * spec.basis[static_cast<std::size_t>(k)].sup_bound;
  return bound;
}

ProblemSpec make_brownian_exit(double b) {
  if (!(b > 0.0)) throw InvalidInputError("brownian-exit: right endpoint must be positive");
  ProblemSpec spec;
  spec.dimension = 1;
  spec.domain.lo = Eigen::VectorXd::Constant(1, -2.0);
  spec.domain.hi = Eigen::VectorXd::Constant(1, b);
  spec.drift = VectorField::constant(Eigen::VectorXd::Constant(1, -1.0));
  spec.diffusion = MatrixField::scaled_identity(1, 1.0);
  spec.alpha = 1.0;
  spec.running_cost = ScalarField::zero();
  spec.terminal_cost = ScalarField::zero();
  spec.basis = {BasisEntry{VectorField::constant(Eigen::VectorXd::Constant(1, 1.0)), 1.0}};
  spec.lambda = 2.0;
  spec.initial_state = Eigen::VectorXd::Zero(1);
  spec.dt = 1e-3;
  spec.t_max = 30.0;
  spec.validate();
  return spec;
}

ProblemSpec make_double_well() {
  // V(x) = (x^2 - 1)^2 / 4 and epsilon = 1/2, so the noise scale is exactly 1.
  return make_double_well({0.25, 0.0, -0.5, 0.0, 0.25}, 0.5);
}

ProblemSpec make_double_well(const std::vector<double>& potential_coeffs, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidInputError("double-well: epsilon must be positive");
  if (potential_coeffs.size() < 2)
    throw InvalidInputError("double-well: potential needs at least degree 1");

  // drift = -V'(x)
  std::vector<double> drift_coeffs(potential_coeffs.size() - 1);
  for (std::size_t i = 1; i < potential_coeffs.size(); ++i)
    drift_coeffs[i - 1] = -static_cast<double>(i) * potential_coeffs[i];

  ProblemSpec spec;
  spec.dimension = 1;
  spec.domain.lo = Eigen::VectorXd::Constant(1, -1.4);
  spec.domain.hi = Eigen::VectorXd::Constant(1, 1.4);
  spec.drift = VectorField::polynomial(std::move(drift_coeffs));
  spec.diffusion = MatrixField::scaled_identity(1, std::sqrt(2.0 * epsilon));
  spec.alpha = std::sqrt(2.0 * epsilon);
  spec.running_cost = ScalarField::zero();
  spec.terminal_cost = ScalarField::polynomial({0.0, 0.0, 1.0});
  spec.basis = {
      BasisEntry{VectorField::gaussian_bump(1.0, -0.7, 0.35), 1.0},
      BasisEntry{VectorField::gaussian_bump(1.0, 0.0, 0.35), 1.0},
      BasisEntry{VectorField::gaussian_bump(1.0, 0.7, 0.35), 1.0},
  };
  spec.lambda = 2.0;
  spec.initial_state = Eigen::VectorXd::Zero(1);
  spec.dt = 1e-3;
  spec.t_max = 80.0;
  spec.validate();
  return spec;
}

namespace {

ScalarField scalar_field_from_json(const nlohmann::json& j) {
  const std::string kind = j.value("kind", "zero");
  if (kind == "zero") return ScalarField::zero();
  if (kind == "constant") return ScalarField::constant(j.at("value").get<double>());
  if (kind == "polynomial")
    return ScalarField::polynomial(j.at("coeffs").get<std::vector<double>>());
  throw ConfigError("unknown scalar field kind: " + kind);
}

VectorField vector_field_from_json(const nlohmann::json& j, int d) {
  const std::string kind = j.value("kind", "zero");
  if (kind == "zero") return VectorField::zero(d);
  if (kind == "constant") {
    const auto values = j.at("value").get<std::vector<double>>();
    if (static_cast<int>(values.size()) != d)
      throw ConfigError("constant field value length must match dimension");
    return VectorField::constant(
        Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  if (kind == "polynomial") {
    if (d != 1) throw ConfigError("polynomial fields require dimension 1");
    return VectorField::polynomial(j.at("coeffs").get<std::vector<double>>());
  }
  if (kind == "gaussian_bump") {
    if (d != 1) throw ConfigError("gaussian_bump fields require dimension 1");
    return VectorField::gaussian_bump(j.value("amplitude", 1.0), j.at("center").get<double>(),
                                      j.at("width").get<double>());
  }
  throw ConfigError("unknown vector field kind: " + kind);
}

void apply_common_overrides(ProblemSpec& spec, const nlohmann::json& config) {
  if (config.contains("lambda")) spec.lambda = config.at("lambda").get<double>();
  if (config.contains("dt")) spec.dt = config.at("dt").get<double>();
  if (config.contains("t_max")) spec.t_max = config.at("t_max").get<double>();
  if (config.contains("bridge")) spec.bridge = config.at("bridge").get<bool>();
  if (config.contains("horizon_is_exit"))
    spec.horizon_is_exit = config.at("horizon_is_exit").get<bool>();
  if (config.contains("alpha")) spec.alpha = config.at("alpha").get<double>();
  if (config.contains("lambda0_hint"))
    spec.lambda0_hint = config.at("lambda0_hint").get<double>();
  if (config.contains("running_cost"))
    spec.running_cost = scalar_field_from_json(config.at("running_cost"));
  if (config.contains("terminal_cost"))
    spec.terminal_cost = scalar_field_from_json(config.at("terminal_cost"));
  if (config.contains("domain")) {
    const auto& dom = config.at("domain");
    const auto lo = dom.at("lo").get<std::vector<double>>();
    const auto hi = dom.at("hi").get<std::vector<double>>();
    if (static_cast<int>(lo.size()) != spec.dimension ||
        static_cast<int>(hi.size()) != spec.dimension)
      throw ConfigError("domain bounds must match dimension");
    spec.domain.lo = Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
    spec.domain.hi = Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));
  }
  if (config.contains("initial_state")) {
    const auto x0 = config.at("initial_state").get<std::vector<double>>();
    if (static_cast<int>(x0.size()) != spec.dimension)
      throw ConfigError("initial_state must match dimension");
    spec.initial_state =
        Eigen::Map<const Eigen::VectorXd>(x0.data(), static_cast<Eigen::Index>(x0.size()));
  }
  if (config.contains("basis")) {
    spec.basis.clear();
    for (const auto& entry : config.at("basis")) {
      spec.basis.push_back(BasisEntry{vector_field_from_json(entry, spec.dimension),
                                      entry.value("sup_bound", 1.0)});
    }
  }
}

}  // namespace

ProblemSpec load_problem(const nlohmann::json& config) {
  try {
    ProblemSpec spec;
    if (config.contains("problem")) {
      const std::string name = config.at("problem").get<std::string>();
      if (name == "brownian-exit") {
        spec = make_brownian_exit(config.value("b", 1.0));
      } else if (name == "double-well") {
        if (config.contains("potential_coeffs")) {
          spec = make_double_well(config.at("potential_coeffs").get<std::vector<double>>(),
                                  config.value("epsilon", 0.5));
        } else {
          spec = make_double_well();
        }
      } else {
        throw ConfigError("unknown builtin problem: " + name);
      }
    } else {
      spec.dimension = config.at("dimension").get<int>();
      const auto& dom = config.at("domain");
      const auto lo = dom.at("lo").get<std::vector<double>>();
      const auto hi = dom.at("hi").get<std::vector<double>>();
      spec.domain.lo = Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
      spec.domain.hi = Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));
      spec.drift = vector_field_from_json(config.at("drift"), spec.dimension);
      if (config.contains("diffusion")) {
        const auto& diff = config.at("diffusion");
        const std::string kind = diff.value("kind", "scaled_identity");
        if (kind == "scaled_identity") {
          spec.diffusion =
              MatrixField::scaled_identity(spec.dimension, diff.value("scale", 1.0));
        } else if (kind == "constant") {
          const auto rows = diff.at("value").get<std::vector<std::vector<double>>>();
          Eigen::MatrixXd m(spec.dimension, spec.dimension);
          if (static_cast<int>(rows.size()) != spec.dimension)
            throw ConfigError("diffusion matrix must be d x d");
          for (int i = 0; i < spec.dimension; ++i) {
            if (static_cast<int>(rows[static_cast<std::size_t>(i)].size()) != spec.dimension)
              throw ConfigError("diffusion matrix must be d x d");
            for (int j = 0; j < spec.dimension; ++j)
              m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
          }
          spec.diffusion = MatrixField::constant(std::move(m));
        } else {
          throw ConfigError("unknown diffusion kind: " + kind);
        }
      } else {
        spec.diffusion = MatrixField::scaled_identity(spec.dimension, 1.0);
      }
      const auto x0 = config.at("initial_state").get<std::vector<double>>();
      spec.initial_state =
          Eigen::Map<const Eigen::VectorXd>(x0.data(), static_cast<Eigen::Index>(x0.size()));
      spec.basis.clear();
      for (const auto& entry : config.at("basis")) {
        spec.basis.push_back(BasisEntry{vector_field_from_json(entry, spec.dimension),
                                        entry.value("sup_bound", 1.0)});
      }
    }
    apply_common_overrides(spec, config);
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("problem config: ") + e.what());
  }
}

ProblemSpec load_problem_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open problem config: " + path);
  nlohmann::json config;
  try {
    in >> config;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("problem config parse: ") + e.what());
  }
  return load_problem(config);
}

}  // namespace girsanov
