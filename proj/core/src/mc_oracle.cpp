#include "replica_es/mc_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <tbb/blocked_range.h>
#include <tbb/info.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include "ipm.hpp"
#include "replica_es/errors.hpp"

namespace replica_es {

namespace {

constexpr std::uint32_t kReturnStream = 0;
constexpr std::uint32_t kSignStream = 1;

boost::random::mt19937_64 engine(std::uint64_t seed, std::uint64_t rep_index, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(rep_index),
                    static_cast<std::uint32_t>(rep_index >> 32), stream};
  return boost::random::mt19937_64(seq);
}

Eigen::VectorXd rademacher(const MCConfig& cfg, std::uint64_t rep_index) {
  auto gen = engine(cfg.seed, rep_index, kSignStream);
  boost::random::uniform_int_distribution<int> coin(0, 1);
  Eigen::VectorXd s(cfg.n_assets);
  for (auto& v : s) v = coin(gen) == 0 ? -1.0 : 1.0;
  return s;
}

// Scenarios are in the tail when their multiplier is above one half.
int tail_changes(const MCInstance& a, const MCInstance& b) {
  int changes = 0;
  for (Eigen::Index t = 0; t < a.tail_multipliers.size(); ++t) {
    changes += (a.tail_multipliers(t) > 0.5) != (b.tail_multipliers(t) > 0.5);
  }
  return changes;
}

Estimate summarize(const std::vector<double>& values) {
  Estimate e;
  e.count = static_cast<int>(values.size());
  if (values.empty()) return e;
  double sum = 0.0;
  for (double v : values) sum += v;
  e.mean = sum / e.count;
  if (e.count > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - e.mean) * (v - e.mean);
    e.se = std::sqrt(ss / (e.count - 1) / e.count);
  }
  return e;
}

struct Replication {
  bool bounded = false;
  double q0 = 0.0;
  double eps = 0.0;
  double es_in = 0.0;
  double es_ratio = 0.0;
  double ratio_error = 0.0;
  std::optional<SusceptibilitySample> delta;
};

template <class F>
void for_each_replication(const MCConfig& cfg, F&& body) {
  const int available = tbb::info::default_concurrency();
  tbb::task_arena arena(cfg.workers > 0 ? std::min(cfg.workers, available) : available);
  arena.execute([&] {
    tbb::parallel_for(tbb::blocked_range<int>(0, cfg.n_samples, 1),
                      [&](const tbb::blocked_range<int>& range) {
                        for (int k = range.begin(); k != range.end(); ++k) body(k);
                      });
  });
}

std::vector<Replication> run(const MCConfig& cfg) {
  validate(cfg);
  std::vector<Replication> reps(static_cast<std::size_t>(cfg.n_samples));
  for_each_replication(cfg, [&](int k) {
    const auto index = static_cast<std::uint64_t>(k);
    const Eigen::MatrixXd x = sample_instance(cfg, index);
    Replication& rep = reps[static_cast<std::size_t>(k)];
    try {
      const MCInstance inst = solve_program(x, cfg.alpha, cfg.eta);
      const double n = cfg.n_assets;
      rep.bounded = true;
      rep.q0 = inst.weights.squaredNorm() / n;
      rep.eps = inst.eps_star;
      rep.es_in = inst.cvar_objective / ((1.0 - cfg.alpha) * cfg.n_obs);
      rep.es_ratio = gaussian_es_ratio(inst.weights, cfg.alpha);
      rep.ratio_error = std::abs(rep.es_ratio - std::sqrt(rep.q0));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Unbounded) throw;
      return;
    }
    try {
      rep.delta = susceptibility_sample(cfg, index, x);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Unbounded) throw;
    }
  });
  return reps;
}

}  // namespace

void validate(const MCConfig& cfg) {
  if (cfg.n_assets < 2) fail(ErrorKind::InvalidArgument, "n_assets must be at least 2");
  if (cfg.n_obs < 2) fail(ErrorKind::InvalidArgument, "n_obs must be at least 2");
  if (cfg.n_samples < 1) fail(ErrorKind::InvalidArgument, "n_samples must be positive");
  if (!(cfg.shift_xi > 0.0) || !std::isfinite(cfg.shift_xi)) {
    fail(ErrorKind::InvalidArgument, "shift_xi must be positive");
  }
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) fail(ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
  if (!(cfg.eta >= 0.0) || !std::isfinite(cfg.eta)) fail(ErrorKind::InvalidArgument, "eta must be >= 0");
  if (cfg.workers < 0) fail(ErrorKind::InvalidArgument, "workers must be >= 0");
}

Eigen::MatrixXd sample_instance(const MCConfig& cfg, std::uint64_t rep_index) {
  validate(cfg);
  auto gen = engine(cfg.seed, rep_index, kReturnStream);
  boost::random::normal_distribution<double> normal;
  Eigen::MatrixXd x(cfg.n_assets, cfg.n_obs);
  for (Eigen::Index t = 0; t < x.cols(); ++t) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, t) = normal(gen);
  }
  return x;
}

MCInstance solve_program(const Eigen::MatrixXd& returns, double alpha, double eta,
                         const ProgramOptions& options) {
  if (returns.rows() < 1 || returns.cols() < 1 || !returns.allFinite()) {
    fail(ErrorKind::InvalidArgument, "returns must be a finite nonempty matrix");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
  if (!(eta >= 0.0) || !std::isfinite(eta)) fail(ErrorKind::InvalidArgument, "eta must be >= 0");
  const auto n = static_cast<double>(returns.rows());
  const auto t = static_cast<double>(returns.cols());
  const Eigen::MatrixXd x = returns / std::sqrt(n);
  const detail::IpmPoint p = detail::solve_ipm(x, alpha, eta, options);

  MCInstance inst;
  inst.weights = p.w.array() + (n - p.w.sum()) / n;
  inst.eps_star = p.eps;
  const Eigen::VectorXd loss = -(x.transpose() * inst.weights).array() - p.eps;
  inst.slacks = p.u.cwiseMax(loss).cwiseMax(0.0);
  inst.cvar_objective = (1.0 - alpha) * t * p.eps + inst.slacks.sum();
  inst.objective = inst.cvar_objective + eta * inst.weights.squaredNorm();
  inst.tail_multipliers = p.y;
  inst.budget_multiplier = p.lambda;
  double dual = p.lambda * n;
  if (eta > 0.0) {
    const Eigen::VectorXd g = x * p.y + Eigen::VectorXd::Constant(x.rows(), p.lambda);
    dual -= g.squaredNorm() / (4.0 * eta);
  }
  inst.duality_gap = inst.objective - dual;
  inst.iterations = p.iterations;
  return inst;
}

double gaussian_es_ratio(const Eigen::VectorXd& weights, double alpha) {
  const boost::math::normal nd;
  const double z = boost::math::quantile(nd, alpha);
  auto es = [&](double sd) { return sd * boost::math::pdf(nd, z) / (1.0 - alpha); };
  const double sigma = std::sqrt(weights.squaredNorm() / static_cast<double>(weights.size()));
  return es(sigma) / es(1.0);
}

SusceptibilitySample susceptibility_sample(const MCConfig& cfg, std::uint64_t rep_index,
                                           const Eigen::MatrixXd& returns) {
  const Eigen::VectorXd s = rademacher(cfg, rep_index);
  const Eigen::VectorXd shift = cfg.shift_xi * s;
  const MCInstance plus = solve_program(returns.colwise() + shift, cfg.alpha, cfg.eta);
  const MCInstance minus = solve_program(returns.colwise() - shift, cfg.alpha, cfg.eta);
  const double n = cfg.n_assets;
  const double response = s.dot(plus.weights - minus.weights) / (2.0 * cfg.shift_xi * n);
  // A shift xi on the raw returns of asset i adds the field (1 - alpha) T xi / sqrt(N) to
  // w_i; the uniform mode is absorbed by the budget, hence N / (N - 1).
  const double field_per_shift = (1.0 - cfg.alpha) * cfg.n_obs / std::sqrt(n);
  SusceptibilitySample out;
  out.value = response / field_per_shift * n / (n - 1.0);
  out.tail_changes = tail_changes(plus, minus);
  out.tail_set_changed =
      out.tail_changes > kMaxTailChangeFraction * (1.0 - cfg.alpha) * cfg.n_obs;
  return out;
}

MCSummary estimate_summary(const MCConfig& cfg) {
  const std::vector<Replication> reps = run(cfg);
  std::vector<double> q0, eps, es_in, ratio, delta;
  MCSummary out;
  out.config = cfg;
  int changed = 0;
  for (const auto& rep : reps) {
    if (!rep.bounded) continue;
    q0.push_back(rep.q0);
    eps.push_back(rep.eps);
    es_in.push_back(rep.es_in);
    ratio.push_back(rep.es_ratio);
    out.max_ratio_identity_error = std::max(out.max_ratio_identity_error, rep.ratio_error);
    if (rep.delta) {
      delta.push_back(rep.delta->value);
      changed += rep.delta->tail_set_changed;
    }
  }
  if (q0.empty()) fail(ErrorKind::AllUnbounded, "every replication was unbounded");
  out.feasible_fraction = static_cast<double>(q0.size()) / cfg.n_samples;
  out.q0_hat = summarize(q0);
  out.eps_hat = summarize(eps);
  out.es_in_hat = summarize(es_in);
  out.es_out_ratio = summarize(ratio);
  out.delta_hat = summarize(delta);
  if (!delta.empty()) {
    out.shift_mismatch_fraction = static_cast<double>(changed) / static_cast<double>(delta.size());
    if (out.shift_mismatch_fraction > 0.5) {
      fail(ErrorKind::ShiftTooLarge, "shifted solves changed tail sets in most replications");
    }
  }
  return out;
}

Estimate estimate_susceptibility(const MCConfig& cfg) { return estimate_summary(cfg).delta_hat; }

}  // namespace replica_es
