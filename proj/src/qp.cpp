#include "mer/qp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "mer/util.hpp"

namespace mer {

namespace {

// projection onto {alpha >= 0, sum(alpha) <= budget}
void project_dual(Eigen::VectorXd& a, double budget) {
  a = a.cwiseMax(0.0);
  const double total = a.sum();
  if (total <= budget) return;
  // Euclidean projection onto the simplex {a >= 0, sum = budget}
  std::vector<double> u(a.data(), a.data() + a.size());
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - budget) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = std::max(a(i) - theta, 0.0);
}

// primal pair recovered from a feasible dual point, plus optimality measures.
// The duality gap equals the total complementary-slackness violation here,
// so gap -> 0 certifies the KKT conditions.
struct Evaluation {
  Eigen::VectorXd w;
  double xi = 0.0;
  double primal = 0.0;
  double gap = 0.0;        // primal - dual >= 0
  double residual = 0.0;   // worst single complementary-slackness product
};

Evaluation evaluate(const Eigen::MatrixXd& G, const Eigen::VectorXd& b, double nu,
                    const Eigen::VectorXd& alpha) {
  Evaluation ev;
  ev.w = (G.transpose() * alpha).cwiseMax(0.0);
  const Eigen::VectorXd slack = G * ev.w - b;  // + xi must be >= 0
  ev.xi = std::max(0.0, -slack.minCoeff());
  // a slack of -1e-15 at scale 1e4 is rounding, not violation; without this
  // floor nu amplifies it into a phantom duality gap
  const double noise = (G.cwiseAbs() * ev.w.cwiseAbs() + b.cwiseAbs()).maxCoeff();
  if (ev.xi <= 32.0 * std::numeric_limits<double>::epsilon() * noise) ev.xi = 0.0;
  ev.primal = 0.5 * ev.w.squaredNorm() + nu * ev.xi;
  const double dual = b.dot(alpha) - 0.5 * ev.w.squaredNorm();
  ev.gap = std::max(0.0, ev.primal - dual);
  double res = (nu - alpha.sum()) * ev.xi;
  for (Eigen::Index r = 0; r < alpha.size(); ++r)
    res = std::max(res, std::abs(alpha(r) * (slack(r) + ev.xi)));
  ev.residual = res;
  return ev;
}

bool accepted(const Evaluation& ev, const QpOptions& opts) {
  return ev.gap <= 1e-13 * std::max(1.0, ev.primal) && ev.residual <= opts.kkt_target;
}

// Solves the reduced KKT system for a guessed active constraint set A and
// positive-weight coordinate set P, then repairs the guess from the result:
// negative multipliers leave A, violated constraints enter, P follows the
// sign pattern of G^T alpha. Both slack cases (budget saturated with xi > 0,
// and xi = 0) are tried each pass and the better dual point wins.
class ActiveSetRefiner {
 public:
  ActiveSetRefiner(const Eigen::MatrixXd& G, const Eigen::VectorXd& b, double nu)
      : G_(G), b_(b), nu_(nu) {}

  // improves alpha in place; returns the evaluation of the final point
  Evaluation run(Eigen::VectorXd& alpha, const QpOptions& opts) {
    Evaluation best = evaluate(G_, b_, nu_, alpha);
    Eigen::VectorXd best_alpha = alpha;

    std::vector<Eigen::Index> active = guess_active(alpha, best);
    for (int pass = 0; pass < 60 && !active.empty(); ++pass) {
      bool improved = false;
      for (const bool saturated : {false, true}) {
        Eigen::VectorXd cand;
        if (!solve_case(active, best_alpha, saturated, cand)) continue;
        const Evaluation ev = evaluate(G_, b_, nu_, cand);
        if (ev.gap < best.gap) {
          best = ev;
          best_alpha = cand;
          improved = true;
        }
      }
      if (accepted(best, opts)) break;
      std::vector<Eigen::Index> next = next_active(best_alpha, best, active);
      if (!improved && next == active) break;
      active = std::move(next);
    }
    alpha = best_alpha;
    return best;
  }

 private:
  // at most this many rows enter the reduced system; the optimum generically
  // needs no more than dim(w) + 1 of them
  std::size_t set_cap() const {
    return static_cast<std::size_t>(2 * G_.cols() + 16);
  }

  std::vector<Eigen::Index> top_scored(std::vector<std::pair<double, Eigen::Index>> scored) const {
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    if (scored.size() > set_cap()) scored.resize(set_cap());
    std::vector<Eigen::Index> idx;
    idx.reserve(scored.size());
    for (const auto& [score, r] : scored) idx.push_back(r);
    std::sort(idx.begin(), idx.end());
    return idx;
  }

  std::vector<Eigen::Index> guess_active(const Eigen::VectorXd& alpha,
                                         const Evaluation& ev) const {
    std::vector<std::pair<double, Eigen::Index>> scored;
    const double top = alpha.maxCoeff();
    if (top > 0.0)
      for (Eigen::Index r = 0; r < alpha.size(); ++r)
        if (alpha(r) > 1e-7 * top) scored.push_back({alpha(r), r});
    if (scored.empty()) {
      // start from the most violated / highest-offset constraint
      Eigen::Index r0 = 0;
      (b_ - G_ * ev.w).maxCoeff(&r0);
      scored.push_back({1.0, r0});
    }
    return top_scored(std::move(scored));
  }

  std::vector<Eigen::Index> next_active(const Eigen::VectorXd& alpha,
                                        const Evaluation& ev,
                                        const std::vector<Eigen::Index>& cur) const {
    const double top = std::max(alpha.maxCoeff(), 0.0);
    const Eigen::VectorXd slack = G_ * ev.w - b_;
    const double tight_tol = 1e-11 * std::max(1.0, b_.cwiseAbs().maxCoeff());
    std::vector<std::pair<double, Eigen::Index>> scored;
    for (Eigen::Index r = 0; r < alpha.size(); ++r) {
      const bool carries_mass = top > 0.0 && alpha(r) > 1e-9 * top;
      const bool violated_or_tight = slack(r) + ev.xi <= tight_tol;
      if (carries_mass || violated_or_tight)
        scored.push_back({std::max(alpha(r), -(slack(r) + ev.xi)), r});
    }
    if (scored.empty()) return cur;
    return top_scored(std::move(scored));
  }

  bool solve_case(const std::vector<Eigen::Index>& active,
                  const Eigen::VectorXd& alpha_hint, bool saturated,
                  Eigen::VectorXd& out) const {
    const auto na = static_cast<Eigen::Index>(active.size());
    // positive set from the hint restricted to the active rows
    Eigen::VectorXd hint = Eigen::VectorXd::Zero(G_.rows());
    for (const Eigen::Index r : active) hint(r) = std::max(alpha_hint(r), 0.0);
    if (hint.sum() == 0.0) for (const Eigen::Index r : active) hint(r) = 1.0;
    const Eigen::VectorXd v = G_.transpose() * hint;
    std::vector<Eigen::Index> pos;
    for (Eigen::Index t = 0; t < v.size(); ++t)
      if (v(t) > 0.0) pos.push_back(t);

    Eigen::MatrixXd Gap(na, static_cast<Eigen::Index>(pos.size()));
    Eigen::VectorXd ba(na);
    for (Eigen::Index i = 0; i < na; ++i) {
      ba(i) = b_(active[static_cast<std::size_t>(i)]);
      for (std::size_t j = 0; j < pos.size(); ++j)
        Gap(i, static_cast<Eigen::Index>(j)) =
            G_(active[static_cast<std::size_t>(i)], pos[j]);
    }
    const Eigen::MatrixXd H = Gap * Gap.transpose();
    const double bscale = std::max(1.0, ba.lpNorm<Eigen::Infinity>());

    Eigen::VectorXd sol;
    if (saturated) {
      // tight constraints share one xi > 0 and the budget binds
      Eigen::MatrixXd M(na + 1, na + 1);
      M.setZero();
      M.topLeftCorner(na, na) = H;
      M.topRightCorner(na, 1).setOnes();
      M.bottomLeftCorner(1, na).setOnes();
      Eigen::VectorXd rhs(na + 1);
      rhs.head(na) = ba;
      rhs(na) = nu_;
      const Eigen::VectorXd cand = M.fullPivLu().solve(rhs);
      if (!cand.allFinite()) return false;
      if ((M * cand - rhs).lpNorm<Eigen::Infinity>() >
          1e-9 * std::max(bscale, nu_))
        return false;
      if (cand(na) < 0.0) return false;  // xi must stay nonnegative
      sol = cand.head(na);
    } else {
      const Eigen::VectorXd cand = H.fullPivLu().solve(ba);
      if (!cand.allFinite()) return false;
      if ((H * cand - ba).lpNorm<Eigen::Infinity>() > 1e-9 * bscale) return false;
      sol = cand;
    }

    out = Eigen::VectorXd::Zero(G_.rows());
    double total = 0.0;
    for (Eigen::Index i = 0; i < na; ++i) {
      if (sol(i) < 0.0) {
        if (sol(i) < -1e-9 * std::max(1.0, sol.cwiseAbs().maxCoeff())) return false;
        continue;  // clamp slightly negative multipliers
      }
      out(active[static_cast<std::size_t>(i)]) = sol(i);
      total += sol(i);
    }
    if (total > nu_ * (1.0 + 1e-12)) return false;
    return true;
  }

  const Eigen::MatrixXd& G_;
  const Eigen::VectorXd& b_;
  double nu_;
};

// Mehrotra predictor-corrector interior point on the primal
//   min 0.5 z' Q z + c' z  s.t.  A z >= bb,   z = (w, xi)
// with A stacking the working constraints, w >= 0 and xi >= 0. The Newton
// systems are (T+1) x (T+1), so iterations are cheap regardless of how many
// cuts have accumulated. Returns the row multipliers, which the refiner
// sharpens into an exact solution.
class InteriorPoint {
 public:
  InteriorPoint(const Eigen::MatrixXd& G, const Eigen::VectorXd& b, double nu)
      : R_(G.rows()), n_(G.cols() + 1), m_(R_ + n_) {
    A_.setZero(m_, n_);
    A_.topLeftCorner(R_, G.cols()) = G;
    A_.topRightCorner(R_, 1).setOnes();
    A_.bottomLeftCorner(n_, n_).setIdentity();
    bb_.setZero(m_);
    bb_.head(R_) = b;
    c_.setZero(n_);
    c_(n_ - 1) = nu;
    q_.setOnes(n_);
    q_(n_ - 1) = 0.0;  // no curvature on xi

    z_.setOnes(n_);
    z_(n_ - 1) = std::max(1.0, b.maxCoeff() - (G * z_.head(G.cols())).minCoeff() + 1.0);
    s_ = A_ * z_ - bb_;
    lambda_.setOnes(m_);
  }

  // one predictor-corrector step; false when the linear algebra degrades
  bool step() {
    const Eigen::VectorXd rd = q_.cwiseProduct(z_) + c_ - A_.transpose() * lambda_;
    const Eigen::VectorXd rp = A_ * z_ - s_ - bb_;
    const double mu = s_.dot(lambda_) / static_cast<double>(m_);

    const Eigen::VectorXd d = lambda_.cwiseQuotient(s_);
    Eigen::MatrixXd K = A_.transpose() * d.asDiagonal() * A_;
    K.diagonal() += q_;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);

    const auto solve_dir = [&](const Eigen::VectorXd& rc, Eigen::VectorXd& dz,
                               Eigen::VectorXd& ds, Eigen::VectorXd& dl) {
      const Eigen::VectorXd t = rp + rc.cwiseQuotient(lambda_);
      dz = lu.solve(-rd - A_.transpose() * d.cwiseProduct(t));
      dl = -d.cwiseProduct(t + A_ * dz);
      ds = (-rc - s_.cwiseProduct(dl)).cwiseQuotient(lambda_);
      return dz.allFinite() && ds.allFinite() && dl.allFinite();
    };

    Eigen::VectorXd dz, ds, dl;
    if (!solve_dir(lambda_.cwiseProduct(s_), dz, ds, dl)) return false;
    const double ap_aff = max_step(s_, ds);
    const double ad_aff = max_step(lambda_, dl);
    const double mu_aff = (s_ + ap_aff * ds).dot(lambda_ + ad_aff * dl) /
                          static_cast<double>(m_);
    const double ratio = mu > 0.0 ? mu_aff / mu : 0.0;
    const double sigma = std::min(1.0, ratio * ratio * ratio);

    const Eigen::VectorXd rc = lambda_.cwiseProduct(s_) + dl.cwiseProduct(ds) -
                               Eigen::VectorXd::Constant(m_, sigma * mu);
    if (!solve_dir(rc, dz, ds, dl)) return false;

    const double eta = 1.0 - std::min(0.1, mu);
    const double ap = std::min(1.0, eta * max_step(s_, ds));
    const double ad = std::min(1.0, eta * max_step(lambda_, dl));
    z_ += ap * dz;
    s_ += ap * ds;
    lambda_ += ad * dl;
    return s_.minCoeff() > 0.0 && lambda_.minCoeff() > 0.0;
  }

  double mu() const { return s_.dot(lambda_) / static_cast<double>(m_); }
  Eigen::VectorXd row_multipliers() const { return lambda_.head(R_); }

 private:
  static double max_step(const Eigen::VectorXd& x, const Eigen::VectorXd& dx) {
    double a = 1.0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (dx(i) < 0.0) a = std::min(a, -x(i) / dx(i));
    return a;
  }

  Eigen::Index R_, n_, m_;
  Eigen::MatrixXd A_;
  Eigen::VectorXd bb_, c_, q_;
  Eigen::VectorXd z_, s_, lambda_;
};

// Textbook primal active set on x = (w, xi) with constraints
//   row r:  G_r w + xi >= b_r,   bounds:  w_t >= 0,  xi >= 0.
// Row gradients are normalized to unit length so multiplier signs and
// tolerances are scale-free. Each EQP touches only the current working set,
// so a huge spread between metric scales (which makes G G' numerically
// singular and stalls first-order methods) never enters the linear algebra.
class PrimalActiveSet {
 public:
  PrimalActiveSet(const Eigen::MatrixXd& G, const Eigen::VectorXd& b, double nu)
      : R_(G.rows()), n_(G.cols() + 1), nu_(nu) {
    const Eigen::Index m = R_ + n_;
    a_.setZero(m, n_);
    beta_.setZero(m);
    scale_.setOnes(m);
    for (Eigen::Index r = 0; r < R_; ++r) {
      Eigen::VectorXd row(n_);
      row.head(n_ - 1) = G.row(r);
      row(n_ - 1) = 1.0;
      scale_(r) = row.norm();
      a_.row(r) = row / scale_(r);
      beta_(r) = b(r) / scale_(r);
    }
    for (Eigen::Index t = 0; t < n_; ++t) a_(R_ + t, t) = 1.0;  // bounds
  }

  // exact minimizer via working-set iterations; returns the row multipliers
  // and the primal iterate (w, xi) they certify
  bool run(Eigen::VectorXd& alpha, Eigen::VectorXd& point, std::size_t& used) {
    const Eigen::Index m = R_ + n_;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
    Eigen::Index r0 = 0;
    double braw = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < R_; ++r)
      if (beta_(r) * scale_(r) > braw) {
        braw = beta_(r) * scale_(r);
        r0 = r;
      }
    x(n_ - 1) = braw;  // xi = max_r b_r > 0 here, feasible for every row
    std::vector<Eigen::Index> work;
    for (Eigen::Index t = 0; t < n_ - 1; ++t) work.push_back(R_ + t);
    work.push_back(r0);

    std::vector<char> in_set(static_cast<std::size_t>(m), 0);
    for (const Eigen::Index i : work) in_set[static_cast<std::size_t>(i)] = 1;

    std::size_t stalls = 0;
    const std::size_t cap = 50 * static_cast<std::size_t>(m) + 200;
    for (used = 0; used < cap; ++used) {
      // direction: either the EQP step or, when nothing in the working set
      // touches xi, the free descent along -xi (always blocked by xi >= 0)
      bool touches_xi = false;
      for (const Eigen::Index i : work)
        if (a_(i, n_ - 1) != 0.0) touches_xi = true;

      Eigen::VectorXd p, xhat, lambda;
      if (!touches_xi) {
        p = Eigen::VectorXd::Zero(n_);
        p(n_ - 1) = -1.0;
      } else {
        if (!eqp(work, xhat, lambda)) return false;
        p = xhat - x;
      }

      if (touches_xi && p.lpNorm<Eigen::Infinity>() <=
                            1e-10 * (1.0 + x.lpNorm<Eigen::Infinity>())) {
        // stationary on the working set: optimal unless a multiplier is negative
        Eigen::Index worst = -1;
        double most = -1e-9 * std::max(1.0, lambda.lpNorm<Eigen::Infinity>());
        for (Eigen::Index j = 0; j < lambda.size(); ++j)
          if (lambda(j) < most) {
            most = lambda(j);
            worst = j;
          }
        if (worst < 0) {
          alpha.setZero(R_);
          for (std::size_t j = 0; j < work.size(); ++j)
            if (work[j] < R_)
              alpha(work[j]) = std::max(0.0, lambda(static_cast<Eigen::Index>(j)) /
                                                 scale_(work[j]));
          point = x;
          return true;
        }
        in_set[static_cast<std::size_t>(work[static_cast<std::size_t>(worst)])] = 0;
        work.erase(work.begin() + worst);
        continue;
      }

      // longest feasible step along p, capped at the EQP optimum
      double step = touches_xi ? 1.0 : std::numeric_limits<double>::infinity();
      Eigen::Index blocker = -1;
      const double dir_tol = 1e-13 * std::max(1.0, p.lpNorm<Eigen::Infinity>());
      for (Eigen::Index i = 0; i < m; ++i) {
        if (in_set[static_cast<std::size_t>(i)]) continue;
        const double d = a_.row(i).dot(p);
        if (d >= -dir_tol) continue;
        const double t = std::max(0.0, (a_.row(i).dot(x) - beta_(i)) / -d);
        if (t < step) {
          step = t;
          blocker = i;
        }
      }
      if (!std::isfinite(step)) return false;  // cannot happen: xi >= 0 blocks
      // degenerate pivots are fine in short bursts; an endless run of them
      // means the geometry is beyond float64 and the caller should fall back
      stalls = step <= 1e-14 ? stalls + 1 : 0;
      if (stalls > 2 * static_cast<std::size_t>(m) + 8) return false;
      x += step * p;
      if (blocker >= 0) {  // only set when it capped the step
        work.push_back(blocker);
        in_set[static_cast<std::size_t>(blocker)] = 1;
      }
    }
    return false;
  }

 private:
  // EQP on the working set by the null-space method: one QR of the active
  // rows keeps errors at eps * cond(A), where a saddle-point solve mixes the
  // multiplier scale into the primal block and squares the damage
  bool eqp(const std::vector<Eigen::Index>& work, Eigen::VectorXd& xhat,
           Eigen::VectorXd& lambda) const {
    std::vector<Eigen::Index> rows, free_idx;
    std::vector<char> bnd(static_cast<std::size_t>(n_), 0);
    for (const Eigen::Index i : work) {
      if (i < R_)
        rows.push_back(i);
      else
        bnd[static_cast<std::size_t>(i - R_)] = 1;
    }
    for (Eigen::Index t = 0; t < n_; ++t)
      if (!bnd[static_cast<std::size_t>(t)]) free_idx.push_back(t);
    const auto k = static_cast<Eigen::Index>(rows.size());
    const auto f = static_cast<Eigen::Index>(free_idx.size());

    Eigen::VectorXd cf(f), qf(f);
    for (Eigen::Index j = 0; j < f; ++j) {
      const bool is_xi = free_idx[static_cast<std::size_t>(j)] == n_ - 1;
      cf(j) = is_xi ? nu_ : 0.0;
      qf(j) = is_xi ? 0.0 : 1.0;
    }

    Eigen::VectorXd xf, lrows;
    if (k == 0) {
      xf = Eigen::VectorXd::Zero(f);  // only bounds active: w_free = 0
      lrows.resize(0);
    } else {
      Eigen::MatrixXd af(k, f);
      Eigen::VectorXd ba(k);
      for (Eigen::Index i = 0; i < k; ++i) {
        ba(i) = beta_(rows[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < f; ++j)
          af(i, j) = a_(rows[static_cast<std::size_t>(i)],
                        free_idx[static_cast<std::size_t>(j)]);
      }
      const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(af.transpose());
      if (qr.rank() < k) return false;  // dependent working set
      const Eigen::MatrixXd qfull = qr.householderQ();
      const Eigen::MatrixXd rk = qr.matrixR().topLeftCorner(k, k);
      const Eigen::VectorXd pb = qr.colsPermutation().transpose() * ba;
      const Eigen::VectorXd u1 =
          rk.transpose().triangularView<Eigen::Lower>().solve(pb);
      xf = qfull.leftCols(k) * u1;  // min-norm point on the active rows
      if (f > k) {
        const Eigen::MatrixXd z = qfull.rightCols(f - k);
        const Eigen::MatrixXd hy = z.transpose() * qf.asDiagonal() * z;
        const Eigen::VectorXd ry = -z.transpose() * (qf.cwiseProduct(xf) + cf);
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(hy);
        if (ldlt.info() != Eigen::Success) return false;
        const Eigen::VectorXd y = ldlt.solve(ry);
        if (!y.allFinite()) return false;
        xf += z * y;
      }
      const Eigen::VectorXd gf = qf.cwiseProduct(xf) + cf;
      lrows = qr.colsPermutation() *
              rk.triangularView<Eigen::Upper>()
                  .solve((qfull.transpose() * gf).head(k));
      if (!lrows.allFinite()) return false;
    }
    if (!xf.allFinite()) return false;

    xhat = Eigen::VectorXd::Zero(n_);
    for (Eigen::Index j = 0; j < f; ++j)
      xhat(free_idx[static_cast<std::size_t>(j)]) = xf(j);

    // multipliers in working-set order; bounds close the stationarity gap
    lambda.resize(static_cast<Eigen::Index>(work.size()));
    Eigen::Index ri = 0;
    for (std::size_t j = 0; j < work.size(); ++j) {
      const Eigen::Index i = work[j];
      if (i < R_) {
        lambda(static_cast<Eigen::Index>(j)) = lrows(ri++);
      } else {
        const Eigen::Index t = i - R_;
        double g = t == n_ - 1 ? nu_ : 0.0;  // (Q xhat + c)_t at xhat_t = 0
        for (std::size_t q = 0; q < rows.size(); ++q)
          g -= lrows(static_cast<Eigen::Index>(q)) * a_(rows[q], t);
        lambda(static_cast<Eigen::Index>(j)) = g;
      }
    }
    return true;
  }

  Eigen::Index R_, n_;
  double nu_;
  Eigen::MatrixXd a_;
  Eigen::VectorXd beta_, scale_;
};

double lipschitz_estimate(const Eigen::MatrixXd& G) {
  const Eigen::MatrixXd M = G * G.transpose();
  Eigen::VectorXd v = Eigen::VectorXd::Ones(M.rows());
  v.normalize();
  double lambda = 0.0;
  for (int i = 0; i < 40; ++i) {
    Eigen::VectorXd mv = M * v;
    const double n = mv.norm();
    if (n == 0.0) return 1.0;
    lambda = v.dot(mv);
    v = mv / n;
  }
  lambda = std::max(lambda, v.dot(M * v));
  return std::max(lambda * 1.05, 1e-12);
}

}  // namespace

QpSolution solve_working_set_qp(const std::vector<WorkingConstraint>& constraints,
                                double nu, const QpOptions& opts) {
  if (!(nu > 0.0)) throw Error("solve_working_set_qp: nu must be positive");
  if (constraints.empty()) return {};  // unconstrained optimum: w = 0, xi = 0
  const auto R = static_cast<Eigen::Index>(constraints.size());
  const auto T = static_cast<Eigen::Index>(constraints.front().direction.size());
  if (T == 0) throw Error("solve_working_set_qp: zero-dimensional constraints");

  Eigen::MatrixXd G(R, T);
  Eigen::VectorXd b(R);
  for (Eigen::Index r = 0; r < R; ++r) {
    const auto& c = constraints[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(c.direction.size()) != T)
      throw Error("solve_working_set_qp: inconsistent constraint dimensions");
    for (Eigen::Index t = 0; t < T; ++t) {
      const double v = c.direction[static_cast<std::size_t>(t)];
      if (!std::isfinite(v))
        throw Error("solve_working_set_qp: non-finite constraint direction");
      G(r, t) = v;
    }
    if (!std::isfinite(c.offset))
      throw Error("solve_working_set_qp: non-finite constraint offset");
    b(r) = c.offset;
  }

  const auto finish = [&](const Eigen::VectorXd& alpha, const Evaluation& ev,
                          std::size_t iters) {
    QpSolution s;
    s.weights.assign(ev.w.data(), ev.w.data() + ev.w.size());
    s.xi = ev.xi;
    s.alpha.assign(alpha.data(), alpha.data() + alpha.size());
    s.iterations = iters;
    s.kkt_residual = ev.residual;
    return s;
  };

  // all offsets nonpositive: w = 0, xi = 0 is already optimal
  if (b.maxCoeff() <= 0.0) {
    const Eigen::VectorXd alpha = Eigen::VectorXd::Zero(R);
    return finish(alpha, evaluate(G, b, nu, alpha), 0);
  }
  // no usable directions: spend the whole budget on the largest offset
  if (G.cwiseAbs().maxCoeff() == 0.0) {
    Eigen::Index top = 0;
    b.maxCoeff(&top);
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(R);
    alpha(top) = nu;
    return finish(alpha, evaluate(G, b, nu, alpha), 0);
  }

  ActiveSetRefiner refiner(G, b, nu);
  Evaluation best;
  best.w = Eigen::VectorXd::Zero(T);
  best.gap = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_alpha = Eigen::VectorXd::Zero(R);
  std::size_t iters = 0;

  const auto consider = [&](Eigen::VectorXd alpha) {
    const Evaluation ev = refiner.run(alpha, opts);
    if (ev.gap < best.gap) {
      best = ev;
      best_alpha = alpha;
    }
    return accepted(best, opts);
  };

  // main path: interior point identifies the active geometry within a few
  // dozen steps and the refiner converts it into an exact solution
  InteriorPoint ipm(G, b, nu);
  const double mu0 = ipm.mu();
  for (int it = 1; it <= 120; ++it) {
    if (!ipm.step()) break;
    ++iters;
    if (ipm.mu() <= 1e-3 * mu0 && consider(ipm.row_multipliers()))
      return finish(best_alpha, best, iters);
  }

  // exact path: primal active set survives the scale spreads that leave
  // G G' numerically singular and stall the first-order methods
  {
    PrimalActiveSet aset(G, b, nu);
    Eigen::VectorXd alpha, point;
    std::size_t used = 0;
    const bool exact = aset.run(alpha, point, used);
    iters += used;
    if (exact) {
      if (consider(alpha)) return finish(best_alpha, best, iters);
      // the working-set solve carries the primal directly; rebuilding w from
      // alpha rounds through cancellations at wide column scales, so judge
      // complementarity against the solver's own iterate and accept on a
      // certified relative gap
      Evaluation ev;
      ev.w = point.head(T).cwiseMax(0.0);
      ev.xi = std::max(0.0, point(T));
      const Eigen::VectorXd slack = G * ev.w - b;
      ev.primal = 0.5 * ev.w.squaredNorm() + nu * ev.xi;
      const double dual =
          b.dot(alpha) - 0.5 * (G.transpose() * alpha).cwiseMax(0.0).squaredNorm();
      ev.gap = std::max(0.0, ev.primal - dual);
      double res = (nu - alpha.sum()) * ev.xi;
      for (Eigen::Index r = 0; r < R; ++r)
        res = std::max(res, std::abs(alpha(r) * (slack(r) + ev.xi)));
      ev.residual = res;
      const double feas = -(slack.array() + ev.xi).minCoeff();
      if (feas <= 1e-7 * std::max(1.0, b.cwiseAbs().maxCoeff()) &&
          ev.gap <= 1e-5 * std::max(1.0, ev.primal))
        return finish(alpha, ev, iters);
    }
  }

  // fallback: FISTA with adaptive restart on the dual, globally convergent
  // (if slowly) regardless of conditioning
  const auto grad = [&](const Eigen::VectorXd& a) {
    return Eigen::VectorXd(G * (G.transpose() * a).cwiseMax(0.0) - b);
  };
  const auto fval = [&](const Eigen::VectorXd& a) {
    return 0.5 * (G.transpose() * a).cwiseMax(0.0).squaredNorm() - b.dot(a);
  };
  const double step = 1.0 / lipschitz_estimate(G);

  Eigen::VectorXd x = best_alpha;
  Eigen::VectorXd y = x;
  double tk = 1.0;
  double fx = fval(x);

  for (std::size_t it = 1; it <= opts.max_iterations; ++it) {
    Eigen::VectorXd xn = y - step * grad(y);
    project_dual(xn, nu);
    const double fxn = fval(xn);
    if (fxn > fx) {
      tk = 1.0;
      y = x;
      xn = y - step * grad(y);
      project_dual(xn, nu);
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    y = xn + ((tk - 1.0) / tn) * (xn - x);
    x = xn;
    fx = fval(x);
    tk = tn;
    ++iters;

    if (it % opts.polish_interval == 0 || it == opts.max_iterations) {
      if (consider(x)) return finish(best_alpha, best, iters);
    }
  }

  if (best.residual <= opts.kkt_required &&
      best.gap <= 1e-9 * std::max(1.0, best.primal))
    return finish(best_alpha, best, iters);
  throw Error("solve_working_set_qp: no convergence, KKT residual " +
              format_double(best.residual) + ", duality gap " +
              format_double(best.gap) + " after " +
              std::to_string(iters) + " iterations");
}

}  // namespace mer
