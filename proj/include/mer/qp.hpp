#pragma once

#include <cstddef>
#include <vector>

namespace mer {

// one linearized constraint  w . direction >= offset - xi
struct WorkingConstraint {
  std::vector<double> direction;
  double offset = 0.0;
};

struct QpOptions {
  std::size_t max_iterations = 100000;
  double kkt_target = 1e-10;    // stop once the residual drops below this
  double kkt_required = 1e-8;   // hard failure if never reached
  std::size_t polish_interval = 50;
};

struct QpSolution {
  std::vector<double> weights;  // w >= 0
  double xi = 0.0;
  std::vector<double> alpha;    // dual multiplier per working constraint
  std::size_t iterations = 0;
  double kkt_residual = 0.0;
};

// minimizes 0.5 ||w||^2 + nu * xi over w >= 0, xi >= 0 subject to the
// working constraints. Solved in the dual over {alpha >= 0, sum alpha <= nu}:
// an interior-point pass locates the active geometry and an exact active-set
// refinement polishes it to KKT precision, with the primal recovered as
// w = [G^T alpha]_+. When the columns of G mix scales badly enough that the
// recovered w loses digits to cancellation, a primal active-set pass (null
// space EQP steps on the row-normalized constraints) solves the problem
// directly and is accepted on a certified duality gap. Accelerated projected
// gradient is the final fallback.
QpSolution solve_working_set_qp(const std::vector<WorkingConstraint>& constraints,
                                double nu, const QpOptions& opts = {});

}  // namespace mer
