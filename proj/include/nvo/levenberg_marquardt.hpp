#pragma once

// Damped Gauss-Newton driver shared by pose tracking and bundle adjustment.
//
// A problem type plugs in through the LeastSquaresProblem concept:
//
//   double linearize();          robust cost at the current state; caches the
//                                IRLS-weighted normal equations
//   double solve(double mu);     solves the cached system with damping mu,
//                                stores the step, returns its norm (NaN on a
//                                failed factorization)
//   void apply_step();           x <- x (+) step, remembering x
//   void revert_step();          restores the remembered x
//   double cost() const;         robust cost at the current state
//
// Accepted steps strictly decrease the cost.

#include <algorithm>
#include <cmath>
#include <concepts>

namespace nvo {

template <typename P>
concept LeastSquaresProblem = requires(P p, const P cp, double mu) {
    { p.linearize() } -> std::convertible_to<double>;
    { p.solve(mu) } -> std::convertible_to<double>;
    { p.apply_step() };
    { p.revert_step() };
    { cp.cost() } -> std::convertible_to<double>;
};

struct LmOptions {
    int max_iterations = 20;
    double initial_damping = 1e-4;
    double damping_increase = 10.0;
    double damping_decrease = 10.0;
    double max_damping = 1e12;
    double step_tolerance = 1e-8;
    double relative_cost_tolerance = 1e-10;
};

enum class LmStatus {
    StepTolerance,
    CostTolerance,
    MaxIterations,
    DampingCeiling,  // no progress possible; diverged if nothing was accepted
    ZeroCost,
};

struct LmSummary {
    LmStatus status = LmStatus::MaxIterations;
    int iterations = 0;
    int accepted_steps = 0;
    double initial_cost = 0.0;
    double final_cost = 0.0;
    double final_damping = 0.0;

    [[nodiscard]] bool diverged() const { return status == LmStatus::DampingCeiling && accepted_steps == 0; }
};

template <LeastSquaresProblem Problem>
LmSummary levenberg_marquardt(Problem& problem, const LmOptions& opt) {
    LmSummary summary;
    double mu = opt.initial_damping;
    double cost = problem.linearize();
    summary.initial_cost = cost;

    while (summary.iterations < opt.max_iterations) {
        ++summary.iterations;
        if (cost == 0.0) {
            summary.status = LmStatus::ZeroCost;
            break;
        }
        const double step_norm = problem.solve(mu);
        if (std::isfinite(step_norm) && step_norm < opt.step_tolerance) {
            summary.status = LmStatus::StepTolerance;
            break;
        }
        double new_cost = INFINITY;
        if (std::isfinite(step_norm)) {
            problem.apply_step();
            new_cost = problem.cost();
        }
        if (new_cost < cost) {
            ++summary.accepted_steps;
            mu = std::max(mu / opt.damping_decrease, 1e-15);
            const double decrease = (cost - new_cost) / cost;
            cost = problem.linearize();
            if (decrease < opt.relative_cost_tolerance) {
                summary.status = LmStatus::CostTolerance;
                break;
            }
            continue;
        }
        if (std::isfinite(step_norm)) problem.revert_step();
        mu *= opt.damping_increase;
        if (mu > opt.max_damping) {
            summary.status = LmStatus::DampingCeiling;
            break;
        }
    }
    summary.final_cost = cost;
    summary.final_damping = mu;
    return summary;
}

}  // namespace nvo
