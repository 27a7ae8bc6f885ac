#!/usr/bin/env python3
"""
Performance benchmarking script for the conditional covariance selection tools.

Times the smoothing step and both solvers on synthetic instances of growing size.
"""

import json
import os
import sys
import time

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ccs.local_moments import local_covariance_field, uniform_grid
from ccs.solvers import SolverConfig, fit_admm, fit_field, fit_prisma, simulation_lambda
from ccs.synthetic import make_scenario, sample_dataset
from utils.performance_optimizer import performance_monitor

SIZES = [(200, 10), (500, 20), (500, 50)]
GRID_SIZE = 25


def _instance(n, p, seed=0):
    scenario = make_scenario("chain", p, "sin", seed)
    sample, _ = sample_dataset(scenario, n, seed)
    return sample


def benchmark_smoothing():
    """Covariance field construction for each centering mode."""
    print("\n=== Smoothing Benchmark ===")
    results = {}
    grid = uniform_grid(GRID_SIZE)
    for n, p in SIZES:
        sample = _instance(n, p)
        h = n ** (-1.0 / 5.0)
        for centering in ("per_observation", "at_target", "none"):
            start_time = time.perf_counter()
            local_covariance_field(sample, grid, h, "epanechnikov", centering)
            elapsed = time.perf_counter() - start_time
            results[f"n{n}_p{p}_{centering}"] = elapsed
            print(f"n={n}, p={p}, {centering}: {elapsed:.3f}s")
    return results


def benchmark_solvers():
    """PRISMA against ADMM on the same covariance field."""
    print("\n=== Solver Benchmark ===")
    results = {}
    grid = uniform_grid(GRID_SIZE)
    for n, p in SIZES:
        sample = _instance(n, p)
        h = n ** (-1.0 / 5.0)
        cov = local_covariance_field(sample, grid, h, "epanechnikov", "per_observation")
        lam = simulation_lambda(n, p)
        _, prisma = fit_prisma(cov, SolverConfig(lam=lam, restart=True))
        _, admm = fit_admm(cov, lam, tol=1e-6)
        gap = abs(prisma.final_objective - admm.final_objective) / abs(admm.final_objective)
        print(
            f"n={n}, p={p}: PRISMA {prisma.iterations} it {prisma.wall_time:.3f}s, "
            f"ADMM {admm.iterations} it {admm.wall_time:.3f}s, gap {gap:.2e}"
        )
        results[f"n{n}_p{p}"] = {
            "prisma_time": prisma.wall_time,
            "prisma_iterations": prisma.iterations,
            "admm_time": admm.wall_time,
            "admm_iterations": admm.iterations,
            "relative_gap": gap,
        }
    return results


def benchmark_screening():
    """Joint solve against the per-component screened solve at a large lambda."""
    print("\n=== Screening Benchmark ===")
    n, p = SIZES[-1]
    sample = _instance(n, p)
    cov = local_covariance_field(
        sample, uniform_grid(GRID_SIZE), n ** (-1.0 / 5.0), "epanechnikov", "per_observation"
    )
    lam = 3.0 * simulation_lambda(n, p)

    start_time = time.perf_counter()
    _, joint = fit_field(SolverConfig(lam=lam, restart=True), cov)
    joint_time = time.perf_counter() - start_time

    start_time = time.perf_counter()
    _, screened = fit_field(SolverConfig(lam=lam, restart=True, screen=True), cov)
    screened_time = time.perf_counter() - start_time

    print(f"Joint solve: {joint_time:.3f}s, screened solve: {screened_time:.3f}s")
    return {
        "joint_time": joint_time,
        "screened_time": screened_time,
        "joint_objective": joint.final_objective,
        "screened_objective": screened.final_objective,
    }


def run_comprehensive_benchmark():
    """Run comprehensive performance benchmarks."""
    print("🚀 Conditional Covariance Selection Benchmark")
    print("=" * 50)

    initial_memory = performance_monitor.take_memory_snapshot("start").get("rss_mb", 0.0)
    print(f"Initial memory usage: {initial_memory:.2f}MB")

    smoothing_results = benchmark_smoothing()
    solver_results = benchmark_solvers()
    screening_results = benchmark_screening()

    final_memory = performance_monitor.take_memory_snapshot("end").get("rss_mb", 0.0)
    memory_usage = final_memory - initial_memory

    print("\n=== Summary ===")
    for operation, stats in sorted(performance_monitor.get_performance_stats().items()):
        print(f"{operation}: {stats['count']} calls, avg {stats['avg_time']:.3f}s")
    print(f"Memory usage during benchmark: {memory_usage:.2f}MB")

    return {
        "smoothing": smoothing_results,
        "solvers": solver_results,
        "screening": screening_results,
        "memory_usage": {
            "initial": initial_memory,
            "final": final_memory,
            "used": memory_usage,
        },
    }


if __name__ == "__main__":
    try:
        results = run_comprehensive_benchmark()

        with open("benchmark_results.json", "w") as f:
            json.dump(results, f, indent=2)

        print("\n✅ Benchmark complete! Results saved to benchmark_results.json")

    except KeyboardInterrupt:
        print("\n⏹️ Benchmark interrupted by user")
