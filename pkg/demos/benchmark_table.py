"""Run every built-in benchmark once and compare with the reference values.

Takes about a minute. Pass problem ids on the command line to run a subset.
"""

import sys
import time

from gridopt import GexConfig, benchmark, run_gex

ids = [int(a) for a in sys.argv[1:]] or range(1, 11)
print(f"{'id':>3} {'k':>2} {'m':>2} {'phi':>11} {'reference':>11} {'competitor':>11} {'support':>7} {'time':>6}")
for pid in ids:
    p = benchmark(pid)
    t0 = time.perf_counter()
    design, report = run_gex(p.grid, p.model, GexConfig(seed=0, reparametrize=p.reparametrize))
    wall = time.perf_counter() - t0
    print(f"{pid:>3} {p.k:>2} {p.m:>2} {report.phi:>11.6g} {p.phi_reference:>11.6g} "
          f"{p.phi_competitor:>11.6g} {design.size:>7} {wall:>5.1f}s")
