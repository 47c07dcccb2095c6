"""Load a model file, compute a locally optimal design and check it.

Equivalent to

    gridopt run --model demos/logistic.model --out logistic.csv
    gridopt verify logistic.csv --model demos/logistic.model
"""

from pathlib import Path

from gridopt import GexConfig, dsl, efficiency_lower_bound, run_gex
from gridopt.designio import design_to_table
from gridopt.gex import probe_variance

mf = dsl.load(Path(__file__).with_name("logistic.model"))
grid, model = mf.grid(), mf.model("logistic demo")
print(f"{grid.size:,} grid points, m = {model.m}")

design, report = run_gex(grid, model, GexConfig(seed=3))
print(design_to_table(design))

max_d, where = probe_variance(grid, model, design, n_probes=500, seed=4)
print(f"phi = {report.phi:.6g}; largest variance found {max_d:.6f} at {where}")
print(f"efficiency bound {efficiency_lower_bound(design, model, max_d):.7f}")
