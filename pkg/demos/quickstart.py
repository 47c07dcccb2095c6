"""Quadratic regression in two factors on a 201 x 201 grid.

The D-optimal design is the 3 x 3 factorial with unequal weights on
corners, edge midpoints and the centre.
"""

import numpy as np

from gridopt import FactorGrid, GexConfig, LinearModel, run_gex
from gridopt.designio import design_to_table


def h(X):
    x1, x2 = X[:, 0], X[:, 1]
    return np.column_stack([np.ones(len(X)), x1, x2, x1 * x2, x1**2, x2**2])


grid = FactorGrid.from_ranges([(-1, 1, 0.01), (-1, 1, 0.01)])
model = LinearModel(h, m=6, k=2, name="full quadratic")
design, report = run_gex(grid, model, GexConfig(seed=1))

print(design_to_table(design))
print(f"phi = {report.phi:.6g} after {len(report.rounds)} rounds, "
      f"certificate bound {report.certificate_bound:.7f}")
