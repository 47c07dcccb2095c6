"""Helpers for driving the command-line interface from tests."""

import io
import json
from contextlib import redirect_stderr, redirect_stdout

from gridopt import cli
from gridopt.designio import read_design


def run_cli(argv):
    """Run the command-line entry point, returning ``(exit_code, stdout, stderr)``."""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = cli.main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


class BenchmarkRuns:
    """Lazily executed ``gridopt run --problem N --repeat 3`` results, one per problem."""

    repeat = 3

    def __init__(self, root):
        self.root = root
        self._cache = {}

    def __call__(self, pid):
        if pid not in self._cache:
            out = self.root / f"problem{pid}.csv"
            argv = ["run", "--problem", pid, "--repeat", self.repeat, "--format", "csv", "--out", out]
            if pid == 10:
                argv.append("--reparametrize")
            code, stdout, stderr = run_cli(argv)
            designs, reports = [], []
            for i in range(self.repeat):
                stem = f"problem{pid}.run{i + 1}"
                designs.append(read_design(self.root / f"{stem}.csv"))
                reports.append(json.loads((self.root / f"{stem}.report.json").read_text()))
            self._cache[pid] = dict(code=code, stdout=stdout, stderr=stderr, designs=designs, reports=reports)
        return self._cache[pid]
