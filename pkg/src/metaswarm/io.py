"""CSV and JSON writers for run artifacts.

All tabular output is CSV; reports are JSON.  Files are written with
repr-exact floats so identical (config, seed) runs are byte-identical;
the one timestamp lives on its own line of the JSON report.
"""

from __future__ import annotations

import json
import os
from datetime import datetime, timezone

import numpy as np


def _fmt(x) -> str:
    return repr(float(x))


def _write_rows(path, header, columns):
    columns = [np.asarray(c) for c in columns]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_trajectory_csv(path, traj) -> str:
    _write_rows(path, ["t", "M1", "M2", "d"], [traj.t, traj.M1, traj.M2, traj.d])
    return str(path)


def write_profile_csv(path, field) -> str:
    _write_rows(path, ["x", "rho"], [field.grid.centers(), field.values])
    return str(path)


def write_histogram_csv(path, hist) -> str:
    _write_rows(path, ["bin_left", "bin_right", "density"],
                [hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts])
    return str(path)


def write_diagnostic_csv(path, d, lhs, rhs) -> str:
    _write_rows(path, ["d", "lhs", "rhs"], [d, lhs, rhs])
    return str(path)


def write_particles_csv(path, times, positions) -> str:
    """Full dump: header t,x_0,...,x_{n-1}."""
    positions = np.asarray(positions)
    header = ["t"] + [f"x_{i}" for i in range(positions.shape[1])]
    cols = [np.asarray(times)] + [positions[:, i] for i in range(positions.shape[1])]
    _write_rows(path, header, cols)
    return str(path)


def write_report_json(path, report) -> str:
    payload = {
        "name": report.name,
        "passed": report.passed,
        "metrics": {k: float(v) for k, v in report.metrics.items()},
        "artifacts": list(report.artifacts),
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return str(path)


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)
