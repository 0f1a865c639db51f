import csv
import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from core.exact_risk import Problem
from core.file_conventions import ARTIFACTS
from core.network_model import NetworkShape, ParamVector
from core.piecewise_poly import AffineConstraint, Piece, PiecewisePoly, Poly


def unit_1d(H=1, target=None, density=None, evaluator="exact-1d"):
    """[0, 1], f = target (default 0), density (default 1)."""
    shape = NetworkShape(1, H, Fraction(0), Fraction(1))
    f = PiecewisePoly.from_poly(target if target is not None else Poly.zero(1))
    p = density if density is not None else PiecewisePoly.constant(1, 1)
    return Problem(shape, f, p, evaluator)


def theta_1d(problem, w, b, v, c):
    return ParamVector.from_parts(problem.shape, w, b, v, c)


def const_pp(dim, value):
    return {"dim": dim, "pieces": [{"constraints": [], "poly": [{"exps": [0] * dim, "coef": str(value)}]}]}


def minimal_config(**overrides):
    cfg = {
        "problem": {"d": 1, "H": 1, "domain": ["0", "1"],
                    "target": {"dim": 1, "pieces": []},
                    "density": const_pp(1, 1)},
        "init": {"theta": ["1", "0", "1", "0"]},
    }
    for key, value in overrides.items():
        cfg[key] = value
    return cfg


@pytest.fixture
def zero_target():
    return unit_1d()


@pytest.fixture
def identity_target():
    return unit_1d(target=Poly.variable(1, 0))


@pytest.fixture
def half_step_density():
    """1 everywhere plus 1 on x >= 1/2."""
    return PiecewisePoly(1, (Piece((), Poly.constant(1, 1)),
                             Piece((AffineConstraint((Fraction(1),), Fraction(-1, 2)),), Poly.constant(1, 1))))


@pytest.fixture
def write_config(tmp_path):
    def write(cfg, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(cfg, indent=2), encoding="utf-8")
        return path
    return write


# ---------- artifact readers ----------

def load_trajectory_csv(path):
    """Columns of a trajectory CSV as arrays: t (N), theta (N x D), loss, gnorm, ndeg."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        header, *body = list(csv.reader(f))
    n_theta = len(header) - 4
    data = np.array([[float(x) for x in r] for r in body]) if body else np.zeros((0, len(header)))
    return {"header": header, "t": data[:, 0], "theta": data[:, 1:1 + n_theta], "loss": data[:, 1 + n_theta],
            "gnorm": data[:, 2 + n_theta], "ndeg": data[:, 3 + n_theta].astype(int)}


def load_run_model(run_dir):
    """Every artifact present in a run directory, keyed like ARTIFACTS."""
    model = {}
    for key, name in ARTIFACTS.items():
        path = Path(run_dir) / name
        if not path.exists():
            continue
        model[key] = load_trajectory_csv(path) if key == "trajectory" else json.loads(path.read_text(encoding="utf-8"))
    return model
