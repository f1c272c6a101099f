"""Regenerate the shipped example configs and the acceptance configs.

Run from the repository root::

    python scripts/generate_configs.py
"""

import json
import math
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src" / "decaylab" / "data"

RUN = {"t_end": 200.0, "dt": 5e-3, "sample_every": 20, "seed": 0,
       "initial": {"kind": "modes", "n_modes": 8}}
ENVELOPE = {"T": 5.0, "c": "calibrate", "calibration": "recursion"}

LOCI = {
    "interior": {"model": "wave_interior", "n": 200, "length": math.pi, "bc": "dirichlet_both",
                 "sigma_mask": 1.0},
    "boundary": {"model": "wave_boundary", "n": 200, "length": math.pi,
                 "bc": "dirichlet_left_damped_right", "a": 1.0, "k": 1.0},
    "pointwise": {"model": "string_pointwise", "n": 200, "length": math.pi,
                  "bc": "dirichlet_left_neumann_right", "xi": math.pi / 2},
}
REGIMES = {
    "decay": {"kind": "power_decay", "sigma": 0.5},
    "growth": {"kind": "power_growth", "sigma": 1.0},
    "oscillating": {"kind": "oscillating", "a": 2.0, "b": 1.0, "omega": 1.0},
}
LAWS = {
    "linear": {"kind": "linear"},
    "sublinear": {"kind": "power_saturated", "gamma": 0.5, "p": 0.5},
    "superlinear": {"kind": "power_saturated", "gamma": 1.0, "p": 3.0},
}


def config(cid, system, feedback, alpha, run=None, envelope=None):
    return {"id": cid, "system": system, "feedback": feedback, "alpha": alpha,
            "envelope": dict(ENVELOPE, **(envelope or {})), "run": dict(RUN, **(run or {}))}


def shipped():
    for locus, system in LOCI.items():
        for regime, alpha in REGIMES.items():
            for law, feedback in LAWS.items():
                cid = f"{locus}_{regime}_{law}"
                yield cid, config(cid, system, feedback, alpha)


def acceptance():
    interior = LOCI["interior"]
    g1 = {"kind": "power_saturated", "gamma": 1.0, "p": 1.0}
    yield "c2_exponential", config("c2_exponential", interior, {"kind": "linear"},
                                   {"kind": "constant", "value": 1.0})
    yield "c3_underdamping", config("c3_underdamping", interior, g1, {"kind": "power_decay", "sigma": 0.5})
    yield "c4_superlinear", config("c4_superlinear", interior, {"kind": "power_saturated", "gamma": 1.0, "p": 3.0},
                                   {"kind": "constant", "value": 1.0}, run={"t_end": 1000.0})
    yield "c5_overdamping", config("c5_overdamping", interior, g1, {"kind": "power_growth", "sigma": 1.0})
    for tag, frac in (("half", 0.5), ("two_thirds", 2.0 / 3.0)):
        cid = f"c9_pointwise_{tag}"
        yield cid, config(cid, dict(LOCI["pointwise"], xi=math.pi * frac), {"kind": "linear"},
                          {"kind": "constant", "value": 1.0})


def write(directory, items):
    directory.mkdir(parents=True, exist_ok=True)
    for old in directory.glob("*.json"):
        old.unlink()
    for cid, cfg in items:
        (directory / f"{cid}.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    write(DATA / "configs", shipped())
    write(DATA / "acceptance", acceptance())
    print("wrote", len(list((DATA / "configs").glob("*.json"))), "shipped and",
          len(list((DATA / "acceptance").glob("*.json"))), "acceptance configs")
