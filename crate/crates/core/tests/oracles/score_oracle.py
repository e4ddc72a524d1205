"""Regenerates tests/data/score_oracle.json.

Draws seeded logit rows with numpy and evaluates each score from its
literal formula in 60-digit arithmetic. Run from the crate root:

    python3 tests/oracles/score_oracle.py
"""

import json
from pathlib import Path

import mpmath as mp
import numpy as np

mp.mp.dps = 60
SEED = 20240611
ROWS = 1000


def scores(z, t):
    zs = [mp.mpf(v) / mp.mpf(t) for v in z]
    exps = [mp.e ** v for v in zs]
    total = mp.fsum(exps)
    p = [e / total for e in exps]
    k = len(z)
    return {
        "energy": -mp.log(total),
        "entropy": -mp.fsum(pi * mp.log(pi) for pi in p if pi > 0),
        "variance": -mp.fsum((pi - mp.mpf(1) / k) ** 2 for pi in p) / k,
        "msp": -max(p),
        "maxlogit": -max(zs),
    }


def main():
    rng = np.random.default_rng(SEED)
    cases = []
    for _ in range(ROWS):
        k = int(rng.integers(2, 11))
        t = float(rng.uniform(0.5, 2.0))
        z = [float(v) for v in rng.uniform(-20.0, 20.0, size=k)]
        s = scores(z, t)
        cases.append({"z": z, "t": t, **{name: float(v) for name, v in s.items()}})
    out = Path(__file__).resolve().parent.parent / "data" / "score_oracle.json"
    lines = ",\n".join(json.dumps(c) for c in cases)
    out.write_text(f'{{"seed": {SEED}, "cases": [\n{lines}\n]}}\n')


if __name__ == "__main__":
    main()
