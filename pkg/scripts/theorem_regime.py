"""Sweep the Weierstrass exponent inside the theorem regime and compare the
measured conjugacy regularity with the predicted one.

Each point runs ``circlelab conjugacy --theorem`` on a map tuned to a rotation
number whose partial quotients grow like q_n**delta for the first few levels,
then switch to a golden tail. Results land in results/theorem_regime/.

    python3 scripts/theorem_regime.py --delta 0.6 --betas 0.2,0.35,0.5
"""
import argparse
import json
import math
import subprocess
import sys
from fractions import Fraction
from pathlib import Path


def diophantine_prefix(delta: float, levels: int) -> list[int]:
    # k_{n+1} = ceil(q_n**delta) keeps q_{n+1} comparable to q_n**(1+delta)
    q_prev, q = 0, 1
    ks = []
    for _ in range(levels):
        k = max(1, math.ceil(q ** delta))
        ks.append(k)
        q_prev, q = q, k * q + q_prev
    return ks


def run_point(beta: str, delta: str, r: str, ks: list[int], samples: int, out: Path) -> dict:
    cmd = [sys.executable, "-m", "circlelab", "conjugacy", "--theorem",
           "--family", "weierstrass_family", "--beta", beta, "--delta", delta, "--r", r,
           "--rho", ",".join(map(str, ks)), "--samples", str(samples),
           "--format", "json", "--out", str(out)]
    res = subprocess.run(cmd, capture_output=True, text=True)
    if res.returncode != 0:
        return {"beta": beta, "exit": res.returncode, "error": res.stderr.strip()[-300:]}
    rep = json.loads(res.stdout)
    rep["exit"] = 0
    return rep


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--delta", default="0.6")
    ap.add_argument("--betas", default="0.2,0.35,0.5")
    ap.add_argument("--r", help="map smoothness, inside (2+delta, 3+delta); default 2.5+delta")
    ap.add_argument("--levels", type=int, default=6, help="quotients grown before the golden tail")
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--out", default="results/theorem_regime")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    r = args.r or str(Fraction(args.delta) + Fraction(5, 2))
    ks = diophantine_prefix(float(args.delta), args.levels)
    print(f"delta={args.delta} quotient prefix {ks}")
    rows = []
    for beta in args.betas.split(","):
        if not float(beta) < float(args.delta):
            print(f"beta={beta}: outside the regime (needs beta < delta), skipped")
            continue
        rep = run_point(beta, args.delta, r, ks, args.samples, out / f"beta_{beta}")
        rows.append(rep)
        if rep["exit"]:
            print(f"beta={beta}: exit {rep['exit']} {rep['error']}")
            continue
        keys = ("holder_exponent", "orbit_holder_exponent", "predicted_exponent")
        shown = "  ".join(f"{k}={rep.get(k)}" for k in keys if k in rep)
        print(f"beta={beta}: {shown}")
    (out / "summary.json").write_text(json.dumps(rows, indent=1, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
