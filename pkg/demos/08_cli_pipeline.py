"""The whole workflow through the command-line interface.

optimize -> simulate -> compare, chained the way a risk desk would script
it: the optimizer's weights CSV feeds the simulator and the comparison
table. Everything lands under one output root with a manifest per run.
"""

import csv
import json
import tempfile
from pathlib import Path

from collateralopt.cli import cli_main

from _synthetic import market

tmp = Path(tempfile.mkdtemp())
prices_csv = tmp / "prices.csv"
table = market()
with open(prices_csv, "w") as fh:
    fh.write("date,symbol,close_usd\n")
    for i, d in enumerate(table.dates):
        for j, s in enumerate(table.symbols):
            fh.write(f"{d.isoformat()},{s},{table.prices[i, j]:.8f}\n")
out = tmp / "out"


def run(*argv):
    argv = [str(a) for a in argv]
    print("$ collateralopt " + " ".join(argv))
    code = cli_main(argv)
    assert code == 0, f"exit {code}"


run("optimize", "--prices", prices_csv, "--window", "200",
    "--objective", "variance", "--caps", "0.2", "--out", out, "--label", "vol")
run("optimize", "--prices", prices_csv, "--window", "200",
    "--objective", "semivariance", "--caps", "0.2", "--out", out, "--label", "sem")
run("simulate", "--prices", prices_csv,
    "--weights", out / "optimize" / "sem" / "weights.csv",
    "--mode", "gbm", "--gamma", "2", "--theta", "1.5",
    "--runs", "4000", "--horizon", "365", "--seed", "7", "--out", out, "--label", "gbm")
run("compare", "--prices", prices_csv,
    "--portfolio", f"VOL={out / 'optimize' / 'vol' / 'weights.csv'}",
    "--portfolio", f"SEM={out / 'optimize' / 'sem' / 'weights.csv'}",
    "--runs", "2000", "--seed", "7", "--out", out, "--label", "head2head")

print("\nsimulation report:")
report = json.loads((out / "simulate" / "gbm" / "report.json").read_text())
for key in ("failure_probability", "stderr", "annual_volatility", "annual_semideviation"):
    print(f"  {key:22} {report[key]:.4f}")

print("\ncomparison table:")
with open(out / "compare" / "head2head" / "compare.csv", newline="") as fh:
    for row in csv.DictReader(fh):
        print(f"  {row['name']:>4}: vol {float(row['annual_volatility']):.1%} "
              f"semidev {float(row['annual_semideviation']):.1%} "
              f"p_hist {float(row['historical_failure_prob']):.1%} "
              f"p_gbm {float(row['gbm_failure_prob']):.1%}")

print(f"\nall artifacts under {out}")
