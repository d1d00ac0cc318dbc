#!/usr/bin/env python3
"""Generates the bundled synthetic dataset used by the CLI test suite.

Draws a nested-error population on the log scale (12 areas, 10 units
each, 5 sampled), exponentiates, and writes the sampled rows and the
out-of-sample covariate rows as the two CSVs under
crates/logebp-cli/tests/data/. Rerunning reproduces the files
byte-for-byte; the dataset is committed so tests never regenerate it.
"""

from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parent.parent / "crates" / "logebp-cli" / "tests" / "data"

D = 12
N_D = 10
SAMPLE = 5
BETA = np.array([0.5, 0.2])
SIGMA_U2 = 0.25
SIGMA_E2 = 0.5
SEED = 20240917


def main() -> None:
    rng = np.random.default_rng(SEED)
    OUT.mkdir(parents=True, exist_ok=True)
    sample_rows = ["area_id,w,x1"]
    oos_rows = ["area_id,x1"]
    for d in range(D):
        area = f"a{d:02d}"
        x = rng.uniform(size=N_D)
        u = np.sqrt(SIGMA_U2) * rng.standard_normal()
        e = np.sqrt(SIGMA_E2) * rng.standard_normal(N_D)
        y = BETA[0] + BETA[1] * x + u + e
        w = np.exp(y)
        for i in range(SAMPLE):
            sample_rows.append(f"{area},{w[i]:.17g},{x[i]:.17g}")
        for i in range(SAMPLE, N_D):
            oos_rows.append(f"{area},{x[i]:.17g}")
    (OUT / "sample.csv").write_text("\n".join(sample_rows) + "\n")
    (OUT / "oos.csv").write_text("\n".join(oos_rows) + "\n")
    print(f"wrote {OUT / 'sample.csv'} and {OUT / 'oos.csv'}")


if __name__ == "__main__":
    main()
