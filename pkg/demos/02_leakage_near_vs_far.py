"""Power leakage: how many atoms hold 95% of the channel energy, far vs near."""

import numpy as np

from hmimo.config import load_config
from hmimo.experiments import leakage_experiment

cfg = load_config()
recs = leakage_experiment(cfg, trials=20)

for regime in ("far", "near"):
    for kind in ("fh", "dft"):
        n95 = [r.n95 for r in recs if r.regime == regime and r.basis_kind == kind]
        print(f"{regime:4s} {kind:3s} median n95 = {np.median(n95):6.1f}")

# the FH basis concentrates far-field energy on fewer atoms than the DFT grid
far = {k: np.array([r.n95 for r in recs if r.regime == "far" and r.basis_kind == k])
       for k in ("fh", "dft")}
print("fraction of far trials with FH < DFT:", np.mean(far["fh"] < far["dft"]))
