"""Beam selection with FH and DFT codebooks over distance, with noisy CSI."""

from hmimo.config import load_config
from hmimo.experiments import codebook_sweep

cfg = load_config(None, ["codebook.distance_count=5"])
pts = codebook_sweep(cfg, trials=20)

print("distance m  codebook  mean rate  invalid")
for p in pts:
    print(f"{p.distance_m:10.2f}  {p.codebook_kind:8s}  {p.mean_rate:9.3f}  "
          f"{p.invalid_beam_fraction:7.2f}")
