"""Criterion-6-shaped run: run_ablation at the desk schedule of record."""
import time

import numpy as np

from uwadapt.adapt import TrainConfig
from uwadapt.fixtures import make_desk_data
from uwadapt.pipeline import AblationSpec, run_ablation, _train_scorer_variant

means = {v: [] for v in ("BL", "BL+ITE", "BL+ITE+ITA")}
t0 = time.time()
for seed in (0, 1, 2):
    data = make_desk_data(seed, image_size=64)
    scorer = _train_scorer_variant("RUIQA", data, seed=seed)
    cfg = TrainConfig.desk(seed=seed)
    for variant in means:
        rep = run_ablation(AblationSpec(variant), data, cfg, scorer=scorer)
        vals = [v for _, m, v in rep.rows if m == "ruiqa"]
        means[variant].append(float(np.mean(vals)))
        print(f"seed {seed} {variant}: mean {means[variant][-1]:.3f} "
              f"({time.time() - t0:.0f}s elapsed)", flush=True)

for v, xs in means.items():
    print(f"{v}: means {[f'{x:.3f}' for x in xs]} median {np.median(xs):.3f}")
bl, ite, ita = (np.median(means[v]) for v in ("BL", "BL+ITE", "BL+ITE+ITA"))
print(f"ordering BL+ITE+ITA ({ita:.3f}) >= BL+ITE ({ite:.3f}) >= BL ({bl:.3f}): "
      f"{ita >= ite >= bl}")
print(f"total {time.time() - t0:.0f}s")
