"""Pick the number of components on one- and two-line data with `select_k`.

Run with ``python demos/choose_components.py [seed]``.
"""

import sys
from dataclasses import replace

from srmr.fit import select_k
from srmr.simgen import DEFAULT, ScenarioConfig, generate

SINGLE = ScenarioConfig(K=1, betas=((1.5, 1.0),), sigmas=(0.1,), mixing=(1.0, 0.0), name="single line")


def main(seed=0):
    for cfg in (SINGLE, DEFAULT):
        lds = generate(replace(cfg, seed=seed))
        fit = select_k(lds.data, [1, 2, 3, 4], seed=seed)
        scores = ", ".join(f"K={k}: {v:.1f}" for k, v in sorted(fit.bic_by_k.items()))
        print(f"{cfg.name} (true K={cfg.K}) -> chose K={fit.K}   [{scores}]")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
