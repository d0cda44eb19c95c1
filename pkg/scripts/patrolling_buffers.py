"""Train SIMS on patrolling with an equilibrium buffer and with an FSP buffer.

For each seed prints the team value against a best-responding opponent, the
signal distribution and the heatmap check (agreeing argmax cells, sites covered).
"""

import argparse
import time

import numpy as np

from teamcoord.cli import _heatmap_check
from teamcoord.evaluation import heatmap, team_value_vs_best_response
from teamcoord.games import benchmark
from teamcoord.refinement import perfect_recall_refinement
from teamcoord.rng import stream
from teamcoord.sampling import FspConfig, sample_from_equilibrium, sample_fsp
from teamcoord.sims import SimsConfig, train_sims
from teamcoord.solver import tmecor_via_refinement


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--buffer", choices=("equilibrium", "fsp"), default="equilibrium")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--episodes", type=int, default=None, help="default 20000 (equilibrium) or 1000000 (fsp)")
    ap.add_argument("--restarts", type=int, default=3)
    ap.add_argument("--iters", type=int, default=20_000)
    args = ap.parse_args()
    g = benchmark("patrolling_4_3")
    rmap = perfect_recall_refinement(g)
    sol = tmecor_via_refinement(g, tol=0.01, rmap=rmap) if args.buffer == "equilibrium" else None
    print("seed,vs_br,mu,signals_agree,sites_covered,seconds")
    for seed in range(args.seeds):
        t = time.perf_counter()
        if sol is not None:
            buf = sample_from_equilibrium(rmap, sol.extras["meta_strategy"], args.episodes or 20_000,
                                          stream(seed, "sample"), sol.extras["meta_opponent"])
        else:
            buf, _ = sample_fsp(rmap, args.episodes or 1_000_000, FspConfig(seed=seed), stream(seed, "sample"))
        cfg = SimsConfig(n_signals=4, iterations=args.iters, seed=seed, restarts=args.restarts)
        sms = train_sims(buf, g, cfg, stream(seed, "train"))
        maps = {(p, k): heatmap(g, sms, p, k, None) for p in g.team for k in range(sms.mu.n)}
        check = _heatmap_check(g, sms, maps)
        vs_br, _ = team_value_vs_best_response(g, sms)
        mu = " ".join(f"{w:.2f}" for w in np.asarray(sms.mu.probs))
        print(f"{seed},{vs_br:.4f},{mu},{check['signals_agree']},{check['sites_covered']},"
              f"{time.perf_counter() - t:.0f}", flush=True)


if __name__ == "__main__":
    main()
