"""Design interruption schedules three ways and compare the outcomes.

At a fixed reporting-efficiency level eta the fusion center may spread
the transmission budget uniformly, solve the pattern-conditioned
detection-probability program through its KKT system, or maximize the
deflection criterion through a radius sweep of lifted relaxations.  The
script prints the three schedules, cross-checks the sweep against a
dense grid oracle, and tabulates the analytic missed-detection
probability of each schedule next to the uninterrupted benchmark.

Run:  python3 demos/schedule_design.py
"""

import numpy as np

from coopsense.compensator import fit
from coopsense.detection import benchmark_weights, pd_alpha_overall
from coopsense.model import BernoulliSchedule, NetworkConfig, NodeChannel
from coopsense.moments import build_moments, calibrate_ma_weight, report_covariance
from coopsense.optimize import (
    dc_matrices,
    grid_oracle,
    p7_objective,
    solve_dc_sweep,
    solve_npc_two_stage,
)
from coopsense.sim import benchmark_pd_alpha

SNRS_DB = (12.0, 5.0, 7.0)
SIGMA_Z2 = 10.0
ETA = 0.5                     # fraction of reports suppressed on average
ALPHAS = (0.01, 0.05, 0.1)


def main():
    cfg = NetworkConfig(K=3, N=20, L=0, sigma_z2=SIGMA_Z2, alpha=0.1, eta=ETA)
    chans = [NodeChannel.from_snr_db(s) for s in SNRS_DB]
    sig = calibrate_ma_weight(NodeChannel.from_snr_db(5.0), 1.0, cfg.N, 0.1)
    mom = build_moments(cfg, chans, sig)
    w = benchmark_weights(mom, SIGMA_Z2, kind="optimal")
    budget = (1.0 - ETA) * mom.n

    schedules = {"uniform": BernoulliSchedule.uniform(1.0 - ETA, mom.n)}
    schedules["kkt"] = solve_npc_two_stage(cfg, mom, w,
                                           np.ones(mom.n, dtype=np.int8))

    prog = dc_matrices(mom, w)
    swept = solve_dc_sweep(prog, ETA, n_radii=24, refine_iters=4)
    schedules["dc-sdp"] = BernoulliSchedule(swept.p)

    print(f"nodes at {SNRS_DB} dB, eta = {ETA} "
          f"(budget {budget:.1f} of {mom.n} reports per window)\n")
    print("designed transmission probabilities:")
    for name, sched in schedules.items():
        print(f"  {name:<8} p = {np.array2string(sched.p, precision=3)}"
              f"   (sum {sched.p.sum():.2f})")

    oracle = grid_oracle(lambda P: p7_objective(P, prog), [(0, 1)] * mom.n,
                         resolution=41,
                         feasible=lambda P: P.sum(axis=1) <= budget + 1e-12,
                         refine=3)
    rel = abs(swept.value - oracle.value) / abs(oracle.value)
    print(f"\ndeflection objective: sweep best {swept.value:.6f} at radius "
          f"{swept.r_best:.3f}; grid oracle {oracle.value:.6f} "
          f"({oracle.n_evals} evaluations, {100 * rel:.2f}% apart)")

    print(f"\nanalytic missed-detection probability (CFAR-held Pf):")
    header = "".join(f"  {name:>9}" for name in schedules)
    print(f"  {'alpha':>6}{header}  {'benchmark':>10}")
    for alpha in ALPHAS:
        row = f"  {alpha:6.2f}"
        for name, sched in schedules.items():
            comp = fit(mom, report_covariance(mom, sched, SIGMA_Z2))
            row += f"  {1.0 - pd_alpha_overall(sched, w, comp, mom, alpha):9.5f}"
        row += f"  {1.0 - benchmark_pd_alpha(mom, SIGMA_Z2, alpha):10.5f}"
        print(row)
    print("\nthe benchmark column is uninterrupted optimal linear fusion")
    print("(every report always sent).  The two designs answer different")
    print("programs: the KKT route shapes the pattern-conditioned statistic")
    print("for the next window, while the deflection route concentrates the")
    print("budget on the strong nodes -- which is what pays off in Pmd at a")
    print("CFAR-held false-alarm rate.")


if __name__ == "__main__":
    main()
