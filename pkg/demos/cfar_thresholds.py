"""Pattern-adaptive CFAR thresholding under interrupted reporting.

The fusion statistic's null distribution changes with the realized switch
pattern, so a single fixed threshold cannot hold the false-alarm rate.
The detector recomputes the threshold per pattern from the conditional
null moments.  This script prints the per-pattern thresholds for a small
network, then verifies the achieved false-alarm rate over a grid of
target levels -- first with summaries drawn from the analytic moment
model (isolating the threshold logic), then with the full sample-level
physics, where the finite-sample skew of the energy statistic leaves a
small positive bias at tight levels.

Run:  python3 demos/cfar_thresholds.py
"""

import numpy as np

from coopsense.compensator import conditional_stats, fit
from coopsense.detection import benchmark_weights, pattern_scalar_stats, qfunc_inv
from coopsense.model import (
    BernoulliSchedule,
    NetworkConfig,
    NodeChannel,
    realization_masses,
    realization_table,
)
from coopsense.moments import build_moments, calibrate_ma_weight, report_covariance
from coopsense.sim import binomial_ci_halfwidth, run_batch

SNRS_DB = (12.0, 5.0, 10.0)
SIGMA_Z2 = 10.0
P_ON = 0.7
ALPHAS = (0.01, 0.05, 0.1, 0.2)
TRIALS = 200_000
SEED = 3


def main():
    cfg = NetworkConfig(K=3, N=20, L=0, sigma_z2=SIGMA_Z2)
    chans = [NodeChannel.from_snr_db(s) for s in SNRS_DB]
    sig = calibrate_ma_weight(NodeChannel.from_snr_db(5.0), 1.0, cfg.N, 0.1)
    mom = build_moments(cfg, chans, sig)
    w = benchmark_weights(mom, SIGMA_Z2, kind="optimal")
    sched = BernoulliSchedule.uniform(P_ON, mom.n)
    comp = fit(mom, report_covariance(mom, sched, SIGMA_Z2))

    table = realization_table(mom.n)
    mass = realization_masses(sched, table)
    means, varis = pattern_scalar_stats(w, comp, mom, table)
    taus = means[0] + qfunc_inv(0.05) * np.sqrt(varis[0])
    print(f"per-pattern CFAR thresholds at alpha = 0.05 "
          f"(all {len(table)} switch patterns, p = {P_ON}):")
    print(f"  {'pattern':<10} {'mass':>7} {'null mean':>10} "
          f"{'null sd':>8} {'threshold':>10}")
    for b, pr, mu0, v0, tau in zip(table, mass, means[0], varis[0], taus):
        print(f"  {str(b):<10} {pr:7.4f} {mu0:10.2f} "
              f"{np.sqrt(v0):8.2f} {tau:10.2f}")

    print(f"\nachieved false-alarm rate over {TRIALS} vacant-channel trials")
    print(f"  {'alpha':>6} {'model-draw pf':>14} {'physics pf':>11} "
          f"{'99% CI':>8}")
    for i, alpha in enumerate(ALPHAS):
        kw = dict(hypothesis="h0", trials=TRIALS, alpha=alpha, mom=mom)
        g = run_batch(cfg, chans, sig, sched, comp, w,
                      seed=SEED + 2 * i, summary_mode="gaussian", **kw)
        ph = run_batch(cfg, chans, sig, sched, comp, w,
                       seed=SEED + 2 * i + 1, **kw)
        ci = binomial_ci_halfwidth(alpha, TRIALS)
        print(f"  {alpha:6.2f} {g.false_alarm_rate:14.4f} "
              f"{ph.false_alarm_rate:11.4f} {ci:8.4f}")
    print("\nthe model-draw column sits inside the CI at every level; the")
    print("physics column shows the expected small upward bias at tight")
    print("alpha from the right-skewed energy statistic at N = 20.")

    mu_on, _ = conditional_stats(comp, mom, table[-1], 0)
    mu_off, _ = conditional_stats(comp, mom, table[0], 0)
    print(f"\ncompensator fallback: with every report on, the estimate tracks")
    print(f"the window (conditional mean {np.round(mu_on, 2)}); with all off it")
    print(f"falls back to the prior mean ({np.round(mu_off, 2)}).")


if __name__ == "__main__":
    main()
