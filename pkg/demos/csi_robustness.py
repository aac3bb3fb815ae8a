"""Detection-error growth when the fusion center's channel knowledge drifts.

The fusion weights, compensator and thresholds are all designed from
estimated channel statistics.  Here every estimated parameter s is
replaced by s * (1 + e) with e ~ N(0, var) before the design step, while
the simulated physics keeps the true channels.  The script averages the
resulting decision-error probability over independent estimation draws
and tabulates its growth with the normalized error variance.

Run:  python3 demos/csi_robustness.py
"""

import numpy as np

from coopsense.compensator import fit
from coopsense.detection import benchmark_weights
from coopsense.model import BernoulliSchedule, NetworkConfig, NodeChannel
from coopsense.moments import build_moments, calibrate_ma_weight, report_covariance
from coopsense.sim import CsiPerturbation, error_probability, perturb_csi, run_batch

SNRS_DB = (12.0, 5.0, 7.0)
SIGMA_Z2 = 10.0
ALPHA = 0.1
P_ON = 0.7
VAR_GRID = (0.0, 0.01, 0.05, 0.1, 0.2)
N_SEEDS = 6
TRIALS = 20_000


def pe_under_belief(cfg, chans, sig, mom, var, seed):
    """Pe when the design believes a perturbed moment set."""
    momp = perturb_csi(mom, CsiPerturbation(var, diagonal_only=True), seed)
    w = benchmark_weights(momp, SIGMA_Z2, kind="optimal")
    sched = BernoulliSchedule.uniform(P_ON, mom.n)
    comp = fit(momp, report_covariance(momp, sched, SIGMA_Z2))
    kw = dict(trials=TRIALS, alpha=ALPHA, mom=momp, independent_nodes=True)
    b0 = run_batch(cfg, chans, sig, sched, comp, w, hypothesis="h0",
                   seed=2 * seed + 10, **kw)
    b1 = run_batch(cfg, chans, sig, sched, comp, w, hypothesis="h1",
                   seed=2 * seed + 11, **kw)
    return error_probability(b0, b1)


def main():
    cfg = NetworkConfig(K=3, N=20, L=0, sigma_z2=SIGMA_Z2, alpha=ALPHA)
    chans = [NodeChannel.from_snr_db(s) for s in SNRS_DB]
    sig = calibrate_ma_weight(NodeChannel.from_snr_db(5.0), 1.0, cfg.N, 0.1)
    mom = build_moments(cfg, chans, sig, independent_nodes=True)

    print(f"nodes at {SNRS_DB} dB, alpha = {ALPHA}, p = {P_ON}, "
          f"{N_SEEDS} estimation draws x {TRIALS} trials per hypothesis\n")
    table = np.empty((N_SEEDS, len(VAR_GRID)))
    for s in range(N_SEEDS):
        for j, var in enumerate(VAR_GRID):
            table[s, j] = pe_under_belief(cfg, chans, sig, mom, var, seed=s)

    mean = table.mean(axis=0)
    print(f"  {'error var':>9} {'mean Pe':>9} {'worst seed':>11} "
          f"{'vs perfect':>11}")
    for j, var in enumerate(VAR_GRID):
        print(f"  {var:9.2f} {mean[j]:9.4f} {table[:, j].max():11.4f} "
              f"{mean[j] - mean[0]:+11.4f}")
    print("\nsingle draws can be lucky or unlucky (the CFAR threshold drifts")
    print("with the believed null moments); on average the error is flat")
    print("while the estimation error stays small and climbs steeply once")
    print("the normalized variance passes a few percent.")


if __name__ == "__main__":
    main()
