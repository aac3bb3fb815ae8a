"""Experiment runner: validated JSON configs, bundled presets, CSV output.

Commands
--------
``run <config>``       execute an experiment config, write CSVs + manifest
``preset <name>``      run a bundled preset (fig4 .. fig9), with overrides
``validate <config>``  schema-check a config and report field-path errors
``dump-sdp <config>``  emit the schedule-design SDP pieces and sweep result

Exit codes: 0 success, 1 configuration error, 2 runtime failure.  A failed
run leaves a ``<scenario>.partial`` marker in the output directory.  The
environment variable ``COOPSENSE_THREADS`` caps the BLAS thread pools.

CSV files are comma-delimited UTF-8 with a header row, ``.`` decimal
marker, CRLF line endings and a fixed column order per scenario; floats
are printed with ``%.10g``.  Each run also writes ``<scenario>_manifest.json``
recording the resolved config, seed, library versions, wall time and the
SHA-256 of every CSV, and ``run`` accepts a manifest in place of a config
to reproduce the exact same files.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import os
import platform
import sys
import time
import traceback
from dataclasses import replace
from importlib import metadata

import numpy as np
import scipy

from .compensator import fit
from .detection import (
    ENUM_CAP,
    benchmark_weights,
    pattern_scalar_stats,
    pd_alpha_overall,
    qfunc,
    qfunc_inv,
)
from .model import BernoulliSchedule, NetworkConfig, NodeChannel, PuSignalModel
from .moments import build_moments, calibrate_ma_weight, report_covariance
from .optimize import (
    dc_matrices,
    feasible_radius_bound,
    solve_dc_sweep,
    solve_npc_two_stage,
)
from .sim import (
    CsiPerturbation,
    benchmark_pd_alpha,
    binomial_ci_halfwidth,
    dispersion_snrs,
    empirical_croc,
    error_probability,
    make_pmd_method,
    perturb_csi,
    run_batch,
    snr_loss,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
THREADS_ENV = "COOPSENSE_THREADS"
SCENARIOS = ("croc", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9")

_ALL_TOP = {
    "scenario", "network", "channels", "signal", "schedule", "weights",
    "trials", "seed", "out_dir", "summary_mode", "independent_nodes",
    "sweep", "assumed",
}

# top-level fields each scenario requires / additionally accepts
_SCENARIO_TOP = {
    "croc": ({"scenario", "network", "channels", "signal", "schedule"},
             {"weights", "trials", "seed", "out_dir", "summary_mode",
              "independent_nodes", "sweep", "assumed"}),
    "fig4": ({"scenario", "network", "signal"},
             {"weights", "trials", "seed", "out_dir", "summary_mode",
              "sweep", "assumed"}),
    "fig5": ({"scenario", "network", "channels", "signal"},
             {"weights", "trials", "seed", "out_dir", "summary_mode",
              "sweep", "assumed"}),
    "fig6": ({"scenario", "network", "channels", "signal"},
             {"weights", "trials", "seed", "out_dir", "summary_mode",
              "sweep", "assumed"}),
    "fig7": ({"scenario", "network", "signal"},
             {"weights", "trials", "seed", "out_dir", "summary_mode",
              "sweep", "assumed"}),
    "fig8": ({"scenario", "network", "channels", "signal"},
             {"weights", "trials", "seed", "out_dir", "summary_mode",
              "independent_nodes", "sweep", "assumed"}),
    "fig9": ({"scenario", "network", "signal"},
             {"weights", "trials", "seed", "out_dir", "sweep", "assumed"}),
}


class ConfigError(ValueError):
    """Schema validation failure; carries one message per violated field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) \
        and math.isfinite(x)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


class _Check:
    """Accumulates '<field path>: <message>' diagnostics while resolving."""

    def __init__(self):
        self.errors: list[str] = []

    def err(self, path: str, msg: str) -> None:
        self.errors.append(f"{path}: {msg}")

    def keys(self, obj: dict, path: str, required: set, optional: set) -> None:
        for key in sorted(set(obj) - required - optional):
            self.err(_join(path, key), "unknown field")
        for key in sorted(required - set(obj)):
            self.err(_join(path, key), "required field missing")

    def num(self, obj, path, key, default=None, lo=None, hi=None,
            open_lo=False, open_hi=False):
        if key not in obj:
            return default
        x = obj[key]
        if not _is_num(x):
            self.err(_join(path, key), "must be a finite number")
            return default
        if not self._in_range(x, lo, hi, open_lo, open_hi):
            self.err(_join(path, key),
                     self._range_msg(lo, hi, open_lo, open_hi))
            return default
        return float(x)

    def int_(self, obj, path, key, default=None, lo=None, hi=None):
        if key not in obj:
            return default
        x = obj[key]
        if not _is_int(x):
            self.err(_join(path, key), "must be an integer")
            return default
        if (lo is not None and x < lo) or (hi is not None and x > hi):
            self.err(_join(path, key), self._range_msg(lo, hi, False, False))
            return default
        return int(x)

    def num_list(self, obj, path, key, default=None, lo=None, hi=None,
                 open_lo=False, open_hi=False, integer=False, length=None):
        if key not in obj:
            return default
        xs = obj[key]
        where = _join(path, key)
        if not isinstance(xs, list) or not xs:
            self.err(where, "must be a nonempty array")
            return default
        if length is not None and len(xs) != length:
            self.err(where, f"must have exactly {length} entries")
            return default
        out = []
        for i, x in enumerate(xs):
            if integer and not _is_int(x):
                self.err(f"{where}[{i}]", "must be an integer")
                return default
            if not integer and not _is_num(x):
                self.err(f"{where}[{i}]", "must be a finite number")
                return default
            if not self._in_range(x, lo, hi, open_lo, open_hi):
                self.err(f"{where}[{i}]",
                         self._range_msg(lo, hi, open_lo, open_hi))
                return default
            out.append(int(x) if integer else float(x))
        return out

    def enum(self, obj, path, key, choices, default=None):
        if key not in obj:
            return default
        x = obj[key]
        if x not in choices:
            self.err(_join(path, key),
                     "must be one of " + ", ".join(repr(c) for c in choices))
            return default
        return x

    def bool_(self, obj, path, key, default=None):
        if key not in obj:
            return default
        x = obj[key]
        if not isinstance(x, bool):
            self.err(_join(path, key), "must be true or false")
            return default
        return x

    def str_(self, obj, path, key, default=None):
        if key not in obj:
            return default
        x = obj[key]
        if not isinstance(x, str) or not x:
            self.err(_join(path, key), "must be a nonempty string")
            return default
        return x

    @staticmethod
    def _in_range(x, lo, hi, open_lo, open_hi) -> bool:
        if lo is not None and (x <= lo if open_lo else x < lo):
            return False
        if hi is not None and (x >= hi if open_hi else x > hi):
            return False
        return True

    @staticmethod
    def _range_msg(lo, hi, open_lo, open_hi) -> str:
        lo_s = "" if lo is None else f"{'>' if open_lo else '>='} {lo:g}"
        hi_s = "" if hi is None else f"{'<' if open_hi else '<='} {hi:g}"
        return "must be " + " and ".join(s for s in (lo_s, hi_s) if s)


def _validate_network(c: _Check, obj) -> dict:
    if not isinstance(obj, dict):
        c.err("network", "must be an object")
        return {}
    c.keys(obj, "network", {"K", "N"},
           {"L", "sigma_z2", "prior_h1", "alpha", "eta"})
    return {
        "K": c.int_(obj, "network", "K", lo=1),
        "N": c.int_(obj, "network", "N", lo=1),
        "L": c.int_(obj, "network", "L", default=0, lo=0),
        "sigma_z2": c.num(obj, "network", "sigma_z2", default=1.0,
                          lo=0.0, open_lo=True),
        "prior_h1": c.num(obj, "network", "prior_h1", default=0.5,
                          lo=0.0, hi=1.0, open_lo=True, open_hi=True),
        "alpha": c.num(obj, "network", "alpha", default=0.01,
                       lo=0.0, hi=1.0, open_lo=True, open_hi=True),
        "eta": c.num(obj, "network", "eta", default=0.0, lo=0.0, hi=1.0,
                     open_hi=True),
    }


def _validate_channels(c: _Check, obj, K) -> list:
    if not isinstance(obj, list) or not obj:
        c.err("channels", "must be a nonempty array")
        return []
    if K is not None and len(obj) != K:
        c.err("channels", f"must list exactly network.K = {K} nodes")
    out = []
    for i, ch in enumerate(obj):
        path = f"channels[{i}]"
        if not isinstance(ch, dict):
            c.err(path, "must be an object")
            continue
        c.keys(ch, path, {"snr_db"}, {"noise_var", "gain_var"})
        out.append({
            "snr_db": c.num(ch, path, "snr_db"),
            "noise_var": c.num(ch, path, "noise_var", default=1.0,
                               lo=0.0, open_lo=True),
            "gain_var": c.num(ch, path, "gain_var", default=0.0, lo=0.0),
        })
    return out


def _validate_signal(c: _Check, obj) -> dict:
    if not isinstance(obj, dict):
        c.err("signal", "must be an object")
        return {}
    c.keys(obj, "signal", set(),
           {"power", "rho", "ref_snr_db", "ma_window", "ma_weight"})
    out = {"power": c.num(obj, "signal", "power", default=1.0,
                          lo=0.0, open_lo=True)}
    has_rho = "rho" in obj
    has_ma = "ma_window" in obj or "ma_weight" in obj
    if has_rho and has_ma:
        c.err("signal", "give either rho or ma_window/ma_weight, not both")
    elif has_rho:
        out["rho"] = c.num(obj, "signal", "rho", lo=0.0, hi=1.0,
                           open_lo=True, open_hi=True)
        out["ref_snr_db"] = c.num(obj, "signal", "ref_snr_db", default=5.0)
    elif has_ma:
        out["ma_window"] = c.int_(obj, "signal", "ma_window", default=1, lo=1)
        out["ma_weight"] = c.num(obj, "signal", "ma_weight", default=0.0,
                                 lo=0.0)
    else:
        c.err("signal", "needs a correlation target rho or an explicit "
                        "ma_window/ma_weight pair")
    return out


def _validate_schedule(c: _Check, obj, n) -> dict:
    if not isinstance(obj, dict):
        c.err("schedule", "must be an object")
        return {}
    src = c.enum(obj, "schedule", "source", ("fixed", "npc-kkt", "dc-sdp"))
    if src == "fixed":
        c.keys(obj, "schedule", {"source"}, {"p0", "p"})
        out = {"source": src}
        if ("p0" in obj) == ("p" in obj):
            c.err("schedule", "fixed source needs exactly one of p0 or p")
        elif "p0" in obj:
            out["p0"] = c.num(obj, "schedule", "p0", lo=0.0, hi=1.0)
        else:
            out["p"] = c.num_list(obj, "schedule", "p", lo=0.0, hi=1.0,
                                  length=n)
        return out
    if src == "npc-kkt":
        c.keys(obj, "schedule", {"source"}, {"last_pattern"})
        pattern = c.num_list(obj, "schedule", "last_pattern",
                             default=None, lo=0, hi=1, integer=True,
                             length=n)
        return {"source": src,
                "last_pattern": pattern if pattern is not None
                else [1] * (n or 0)}
    if src == "dc-sdp":
        c.keys(obj, "schedule", {"source"}, {"n_radii", "refine_iters"})
        return {"source": src,
                "n_radii": c.int_(obj, "schedule", "n_radii", default=16,
                                  lo=2),
                "refine_iters": c.int_(obj, "schedule", "refine_iters",
                                       default=3, lo=0)}
    c.keys(obj, "schedule", {"source"}, set())
    return {}


def _validate_sweep(c: _Check, scenario: str, obj) -> dict:
    """Per-scenario sweep grids; missing keys take the bundled defaults."""
    if obj is None:
        obj = {}
    if not isinstance(obj, dict):
        c.err("sweep", "must be an object")
        return {}
    p = "sweep"
    if scenario == "croc":
        c.keys(obj, p, set(), {"alphas"})
        return {"alphas": c.num_list(obj, p, "alphas",
                                     default=[0.01, 0.02, 0.05, 0.1, 0.2],
                                     lo=0.0, hi=1.0, open_lo=True,
                                     open_hi=True)}
    if scenario == "fig4":
        c.keys(obj, p, set(), {"snr0_grid_db", "deltas_db", "levels_L", "p0"})
        return {
            "snr0_grid_db": c.num_list(obj, p, "snr0_grid_db",
                                       default=[-4.0, -2.0, 0.0, 2.0, 4.0,
                                                6.0]),
            "deltas_db": c.num_list(obj, p, "deltas_db", default=[1.0, 3.0],
                                    lo=0.0),
            "levels_L": c.num_list(obj, p, "levels_L", default=[0, 1],
                                   lo=0, integer=True),
            "p0": c.num(obj, p, "p0", default=0.8, lo=0.0, hi=1.0),
        }
    if scenario == "fig5":
        c.keys(obj, p, set(), {"alphas", "p0_list", "levels_L"})
        return {
            "alphas": c.num_list(obj, p, "alphas",
                                 default=[0.01, 0.02, 0.05, 0.1, 0.2],
                                 lo=0.0, hi=1.0, open_lo=True, open_hi=True),
            "p0_list": c.num_list(obj, p, "p0_list", default=[0.6, 0.8],
                                  lo=0.0, hi=1.0),
            "levels_L": c.num_list(obj, p, "levels_L", default=[0, 1],
                                   lo=0, integer=True),
        }
    if scenario == "fig6":
        c.keys(obj, p, set(), {"alphas", "etas", "levels_L"})
        return {
            "alphas": c.num_list(obj, p, "alphas",
                                 default=[0.01, 0.02, 0.05, 0.1, 0.2, 0.3,
                                          0.5],
                                 lo=0.0, hi=1.0, open_lo=True, open_hi=True),
            "etas": c.num_list(obj, p, "etas", default=[0.3, 0.5, 0.7, 0.9],
                               lo=0.0, hi=1.0, open_hi=True),
            "levels_L": c.num_list(obj, p, "levels_L", default=[0, 1],
                                   lo=0, integer=True),
        }
    if scenario == "fig7":
        c.keys(obj, p, set(), {"node_counts", "snr_levels_db", "alphas",
                               "eta", "n_radii", "refine_iters",
                               "pattern_samples"})
        out = {
            "node_counts": c.num_list(obj, p, "node_counts",
                                      default=[3, 9, 15, 30], lo=3,
                                      integer=True),
            "snr_levels_db": c.num_list(obj, p, "snr_levels_db",
                                        default=[12.0, 5.0, 7.0], length=3),
            "alphas": c.num_list(obj, p, "alphas",
                                 default=[0.01, 0.02, 0.05, 0.1, 0.2],
                                 lo=0.0, hi=1.0, open_lo=True, open_hi=True),
            "eta": c.num(obj, p, "eta", default=0.3, lo=0.0, hi=1.0,
                         open_hi=True),
            "n_radii": c.int_(obj, p, "n_radii", default=16, lo=2),
            "refine_iters": c.int_(obj, p, "refine_iters", default=3, lo=0),
            "pattern_samples": c.int_(obj, p, "pattern_samples", default=4000,
                                      lo=100),
        }
        for i, k in enumerate(out["node_counts"] or []):
            if k % 3 != 0:
                c.err(f"{p}.node_counts[{i}]",
                      "must be a multiple of 3 (three SNR groups)")
        return out
    if scenario == "fig8":
        c.keys(obj, p, set(), {"vars", "n_seeds", "p0"})
        return {
            "vars": c.num_list(obj, p, "vars",
                               default=[0.0, 0.01, 0.02, 0.05, 0.1, 0.2],
                               lo=0.0),
            "n_seeds": c.int_(obj, p, "n_seeds", default=5, lo=1),
            "p0": c.num(obj, p, "p0", default=0.7, lo=0.0, hi=1.0),
        }
    # fig9
    c.keys(obj, p, set(), {"snr0_db", "deltas_db", "etas", "target_pmd",
                           "n_radii", "refine_iters", "bracket", "tol_db"})
    out = {
        "snr0_db": c.num_list(obj, p, "snr0_db", default=[5.0, 10.0]),
        "deltas_db": c.num_list(obj, p, "deltas_db", default=[0.0, 1.0, 3.0],
                                lo=0.0),
        "etas": c.num_list(obj, p, "etas",
                           default=[0.1, 0.3, 0.5, 0.7, 0.9],
                           lo=0.0, hi=1.0, open_hi=True),
        "n_radii": c.int_(obj, p, "n_radii", default=12, lo=2),
        "refine_iters": c.int_(obj, p, "refine_iters", default=2, lo=0),
        "bracket": c.num_list(obj, p, "bracket", default=[-15.0, 30.0],
                              length=2),
        "tol_db": c.num(obj, p, "tol_db", default=0.01, lo=0.0, open_lo=True),
    }
    if "target_pmd" in obj:
        t = obj["target_pmd"]
        if t == "benchmark":
            out["target_pmd"] = t
        elif _is_num(t) and 0.0 < t < 1.0:
            out["target_pmd"] = float(t)
        else:
            c.err(f"{p}.target_pmd",
                  "must be 'benchmark' or a number in (0, 1)")
    else:
        out["target_pmd"] = "benchmark"
    if out["bracket"] is not None and out["bracket"][0] >= out["bracket"][1]:
        c.err(f"{p}.bracket", "must satisfy lo < hi")
    return out


def validate_config(obj) -> dict:
    """Schema-check a raw config object and resolve every default.

    Raises ConfigError carrying one '<field path>: <message>' line per
    violation; unknown fields are rejected wherever they appear.
    """
    c = _Check()
    if not isinstance(obj, dict):
        raise ConfigError(["config: must be a JSON object"])
    scenario = obj.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(
            ["scenario: must be one of " + ", ".join(SCENARIOS)])
    required, optional = _SCENARIO_TOP[scenario]
    for key in sorted(set(obj) - required - optional):
        if key in _ALL_TOP:
            c.err(key, f"not used by scenario {scenario!r}")
        else:
            c.err(key, "unknown field")
    for key in sorted(required - set(obj)):
        c.err(key, "required field missing")

    out = {"scenario": scenario}
    out["network"] = _validate_network(c, obj.get("network", {}))
    K = out["network"].get("K")
    L = out["network"].get("L")
    n = K * (L + 1) if (K is not None and L is not None) else None
    if "channels" in obj:
        out["channels"] = _validate_channels(c, obj["channels"], K)
    out["signal"] = _validate_signal(c, obj.get("signal", {}))
    if "schedule" in obj:
        out["schedule"] = _validate_schedule(c, obj["schedule"], n)
    out["weights"] = c.enum(obj, "", "weights", ("optimal", "equal"),
                            default="optimal")
    out["trials"] = c.int_(obj, "", "trials", default=100_000, lo=1)
    out["seed"] = c.int_(obj, "", "seed", default=0, lo=0, hi=2**63 - 1)
    out["out_dir"] = c.str_(obj, "", "out_dir", default=f"results/{scenario}")
    if "summary_mode" in optional | required:
        out["summary_mode"] = c.enum(obj, "", "summary_mode",
                                     ("physics", "gaussian"),
                                     default="physics")
    out["independent_nodes"] = c.bool_(obj, "", "independent_nodes",
                                       default=False) \
        if "independent_nodes" in optional | required else False
    out["sweep"] = _validate_sweep(c, scenario, obj.get("sweep"))
    if "assumed" in obj:
        notes = obj["assumed"]
        if not isinstance(notes, dict) or any(
                not isinstance(k, str) or v is not True
                for k, v in notes.items()):
            c.err("assumed", "must map field paths to true")
        else:
            out["assumed"] = dict(notes)

    if scenario in ("fig4", "fig9") and K is not None and K % 3 != 0:
        c.err("network.K", "must be a multiple of 3 (three SNR groups)")
    if c.errors:
        raise ConfigError(c.errors)
    return out


# ---------------------------------------------------------------------------
# bundled presets


def _preset_base(scenario, seed):
    return {
        "scenario": scenario,
        "network": {"K": 3, "N": 20, "L": 0, "sigma_z2": 10.0,
                    "prior_h1": 0.5, "alpha": 0.01, "eta": 0.0},
        "signal": {"power": 1.0, "rho": 0.1, "ref_snr_db": 5.0},
        "trials": 100_000,
        "seed": seed,
        "out_dir": f"results/{scenario}",
    }


def _build_presets() -> dict:
    presets = {}

    fig4 = _preset_base("fig4", 4001)
    fig4["sweep"] = {"snr0_grid_db": [-4.0, -2.0, 0.0, 2.0, 4.0, 6.0],
                     "deltas_db": [1.0, 3.0], "levels_L": [0, 1], "p0": 0.8}
    fig4["assumed"] = {"sweep.snr0_grid_db": True, "sweep.deltas_db": True,
                       "sweep.p0": True, "signal.power": True,
                       "signal.ref_snr_db": True, "seed": True}
    presets["fig4"] = fig4

    fig5 = _preset_base("fig5", 5001)
    fig5["channels"] = [{"snr_db": 12.0}, {"snr_db": 5.0}, {"snr_db": 10.0}]
    fig5["summary_mode"] = "gaussian"
    fig5["sweep"] = {"alphas": [0.01, 0.02, 0.05, 0.1, 0.2],
                     "p0_list": [0.6, 0.8], "levels_L": [0, 1]}
    fig5["assumed"] = {"channels": True, "sweep.alphas": True,
                       "summary_mode": True, "signal.power": True,
                       "signal.ref_snr_db": True, "seed": True}
    presets["fig5"] = fig5

    fig6 = _preset_base("fig6", 6001)
    fig6["channels"] = [{"snr_db": 12.0}, {"snr_db": 5.0}, {"snr_db": 10.0}]
    fig6["sweep"] = {"alphas": [0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5],
                     "etas": [0.3, 0.5, 0.7, 0.9], "levels_L": [0, 1]}
    fig6["assumed"] = {"sweep.alphas": True, "signal.power": True,
                       "signal.ref_snr_db": True, "seed": True}
    presets["fig6"] = fig6

    fig7 = _preset_base("fig7", 7001)
    fig7["sweep"] = {"node_counts": [3, 9, 15, 30],
                     "snr_levels_db": [12.0, 5.0, 7.0],
                     "alphas": [0.01, 0.02, 0.05, 0.1, 0.2], "eta": 0.3,
                     "n_radii": 16, "refine_iters": 3,
                     "pattern_samples": 4000}
    fig7["assumed"] = {"sweep.alphas": True, "sweep.n_radii": True,
                       "sweep.refine_iters": True,
                       "sweep.pattern_samples": True, "signal.power": True,
                       "signal.ref_snr_db": True, "seed": True}
    presets["fig7"] = fig7

    fig8 = _preset_base("fig8", 8001)
    fig8["network"]["alpha"] = 0.1
    fig8["network"]["eta"] = 0.3
    fig8["channels"] = [{"snr_db": 12.0}, {"snr_db": 5.0}, {"snr_db": 7.0}]
    fig8["independent_nodes"] = True
    fig8["sweep"] = {"vars": [0.0, 0.01, 0.02, 0.05, 0.1, 0.2],
                     "n_seeds": 5, "p0": 0.7}
    fig8["assumed"] = {"network.alpha": True, "network.eta": True,
                       "sweep.vars": True, "sweep.n_seeds": True,
                       "signal.power": True, "signal.ref_snr_db": True,
                       "seed": True}
    presets["fig8"] = fig8

    fig9 = _preset_base("fig9", 9001)
    fig9["network"]["alpha"] = 0.1
    fig9["sweep"] = {"snr0_db": [5.0, 10.0], "deltas_db": [0.0, 1.0, 3.0],
                     "etas": [0.1, 0.3, 0.5, 0.7, 0.9],
                     "target_pmd": "benchmark", "n_radii": 12,
                     "refine_iters": 2, "bracket": [-15.0, 30.0],
                     "tol_db": 0.01}
    fig9["assumed"] = {"sweep.etas": True, "sweep.target_pmd": True,
                       "sweep.n_radii": True, "sweep.refine_iters": True,
                       "sweep.bracket": True, "sweep.tol_db": True,
                       "signal.power": True, "signal.ref_snr_db": True,
                       "seed": True}
    presets["fig9"] = fig9
    return presets


PRESETS = _build_presets()


# ---------------------------------------------------------------------------
# assembly helpers


def _network(cfg: dict) -> NetworkConfig:
    n = cfg["network"]
    return NetworkConfig(K=n["K"], N=n["N"], L=n["L"],
                         sigma_z2=n["sigma_z2"], prior_h1=n["prior_h1"],
                         alpha=n["alpha"], eta=n["eta"])


def _signal(sig_cfg: dict, N: int) -> PuSignalModel:
    if "rho" in sig_cfg:
        ref = NodeChannel.from_snr_db(sig_cfg["ref_snr_db"], 1.0,
                                      sig_cfg["power"])
        return calibrate_ma_weight(ref, sig_cfg["power"], N, sig_cfg["rho"])
    return PuSignalModel(power=sig_cfg["power"],
                         ma_window=sig_cfg["ma_window"],
                         ma_weight=sig_cfg["ma_weight"])


def _channels(chan_cfgs, power) -> list:
    return [NodeChannel.from_snr_db(ch["snr_db"], ch["noise_var"], power,
                                    ch["gain_var"])
            for ch in chan_cfgs]


def _schedule(sched_cfg: dict, net: NetworkConfig, mom, w) -> BernoulliSchedule:
    src = sched_cfg["source"]
    if src == "fixed":
        if "p" in sched_cfg:
            return BernoulliSchedule(np.asarray(sched_cfg["p"], dtype=float))
        return BernoulliSchedule.uniform(sched_cfg["p0"], mom.n)
    if src == "npc-kkt":
        b = np.asarray(sched_cfg["last_pattern"], dtype=float)
        return solve_npc_two_stage(net, mom, w, b)
    res = solve_dc_sweep(dc_matrices(mom, w), net.eta,
                         n_radii=sched_cfg["n_radii"],
                         refine_iters=sched_cfg["refine_iters"])
    return BernoulliSchedule(res.p)


def _comp_for(mom, sched, sigma_z2):
    return fit(mom, report_covariance(mom, sched, sigma_z2))


def _pd_alpha_sampled(sched, w, comp, mom, alpha, n_samples, seed) -> float:
    """Pattern-sampled detection probability for windows too wide to
    enumerate: conditional values stay analytic, only the pattern average
    is Monte Carlo."""
    rng = np.random.default_rng(seed)
    pats = (rng.random((n_samples, mom.n)) < sched.p[None, :]).astype(float)
    B, counts = np.unique(pats, axis=0, return_counts=True)
    means, varis = pattern_scalar_stats(w, comp, mom, B)
    t0 = qfunc_inv(alpha)
    sd0 = np.sqrt(np.maximum(varis[0], 0.0))
    sd1 = np.sqrt(np.maximum(varis[1], 1e-300))
    pd = qfunc((t0 * sd0 - (means[1] - means[0])) / sd1)
    return float(counts @ pd / n_samples)


def _pmd_model(sched, w, comp, mom, alpha, n_samples, seed):
    if mom.n <= ENUM_CAP:
        return 1.0 - pd_alpha_overall(sched, w, comp, mom, alpha)
    return 1.0 - _pd_alpha_sampled(sched, w, comp, mom, alpha, n_samples,
                                   seed)


# ---------------------------------------------------------------------------
# scenario runners: each returns [(file name, header, rows)]


def _run_croc(cfg: dict):
    net = _network(cfg)
    sig = _signal(cfg["signal"], net.N)
    chans = _channels(cfg["channels"], cfg["signal"]["power"])
    mom = build_moments(net, chans, sig,
                        independent_nodes=cfg["independent_nodes"])
    w = benchmark_weights(mom, net.sigma_z2, kind=cfg["weights"])
    sched = _schedule(cfg["schedule"], net, mom, w)
    comp = _comp_for(mom, sched, net.sigma_z2)
    alphas = cfg["sweep"]["alphas"]
    curve = empirical_croc(net, chans, sig, sched, comp, w, alphas,
                           trials=cfg["trials"], seed=cfg["seed"], mom=mom,
                           independent_nodes=cfg["independent_nodes"],
                           summary_mode=cfg["summary_mode"])
    rows = []
    for i, a in enumerate(alphas):
        pmd_an = 1.0 - pd_alpha_overall(sched, w, comp, mom, a) \
            if mom.n <= ENUM_CAP else ""
        rows.append((a, curve.pf[i], curve.pf_ci[i], curve.pmd[i],
                     curve.pmd_ci[i], pmd_an))
    header = ("alpha", "pf_emp", "pf_ci", "pmd_emp", "pmd_ci",
              "pmd_analytic")
    return [("croc.csv", header, rows)]


def _run_fig4(cfg: dict):
    base = _network(cfg)
    sig = _signal(cfg["signal"], base.N)
    sw = cfg["sweep"]
    header = ("snr0_db", "delta_db", "L", "p0", "pd_analytic",
              "pd_empirical", "ci_lo", "ci_hi")
    files, idx = [], 0
    for delta in sw["deltas_db"]:
        for L in sw["levels_L"]:
            net = replace(base, L=L)
            rows = []
            for snr0 in sw["snr0_grid_db"]:
                snrs = dispersion_snrs(snr0, delta, net.K)
                chans = [NodeChannel.from_snr_db(s, 1.0,
                                                 cfg["signal"]["power"])
                         for s in snrs]
                mom = build_moments(net, chans, sig)
                w = benchmark_weights(mom, net.sigma_z2, kind=cfg["weights"])
                sched = BernoulliSchedule.uniform(sw["p0"], mom.n)
                comp = _comp_for(mom, sched, net.sigma_z2)
                pd_an = pd_alpha_overall(sched, w, comp, mom, net.alpha)
                batch = run_batch(net, chans, sig, sched, comp, w,
                                  hypothesis="h1", trials=cfg["trials"],
                                  seed=cfg["seed"] + 1000 * idx, mom=mom,
                                  summary_mode=cfg["summary_mode"])
                idx += 1
                pd_emp = batch.detection_rate
                ci = binomial_ci_halfwidth(pd_emp, cfg["trials"])
                rows.append((snr0, delta, L, sw["p0"], pd_an, pd_emp,
                             pd_emp - ci, pd_emp + ci))
            files.append((f"fig4_delta{delta:g}_L{L}.csv", header, rows))
    return files


def _run_fig5(cfg: dict):
    base = _network(cfg)
    sig = _signal(cfg["signal"], base.N)
    sw = cfg["sweep"]
    header = ("alpha", "p0", "L", "pf_emp", "ci_lo", "ci_hi")
    files, idx = [], 0
    for p0 in sw["p0_list"]:
        for L in sw["levels_L"]:
            net = replace(base, L=L)
            chans = _channels(cfg["channels"], cfg["signal"]["power"])
            mom = build_moments(net, chans, sig)
            w = benchmark_weights(mom, net.sigma_z2, kind=cfg["weights"])
            sched = BernoulliSchedule.uniform(p0, mom.n)
            comp = _comp_for(mom, sched, net.sigma_z2)
            curve = empirical_croc(net, chans, sig, sched, comp, w,
                                   sw["alphas"], trials=cfg["trials"],
                                   seed=cfg["seed"] + 1000 * idx, mom=mom,
                                   summary_mode=cfg["summary_mode"])
            idx += 1
            rows = [(a, p0, L, curve.pf[i], curve.pf[i] - curve.pf_ci[i],
                     curve.pf[i] + curve.pf_ci[i])
                    for i, a in enumerate(sw["alphas"])]
            files.append((f"fig5_p0{p0:g}_L{L}.csv", header, rows))
    return files


def _run_fig6(cfg: dict):
    base = _network(cfg)
    sig = _signal(cfg["signal"], base.N)
    sw = cfg["sweep"]
    header = ("eta", "L", "alpha", "pf_emp", "pmd_emp", "pmd_analytic")
    files, idx = [], 0
    for eta in sw["etas"]:
        for L in sw["levels_L"]:
            net = replace(base, L=L, eta=eta)
            chans = _channels(cfg["channels"], cfg["signal"]["power"])
            mom = build_moments(net, chans, sig)
            w = benchmark_weights(mom, net.sigma_z2, kind=cfg["weights"])
            sched = BernoulliSchedule.uniform(1.0 - eta, mom.n)
            comp = _comp_for(mom, sched, net.sigma_z2)
            curve = empirical_croc(net, chans, sig, sched, comp, w,
                                   sw["alphas"], trials=cfg["trials"],
                                   seed=cfg["seed"] + 1000 * idx, mom=mom,
                                   summary_mode=cfg["summary_mode"])
            idx += 1
            rows = []
            for i, a in enumerate(sw["alphas"]):
                pmd_an = 1.0 - pd_alpha_overall(sched, w, comp, mom, a)
                rows.append((eta, L, a, curve.pf[i], curve.pmd[i], pmd_an))
            files.append((f"fig6_eta{eta:g}_L{L}.csv", header, rows))
    return files


def _run_fig7(cfg: dict):
    base = _network(cfg)
    sig = _signal(cfg["signal"], base.N)
    sw = cfg["sweep"]
    header = ("K", "alpha", "pf_emp", "pmd_emp", "pmd_model",
              "pmd_benchmark")
    files = []
    for k_idx, K in enumerate(sw["node_counts"]):
        snrs = np.repeat(np.asarray(sw["snr_levels_db"], dtype=float), K // 3)
        net = replace(base, K=K, eta=sw["eta"])
        chans = [NodeChannel.from_snr_db(s, 1.0, cfg["signal"]["power"])
                 for s in snrs]
        mom = build_moments(net, chans, sig)
        w = benchmark_weights(mom, net.sigma_z2, kind=cfg["weights"])
        res = solve_dc_sweep(dc_matrices(mom, w), sw["eta"],
                             n_radii=sw["n_radii"],
                             refine_iters=sw["refine_iters"])
        sched = BernoulliSchedule(res.p)
        comp = _comp_for(mom, sched, net.sigma_z2)
        curve = empirical_croc(net, chans, sig, sched, comp, w, sw["alphas"],
                               trials=cfg["trials"],
                               seed=cfg["seed"] + 1000 * k_idx, mom=mom,
                               summary_mode=cfg["summary_mode"])
        rows = []
        for i, a in enumerate(sw["alphas"]):
            pmd_m = _pmd_model(sched, w, comp, mom, a, sw["pattern_samples"],
                               cfg["seed"] + 1000 * k_idx + i)
            pmd_b = 1.0 - benchmark_pd_alpha(mom, net.sigma_z2, a)
            rows.append((K, a, curve.pf[i], curve.pmd[i], pmd_m, pmd_b))
        files.append((f"fig7_K{K}.csv", header, rows))
    return files


def _run_fig8(cfg: dict):
    net = _network(cfg)
    sig = _signal(cfg["signal"], net.N)
    chans = _channels(cfg["channels"], cfg["signal"]["power"])
    mom = build_moments(net, chans, sig,
                        independent_nodes=cfg["independent_nodes"])
    sw = cfg["sweep"]
    priors = (net.prior_h0, net.prior_h1)
    header = ("var", "n_seeds", "pe_mean", "pe_sd")
    files = []
    for m_idx, (method, p0) in enumerate(
            (("interrupted", sw["p0"]), ("benchmark", 1.0))):
        rows = []
        for v_idx, var in enumerate(sw["vars"]):
            reps = 1 if var == 0.0 else sw["n_seeds"]
            pes = []
            for rep in range(reps):
                pseed = cfg["seed"] + 100_000 * m_idx + 1000 * v_idx + rep
                momp = perturb_csi(
                    mom, CsiPerturbation(var, diagonal_only=True), pseed)
                w = benchmark_weights(momp, net.sigma_z2,
                                      kind=cfg["weights"])
                sched = BernoulliSchedule.uniform(p0, mom.n)
                comp = _comp_for(momp, sched, net.sigma_z2)
                kw = dict(trials=cfg["trials"], mom=momp,
                          independent_nodes=cfg["independent_nodes"],
                          summary_mode=cfg["summary_mode"])
                b0 = run_batch(net, chans, sig, sched, comp, w,
                               hypothesis="h0", seed=2 * pseed + 10, **kw)
                b1 = run_batch(net, chans, sig, sched, comp, w,
                               hypothesis="h1", seed=2 * pseed + 11, **kw)
                pes.append(error_probability(b0, b1, priors))
            rows.append((var, reps, float(np.mean(pes)),
                         float(np.std(pes))))
        files.append((f"fig8_{method}.csv", header, rows))
    return files


def _run_fig9(cfg: dict):
    base = _network(cfg)
    sig = _signal(cfg["signal"], base.N)
    sw = cfg["sweep"]
    header = ("snr0_db", "delta_db", "eta", "target_pmd", "loss_db",
              "reachable")
    bracket = tuple(sw["bracket"])
    files = []
    for snr0 in sw["snr0_db"]:
        for delta in sw["deltas_db"]:
            bench = make_pmd_method("benchmark", delta_db=delta, sig=sig)
            if sw["target_pmd"] == "benchmark":
                target = bench(base, snr0, base.alpha)
            else:
                target = sw["target_pmd"]
            rows = []
            for eta in sw["etas"]:
                prop = make_pmd_method("interrupted", delta_db=delta,
                                       eta=eta, sched_source="dc-sdp",
                                       n_radii=sw["n_radii"],
                                       refine_iters=sw["refine_iters"],
                                       sig=sig)
                try:
                    loss = snr_loss(base, target, base.alpha, prop, bench,
                                    bracket=bracket, tol_db=sw["tol_db"])
                    rows.append((snr0, delta, eta, target, loss, True))
                except ValueError:
                    # operating point below the attendance floor of this
                    # interruption level: no SNR reaches it
                    rows.append((snr0, delta, eta, target, "", False))
            files.append((f"fig9_snr{snr0:g}_delta{delta:g}.csv", header,
                          rows))
    return files


_RUNNERS = {"croc": _run_croc, "fig4": _run_fig4, "fig5": _run_fig5,
            "fig6": _run_fig6, "fig7": _run_fig7, "fig8": _run_fig8,
            "fig9": _run_fig9}


# ---------------------------------------------------------------------------
# emission


def _fmt(x) -> str:
    if isinstance(x, bool) or isinstance(x, np.bool_):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.10g" % float(x)
    if x is None:
        return ""
    return str(x)


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        digest.update(fh.read())
    return digest.hexdigest()


def _version() -> str:
    try:
        return metadata.version("coopsense")
    except metadata.PackageNotFoundError:
        return "unknown"


def _execute(cfg: dict) -> int:
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    marker = os.path.join(out_dir, f"{cfg['scenario']}.partial")
    with open(marker, "w", encoding="utf-8") as fh:
        fh.write("run started and has not finished cleanly\n")
    start = time.monotonic()
    try:
        files = _RUNNERS[cfg["scenario"]](cfg)
        outputs = []
        for name, header, rows in files:
            path = os.path.join(out_dir, name)
            _write_csv(path, header, rows)
            outputs.append({"file": name, "rows": len(rows),
                            "sha256": _sha256(path)})
            print(f"wrote {path} ({len(rows)} rows)")
    except Exception:
        print(traceback.format_exc(), file=sys.stderr)
        print(f"error: run failed; marker left at {marker}",
              file=sys.stderr)
        return EXIT_RUNTIME
    manifest = {
        "tool": "coopsense",
        "version": _version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "seed": cfg["seed"],
        "wall_time_s": round(time.monotonic() - start, 3),
        "config": cfg,
        "outputs": outputs,
    }
    mpath = os.path.join(out_dir, f"{cfg['scenario']}_manifest.json")
    with open(mpath, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.remove(marker)
    print(f"manifest {mpath}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# commands


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"{path}: unreadable ({exc.strerror})"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON at line {exc.lineno}, "
                           f"column {exc.colno}: {exc.msg}"]) from exc
    if isinstance(obj, dict) and obj.get("tool") == "coopsense" \
            and "config" in obj:
        obj = obj["config"]
    return validate_config(obj)


def _report_config_error(exc: ConfigError) -> int:
    print("config error:", file=sys.stderr)
    for line in exc.errors:
        print(f"  - {line}", file=sys.stderr)
    return EXIT_CONFIG


def _cmd_run(args) -> int:
    try:
        cfg = _load_config(args.config)
    except ConfigError as exc:
        return _report_config_error(exc)
    return _execute(cfg)


def _cmd_preset(args) -> int:
    if args.name not in PRESETS:
        print(f"config error: unknown preset {args.name!r}; available: "
              + ", ".join(sorted(PRESETS)), file=sys.stderr)
        return EXIT_CONFIG
    raw = copy.deepcopy(PRESETS[args.name])
    if args.trials is not None:
        raw["trials"] = args.trials
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out_dir"] = args.out
    try:
        cfg = validate_config(raw)
    except ConfigError as exc:
        return _report_config_error(exc)
    return _execute(cfg)


def _cmd_validate(args) -> int:
    try:
        cfg = _load_config(args.config)
    except ConfigError as exc:
        return _report_config_error(exc)
    print(f"OK: valid {cfg['scenario']!r} config")
    return EXIT_OK


def _cmd_dump_sdp(args) -> int:
    try:
        cfg = _load_config(args.config)
    except ConfigError as exc:
        return _report_config_error(exc)
    if "channels" not in cfg:
        return _report_config_error(ConfigError(
            ["channels: dump-sdp needs a config with an explicit "
             "channel list"]))
    try:
        net = _network(cfg)
        sig = _signal(cfg["signal"], net.N)
        chans = _channels(cfg["channels"], cfg["signal"]["power"])
        mom = build_moments(net, chans, sig,
                            independent_nodes=cfg["independent_nodes"])
        w = benchmark_weights(mom, net.sigma_z2, kind=cfg["weights"])
        prog = dc_matrices(mom, w)
        sched_cfg = cfg.get("schedule", {})
        n_radii = sched_cfg.get("n_radii", 16)
        refine = sched_cfg.get("refine_iters", 3)
        res = solve_dc_sweep(prog, net.eta, n_radii=n_radii,
                             refine_iters=refine)
        payload = {
            "n": prog.n,
            "eta": net.eta,
            "budget": (1.0 - net.eta) * prog.n,
            "d_mu": prog.d_mu.tolist(),
            "d_sigma": prog.d_sigma.tolist(),
            "objective_diag": prog.d.tolist(),
            "r_feasible": feasible_radius_bound(prog, net.eta),
            "r_max": prog.r_max,
            "sweep": {
                "r_best": res.r_best,
                "value": res.value,
                "p": res.p.tolist(),
                "radii": res.radii.tolist(),
                "values": res.values.tolist(),
                "n_failed": res.n_failed,
            },
        }
    except Exception:
        print(traceback.format_exc(), file=sys.stderr)
        return EXIT_RUNTIME
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coopsense",
        description="Interrupted-reporting spectrum sensing experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="JSON config (or manifest) file")
    p_pre = sub.add_parser("preset", help="run a bundled preset")
    p_pre.add_argument("name", help="one of " + ", ".join(sorted(PRESETS)))
    p_pre.add_argument("--trials", type=int, help="override trial count")
    p_pre.add_argument("--seed", type=int, help="override master seed")
    p_pre.add_argument("--out", help="override output directory")
    p_val = sub.add_parser("validate", help="schema-check a config")
    p_val.add_argument("config", help="JSON config file")
    p_dmp = sub.add_parser("dump-sdp",
                           help="emit schedule-design SDP pieces")
    p_dmp.add_argument("config", help="JSON config file")
    p_dmp.add_argument("--out", help="write JSON here instead of stdout")
    return parser


_COMMANDS = {"run": _cmd_run, "preset": _cmd_preset,
             "validate": _cmd_validate, "dump-sdp": _cmd_dump_sdp}


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    limit = os.environ.get(THREADS_ENV)
    threads = None
    if limit is not None:
        try:
            threads = int(limit)
            if threads < 1:
                raise ValueError
        except ValueError:
            print(f"error: {THREADS_ENV} must be a positive integer, "
                  f"got {limit!r}", file=sys.stderr)
            return EXIT_CONFIG
    handler = _COMMANDS[args.command]
    if threads is None:
        return handler(args)
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=threads):
        return handler(args)


if __name__ == "__main__":
    sys.exit(main())
