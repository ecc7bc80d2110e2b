"""
Batch command line.

    qho-kam <perturbation|kam|measure|verify|evolve> [--config PATH] [--out DIR]
            [--threads N] [--seed U64] [--strict]

Exit codes: 0 success, 2 configuration error, 3 frequency rejected,
4 numerical failure (including a failed verify suite).
"""
from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import dynamics as dyn
from . import homological as hom
from . import kam_engine as ke
from . import matrix_spaces as ms
from . import suites
from .config import RunConfig, load_config
from .errors import ConfigError, DomainError, QhoKamError
from .hermite import build_basis
from .output import write_csv, write_json
from .perturbation import decay_report, fourier_P

EXIT_OK, EXIT_CONFIG, EXIT_REJECTED, EXIT_NUMERICAL = 0, 2, 3, 4


def _outdir(cfg: RunConfig, name: str) -> Path:
    d = Path(cfg.output_dir) / name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _k0(cfg: RunConfig) -> int:
    if cfg.eps > 0:
        K1 = ke.build_schedule(cfg.eps, cfg.sigma, cfg.m_max).K[1]
        if cfg.k_cap is not None:
            K1 = min(K1, cfg.k_cap)
        return int(math.floor(K1)) + cfg.guard
    return cfg.guard


def cmd_perturbation(cfg: RunConfig) -> int:
    out = _outdir(cfg, "perturbation")
    basis = build_basis(cfg.N, cfg.quad)
    V = cfg.potential_spec()
    Pf = fourier_P(basis, V, _k0(cfg), cfg.oversample, cfg.strict, cfg.check_quadrature)
    Pf.dump(out / "P_blocks", cfg.alpha_value)
    rep = decay_report(Pf, cfg.delta_value)
    rep["mode_norms"] = [{"k": list(k), "op_norm": v} for k, v in Pf.mode_norms().items()]
    rep["aliasing"] = Pf.meta.get("aliasing")
    write_json(out / "decay_report.json", rep)
    return EXIT_OK


def cmd_kam(cfg: RunConfig) -> int:
    out = _outdir(cfg, "kam")
    res = ke.run(cfg)
    cols = list(ke.STEP_COLUMNS) + (["dS_domega_alpha_hat_plus"] if cfg.fd_omega else [])
    write_csv(out / "step_log.csv", cols, res.step_log)
    lam0 = ms.harmonic_diagonal(cfg.N)
    write_csv(out / "lambda_inf.csv", ["i", "lambda_inf", "lambda_inf_minus_2i_minus_1"],
              [{"i": i + 1, "lambda_inf": l, "lambda_inf_minus_2i_minus_1": l - l0}
               for i, (l, l0) in enumerate(zip(res.lambda_inf, lam0))])
    res.U_fourier.dump(out / "U_blocks")
    summary = {
        "kept": res.kept,
        "rejection": _jsonable(res.rejection),
        "omega": cfg.omega_vector,
        "steps": len(res.state.S_history),
        "global_melnikov": res.meta.get("global_melnikov"),
        "max_drift": float(np.abs(res.lambda_inf - lam0).max()),
    }
    write_json(out / "summary.json", summary)
    if not res.kept:
        _write_violations(out / "violations.csv", res, len(cfg.omega_vector))
        print(f"omega rejected: {summary['rejection']}", file=sys.stderr)
        return EXIT_REJECTED
    return EXIT_OK


def _write_violations(path, res, n):
    # carving hits (k, i, j, divisor) and the first Melnikov hit (k, l, value)
    last = res.state.log[-1] if res.state.log else {}
    kcols = [f"k_{d + 1}" for d in range(n)]
    rows = []
    for k, i, j, val in last.get("violations", []):
        rows.append({"kind": "carve", **dict(zip(kcols, k)), "i": i, "j": j, "divisor": val})
    mv = last.get("melnikov_violation")
    if mv is not None:
        k, l, val = mv
        rows.append({"kind": "melnikov", **dict(zip(kcols, k)), "l": l, "divisor": val})
    write_csv(path, ["kind"] + kcols + ["i", "j", "l", "divisor"], rows)


def _jsonable(x):
    if x is None:
        return None
    if isinstance(x, (tuple, list)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    return x


def cmd_measure(cfg: RunConfig) -> int:
    out = _outdir(cfg, "measure")
    mc = cfg.measure
    n = mc["n_freq"] or cfg.potential_spec().n_freq
    alpha = cfg.alpha_value
    nu1 = cfg.nu1
    rows = []
    if mc["mode"] == "eps":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rows = ke.measure_scan(cfg, mc["eps_grid"], cfg.n_samples, mc["schedule_mode"])
        cols = ["eps", "step", "kappa", "kappa_carve", "K", "gamma", "fraction_step", "fraction_cumulative", "bound_ratio"]
    else:
        lam0 = ms.harmonic_diagonal(cfg.N)
        om = hom.sample_frequencies(cfg.n_samples, n, cfg.seed)
        if mc["mode"] == "kappa":
            pairs = [(k, k**nu1) for k in mc["kappa_grid"]]
        else:
            grid = mc["gamma_grid"] or [1e-3, 3e-3, 1e-2]
            pairs = [(g ** (1.0 / nu1), g) for g in grid]
        for K in mc["K_grid"]:
            for kappa, gamma in pairs:
                mask = _chunked_mask(om, lam0, kappa, K, mc["scan_eps"], gamma, alpha, cfg.threads)
                frac = float(mask.mean())
                rows.append({"kappa": kappa, "K": float(K), "gamma": gamma, "fraction": frac,
                             "scaled": frac / (kappa**nu1 * float(K) ** (n + 1))})
        cols = ["kappa", "K", "gamma", "fraction", "scaled"]
    write_csv(out / "measure_scan.csv", cols, rows)
    return EXIT_OK


def _chunked_mask(om, lam, kappa, K, eps, gamma, alpha, threads):
    from .parallel import chunks, pmap

    parts = pmap(lambda sl: hom.excluded_mask(om[sl], lam, kappa, K, eps, gamma, alpha), chunks(om.shape[0], 1024), threads)
    return np.concatenate(parts) if parts else np.zeros(0, bool)


def cmd_verify(cfg: RunConfig) -> int:
    out = _outdir(cfg, "verify")
    rep = suites.run_all(cfg.verify)
    write_json(out / "verify_report.json", rep)
    return EXIT_OK if rep["passed"] else EXIT_NUMERICAL


def cmd_evolve(cfg: RunConfig) -> int:
    out = _outdir(cfg, "evolve")
    ec = cfg.evolve
    N = cfg.N
    basis = build_basis(N, cfg.quad)
    res = ke.run(cfg, basis=basis)
    if not res.kept:
        print(f"omega rejected: {_jsonable(res.rejection)}", file=sys.stderr)
        return EXIT_REJECTED
    psi0 = dyn.initial_data(ec["initial"], N, int(ec["mode_index"]), float(ec["width"]))
    T, n_out = float(ec["T"]), int(ec["n_out"])
    t = np.linspace(0.0, T, n_out)
    tr = dyn.evolve_original(res.U_fourier, res.lambda_inf, psi0, t, cfg.omega_vector)
    cols = ["t", "norm_0", "norm_1", "norm_2"] + [f"{p}_{i}" for i in range(1, 9) for p in ("re", "im")]
    extra = None
    if ec["cross_check"]:
        steps_per = max(1, math.ceil(T / float(ec["dt"]) / (n_out - 1)))
        tg = np.linspace(0.0, T, steps_per * (n_out - 1) + 1)
        Pf = fourier_P(basis, cfg.potential_spec(), int(ec["k_max"]), cfg.oversample, cfg.strict, cfg.check_quadrature)
        d = dyn.direct_integrate(basis, None, cfg.omega_vector, cfg.eps, psi0, tg, Pf=Pf, keep=steps_per)
        extra = np.linalg.norm(d.states - tr.states, axis=1)
        cols.append("diff_direct")
    rows = []
    for a in range(t.size):
        r = {"t": t[a], "norm_0": tr.norms[0][a], "norm_1": tr.norms[1][a], "norm_2": tr.norms[2][a]}
        for i in range(min(8, N)):
            r[f"re_{i + 1}"] = tr.states[a, i].real
            r[f"im_{i + 1}"] = tr.states[a, i].imag
        if extra is not None:
            r["diff_direct"] = extra[a]
        rows.append(r)
    write_csv(out / "trajectory.csv", cols, rows)
    env = dyn.norm_ratio_envelope(tr)
    summary = {
        "norm_ratio_envelope": {str(p): list(v) for p, v in env.items()},
        "band": [1 - 10 * cfg.eps, 1 + 10 * cfg.eps],
        "within_band": all(1 - 10 * cfg.eps <= lo and hi <= 1 + 10 * cfg.eps for lo, hi in env.values()),
        "l2_drift": float(np.abs(tr.norms[0] / tr.norms[0][0] - 1).max()),
        "max_diff_direct": None if extra is None else float(extra.max()),
    }
    write_json(out / "summary.json", summary)
    return EXIT_OK


COMMANDS = {
    "perturbation": cmd_perturbation,
    "kam": cmd_kam,
    "measure": cmd_measure,
    "verify": cmd_verify,
    "evolve": cmd_evolve,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="TOML or JSON config file")
    common.add_argument("--out", type=str, help="output directory (overrides output_dir)")
    common.add_argument("--threads", type=int, help="worker threads for chunked work")
    common.add_argument("--seed", type=int, help="sampler seed (overrides seed)")
    common.add_argument("--strict", action="store_true", help="aliasing warnings become errors")
    p = argparse.ArgumentParser(prog="qho-kam", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig(delta=0.1)
        changes = {}
        if args.out:
            changes["output_dir"] = args.out
        if args.threads is not None:
            changes["threads"] = args.threads
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed: must be an unsigned 64-bit integer")
            changes["seed"] = args.seed
        if args.strict:
            changes["strict"] = True
        cfg = cfg.replace(**changes) if changes else cfg
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        # one BLAS thread so results do not depend on the machine or --threads
        with threadpool_limits(limits=1):
            return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QhoKamError, DomainError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
