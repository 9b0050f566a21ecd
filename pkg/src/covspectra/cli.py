"""Command line front end.

Every subcommand takes its parameters from flags, optionally seeded from a
JSON file given with ``--config`` (flags win).  Outputs go to ``--out``; each
CSV starts with a ``# {json}`` line holding the resolved configuration, and
each JSON output stores it under ``"config"``.

Exit codes: 0 success, 2 a check failed, 1 runtime error, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .ensemble import DISTRIBUTIONS, SampleSpec, generate_sample, read_eigenvalues, replicate, write_eigenvalues
from .errors import CovSpectraError
from .lawcheck import LawCheckReport, check_global, check_local, check_outside, check_rigidity
from .solver import solve_m1
from .spectrum import (
    DEFAULT_TAU,
    Dimensions,
    PopulationSpectrum,
    SpikedModel,
    identity_spectrum,
    make_spectrum,
    spectrum_from_json,
    spiked_to_full,
)
from .spikes import estimate_spikes, rate_experiment, write_estimates
from .support import density_curve, support_map

EXIT_OK, EXIT_ERROR, EXIT_FAIL, EXIT_USAGE = 0, 1, 2, 64
STOCHASTIC = {
    "simulate",
    "check-global",
    "check-local",
    "check-rigidity",
    "check-outside",
    "spikes-rate",
    "reproduce-figure",
}
FIGURE_DIMS = ((400, 40000), (400, 400), (40000, 400))


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # noqa: D401 - argparse hook
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# value parsers

def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text) -> list[int]:
    return [int(round(v)) for v in _floats(text)]


def _complex_points(text) -> list[complex]:
    if isinstance(text, (list, tuple)):
        pts = [p if isinstance(p, (list, tuple)) else _floats(p) for p in text]
    else:
        pts = [_floats(p) for p in str(text).split(";") if p.strip()]
    out = []
    for p in pts:
        if len(p) != 2:
            raise UsageError(f"spectral point needs 'E,eta', got {p}")
        out.append(complex(p[0], p[1]))
    return out


def _load_spectrum(source, tau: float) -> PopulationSpectrum:
    if source in (None, "identity"):
        return identity_spectrum()
    if isinstance(source, dict):
        spec = spectrum_from_json(source, tau)
    elif isinstance(source, list):
        spec = make_spectrum([tuple(a) for a in source], tau)
    else:
        spec = spectrum_from_json(source, tau)
    if isinstance(spec, SpikedModel):
        return spiked_to_full(spec)
    return spec


# ---------------------------------------------------------------------------
# parser construction

def _common(p: argparse.ArgumentParser, stochastic: bool) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON file with default values for this command")
    p.add_argument("--out", default=S, help="output directory (default: current directory)")
    p.add_argument("--threads", type=int, default=S, help="replica parallelism (default: all cores)")
    p.add_argument("--tau", type=float, default=S, help=f"spectrum regularity constant (default {DEFAULT_TAU})")
    if stochastic:
        p.add_argument("--seed", type=int, default=S, help="64-bit seed (required)")
        p.add_argument("--distribution", choices=DISTRIBUTIONS, default=S)


def _spectrum_arg(p):
    p.add_argument("--spectrum", default=argparse.SUPPRESS, help="'identity', a JSON file, or inline JSON")


def _dims_args(p):
    p.add_argument("--M", type=int, default=argparse.SUPPRESS)
    p.add_argument("--N", type=int, default=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = _Parser(prog="covspectra", description="Deterministic spectra of sample covariance matrices and Monte Carlo checks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("density", help="limiting density on a grid (rescaled scale)")
    _common(p, False), _spectrum_arg(p)
    p.add_argument("--phi", type=float, default=S)
    p.add_argument("--grid", default=S, help="'lo,hi,n' (default: support span, 401 points)")

    p = sub.add_parser("edges", help="bulk edges on both scales")
    _common(p, False), _spectrum_arg(p)
    p.add_argument("--phi", type=float, default=S)

    p = sub.add_parser("solve", help="Stieltjes transforms at spectral points")
    _common(p, False), _spectrum_arg(p)
    p.add_argument("--phi", type=float, default=S)
    p.add_argument("--z", default=S, help="'E,eta' points separated by ';' (rescaled scale)")

    p = sub.add_parser("simulate", help="sample eigenvalues of W")
    _common(p, True), _spectrum_arg(p), _dims_args(p)
    p.add_argument("--replicas", type=int, default=S)

    p = sub.add_parser("check-global", help="KS distance to the limiting law")
    _common(p, True), _spectrum_arg(p), _dims_args(p)

    p = sub.add_parser("check-local", help="local law along a vertical line")
    _common(p, True), _spectrum_arg(p), _dims_args(p)
    p.add_argument("--E", type=float, default=S, help="probe energy (default: bulk centre)")
    p.add_argument("--etas", default=S, help="comma separated eta values")
    p.add_argument("--replicas", type=int, default=S)

    p = sub.add_parser("check-rigidity", help="eigenvalue rigidity in the top component")
    _common(p, True), _spectrum_arg(p), _dims_args(p)
    p.add_argument("--i-values", dest="i_values", default=S)
    p.add_argument("--replicas", type=int, default=S)

    p = sub.add_parser("check-outside", help="law to the right of the spectrum")
    _common(p, True), _spectrum_arg(p), _dims_args(p)
    p.add_argument("--kappas", default=S)
    p.add_argument("--eta", type=float, default=S)
    p.add_argument("--delta", type=float, default=S)
    p.add_argument("--replicas", type=int, default=S)

    p = sub.add_parser("spikes-estimate", help="Bai-Ding and Mestre spike estimates")
    _common(p, True), _dims_args(p)
    p.add_argument("--alpha", default=S, help="comma separated spike values")
    p.add_argument("--q", default=S, help="comma separated multiplicities (default all 1)")
    p.add_argument("--bulk", default=S, help="bulk spectrum (default identity)")
    p.add_argument("--eigenvalues", default=S, help="CSV of eigenvalues instead of simulating")
    p.add_argument("--phi", type=float, default=S, help="aspect ratio for external eigenvalues")
    p.add_argument("--method", choices=("psi", "gap"), default=S)

    p = sub.add_parser("spikes-rate", help="spike estimation error against N")
    _common(p, True)
    p.add_argument("--alpha", default=S)
    p.add_argument("--phi", type=float, default=S)
    p.add_argument("--N", dest="N_list", default=S, help="comma separated N values")
    p.add_argument("--replicas", type=int, default=S)

    p = sub.add_parser("reproduce-figure", help="eigenvalue histograms for the spike phase diagram")
    _common(p, True)
    p.add_argument("--bins", type=int, default=S)
    return parser


DEFAULTS: dict[str, dict[str, Any]] = {
    "density": {"spectrum": "identity", "phi": 1.0, "grid": None},
    "edges": {"spectrum": "identity", "phi": 1.0},
    "solve": {"spectrum": "identity", "phi": 1.0, "z": None},
    "simulate": {"spectrum": "identity", "M": 400, "N": 400, "replicas": 1},
    "check-global": {"spectrum": "identity", "M": 1000, "N": 1000},
    "check-local": {"spectrum": "identity", "M": 500, "N": 500, "E": None, "etas": None, "replicas": 20},
    "check-rigidity": {"spectrum": "identity", "M": 400, "N": 400, "i_values": "1,2,5,10,20,50", "replicas": 50},
    "check-outside": {
        "spectrum": "identity",
        "M": 500,
        "N": 500,
        "kappas": "0.1,0.2,0.5,1",
        "eta": 1e-6,
        "delta": 0.1,
        "replicas": 20,
    },
    "spikes-estimate": {
        "M": 400,
        "N": 400,
        "alpha": "4",
        "q": None,
        "bulk": "identity",
        "eigenvalues": None,
        "phi": None,
        "method": "psi",
    },
    "spikes-rate": {"alpha": "4", "phi": 1.0, "N_list": "200,400,800,1600,3200", "replicas": 100},
    "reproduce-figure": {"bins": 60},
}
COMMON = {"out": ".", "threads": None, "tau": DEFAULT_TAU}
STOCHASTIC_COMMON = {"seed": None, "distribution": "gaussian"}


def resolve_config(command: str, given: dict[str, Any]) -> dict[str, Any]:
    """Merge defaults, the ``--config`` file and explicit flags, in that order."""
    base = dict(COMMON, **DEFAULTS[command])
    if command in STOCHASTIC or command == "spikes-estimate":
        base.update(STOCHASTIC_COMMON)
    file_cfg: dict[str, Any] = {}
    if "config" in given:
        try:
            file_cfg = json.loads(Path(given["config"]).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {given['config']}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(file_cfg) - set(base))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {unknown}")
    flags = {k: v for k, v in given.items() if k not in ("config", "command")}
    cfg = {**base, **file_cfg, **flags}
    if command in STOCHASTIC and cfg.get("seed") is None:
        raise UsageError(f"{command} requires --seed")
    if cfg.get("threads") is None:
        cfg["threads"] = os.cpu_count() or 1
    return cfg


def _header(command: str, cfg: dict[str, Any]) -> dict[str, Any]:
    return {"command": command, "version": __version__, **{k: v for k, v in cfg.items() if k != "threads"}}


def _outdir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc: dict[str, Any]) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _dims(cfg) -> Dimensions:
    return Dimensions(int(cfg["M"]), int(cfg["N"]))


def _emit_report(name: str, report: LawCheckReport, command: str, cfg, out: Path) -> int:
    header = _header(command, cfg)
    report.to_csv(out / f"{name}.csv", header)
    _write_json(out / f"{name}.json", {"config": header, "report": report.to_json()})
    for g, e, b, ok in zip(report.grid, report.empirical, report.bound, report.row_pass()):
        print(f"{g}\t{e:.6g}\t{b:.6g}\t{'ok' if ok else 'FAIL'}")
    if report.slope is not None:
        print(f"slope {report.slope:.4f}")
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# commands

def cmd_density(cfg, out: Path) -> int:
    pi = _load_spectrum(cfg["spectrum"], cfg["tau"])
    phi = float(cfg["phi"])
    if cfg["grid"] is None:
        sm = support_map(pi, phi)
        lo, hi = sm.components[-1].L_k_rescaled, sm.rightmost_edge
        pad = 0.05 * (hi - lo)
        grid = np.linspace(max(lo - pad, 0.0), hi + pad, 401)
    else:
        lo, hi, n = _floats(cfg["grid"])
        grid = np.linspace(lo, hi, int(n))
    curve = density_curve(grid, pi, phi)
    curve.to_csv(out / "density.csv", json.dumps(_header("density", cfg), sort_keys=True))
    print(f"wrote {len(grid)} points to {out / 'density.csv'}")
    return EXIT_OK


def cmd_edges(cfg, out: Path) -> int:
    pi = _load_spectrum(cfg["spectrum"], cfg["tau"])
    sm = support_map(pi, float(cfg["phi"]))
    rows = []
    for c in sm.components:
        print(f"component {c.k}: o_scale [{c.L_k:.12g}, {c.R_k:.12g}]  rescaled [{c.L_k_rescaled:.12g}, {c.R_k_rescaled:.12g}]")
        rows.append(
            {"k": c.k, "o_scale": [c.L_k, c.R_k], "rescaled": [c.L_k_rescaled, c.R_k_rescaled], "mass_w": c.mass_w}
        )
    print(f"zero mass {sm.zero_mass:.12g}")
    _write_json(
        out / "edges.json",
        {
            "config": _header("edges", cfg),
            "components": rows,
            "critical_points": [None if not np.isfinite(x) else x for x in sm.critical],
            "zero_mass": sm.zero_mass,
        },
    )
    return EXIT_OK


def cmd_solve(cfg, out: Path) -> int:
    if cfg["z"] is None:
        raise UsageError("solve requires --z 'E,eta'")
    pi = _load_spectrum(cfg["spectrum"], cfg["tau"])
    zs = _complex_points(cfg["z"])
    rows = []
    for z in zs:
        sol = solve_m1(z, pi, float(cfg["phi"]))
        print(f"z={z}  m0={complex(sol.m0):.12g}  m1={complex(sol.m1):.12g}  residual={float(sol.residual):.3g}")
        rows.append({"z": z, "m0": complex(sol.m0), "m1": complex(sol.m1), "residual": float(sol.residual)})
    _write_json(out / "solve.json", {"config": _header("solve", cfg), "solutions": rows})
    return EXIT_OK


def cmd_simulate(cfg, out: Path) -> int:
    pi = _load_spectrum(cfg["spectrum"], cfg["tau"])
    spec = SampleSpec(_dims(cfg), pi, cfg["distribution"], int(cfg["seed"]))
    samples = replicate(spec, int(cfg["replicas"]), generate_sample, int(cfg["threads"]))
    for r, s in enumerate(samples):
        path = out / f"eigenvalues_{r:04d}.csv"
        write_eigenvalues(path, s, {**_header("simulate", cfg), "replica": r, "replica_seed": s.seed})
    print(f"wrote {len(samples)} eigenvalue file(s) to {out}")
    return EXIT_OK


def cmd_check_global(cfg, out: Path) -> int:
    pi = _load_spectrum(cfg["spectrum"], cfg["tau"])
    rep = check_global(pi, None, _dims(cfg), cfg["distribution"], int(cfg["seed"]))
    return _emit_report("check_global", rep, "check-global", cfg, out)


def cmd_check_local(cfg, out: Path) -> int:
    pi = _load_spectrum(cfg["spectrum"], cfg["tau"])
    etas = None if cfg["etas"] is None else _floats(cfg["etas"])
    rep = check_local(
        pi, None, _dims(cfg), cfg["E"], etas, int(cfg["replicas"]), int(cfg["seed"]), cfg["distribution"], int(cfg["threads"])
    )
    return _emit_report("check_local", rep, "check-local", cfg, out)


def cmd_check_rigidity(cfg, out: Path) -> int:
    pi = _load_spectrum(cfg["spectrum"], cfg["tau"])
    rep = check_rigidity(
        pi,
        None,
        _dims(cfg),
        int(cfg["replicas"]),
        int(cfg["seed"]),
        i_values=_ints(cfg["i_values"]),
        distribution=cfg["distribution"],
        threads=int(cfg["threads"]),
    )
    return _emit_report("check_rigidity", rep, "check-rigidity", cfg, out)


def cmd_check_outside(cfg, out: Path) -> int:
    pi = _load_spectrum(cfg["spectrum"], cfg["tau"])
    rep = check_outside(
        pi,
        None,
        _dims(cfg),
        _floats(cfg["kappas"]),
        int(cfg["replicas"]),
        int(cfg["seed"]),
        float(cfg["delta"]),
        float(cfg["eta"]),
        cfg["distribution"],
        int(cfg["threads"]),
    )
    return _emit_report("check_outside", rep, "check-outside", cfg, out)


def _spiked_model(cfg, M: int) -> SpikedModel:
    alphas = _floats(cfg["alpha"])
    qs = [1] * len(alphas) if cfg.get("q") is None else _ints(cfg["q"])
    if len(qs) != len(alphas):
        raise UsageError("--alpha and --q must have the same length")
    bulk = _load_spectrum(cfg.get("bulk", "identity"), cfg["tau"])
    return SpikedModel(tuple(zip(alphas, qs)), bulk, M)


def cmd_spikes_estimate(cfg, out: Path) -> int:
    if cfg["eigenvalues"] is not None:
        lam, meta = read_eigenvalues(cfg["eigenvalues"])
        phi = cfg["phi"]
        if phi is None and meta and "M" in meta and "N" in meta:
            phi = meta["M"] / meta["N"]
        if phi is None:
            raise UsageError("external eigenvalues need --phi (or M and N in the file header)")
        M = int(meta["M"]) if meta and "M" in meta else max(2, int(round(float(phi) * len(lam))))
        phi = float(phi)
    else:
        if cfg.get("seed") is None:
            raise UsageError("spikes-estimate requires --seed when simulating")
        dims = _dims(cfg)
        M, phi = dims.M, dims.phi
        model = _spiked_model(cfg, M)
        spec = SampleSpec(dims, spiked_to_full(model), cfg["distribution"], int(cfg["seed"]))
        lam = generate_sample(spec).lambdas
    model = _spiked_model(cfg, M)
    ests = estimate_spikes(lam, model, phi, method=cfg["method"])
    write_estimates(out / "spike_estimates.csv", ests, json.dumps(_header("spikes-estimate", cfg), sort_keys=True))
    for e in ests:
        print(
            f"spike {e.ell}: alpha={e.alpha_true:g}  bai_ding={e.alpha_hat_B:.6g}  mestre={e.alpha_hat_M:.6g}  "
            f"predicted_location={e.predicted_location:.6g}"
        )
    return EXIT_OK


def cmd_spikes_rate(cfg, out: Path) -> int:
    alphas = _floats(cfg["alpha"])
    template = SpikedModel(tuple((a, 1) for a in alphas), identity_spectrum(), 10**6)
    rep = rate_experiment(
        template,
        float(cfg["phi"]),
        _ints(cfg["N_list"]),
        int(cfg["replicas"]),
        int(cfg["seed"]),
        distribution=cfg["distribution"],
        threads=int(cfg["threads"]),
    )
    return _emit_report("spikes_rate", rep, "spikes-rate", cfg, out)


def cmd_reproduce_figure(cfg, out: Path) -> int:
    header = _header("reproduce-figure", cfg)
    for panel, (M, N) in zip("abc", FIGURE_DIMS):
        model = SpikedModel(((4.0, 1),), identity_spectrum(), M)
        spec = SampleSpec(Dimensions(M, N), spiked_to_full(model), cfg["distribution"], int(cfg["seed"]))
        lam = generate_sample(spec).nonzero()
        counts, edges = np.histogram(lam, bins=int(cfg["bins"]))
        width = np.diff(edges)
        dens = counts / (counts.sum() * width)
        path = out / f"figure_{panel}_M{M}_N{N}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# {json.dumps({**header, 'panel': panel, 'M': M, 'N': N}, sort_keys=True)}\n")
            fh.write("bin_lo,bin_hi,count,density\n")
            for lo, hi, c, d in zip(edges[:-1], edges[1:], counts, dens):
                fh.write(f"{lo!r},{hi!r},{int(c)},{d!r}\n")
        print(f"panel {panel}: M={M} N={N} top eigenvalue {lam[0]:.6g} -> {path}")
    return EXIT_OK


COMMANDS: dict[str, Callable[[dict, Path], int]] = {
    "density": cmd_density,
    "edges": cmd_edges,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "check-global": cmd_check_global,
    "check-local": cmd_check_local,
    "check-rigidity": cmd_check_rigidity,
    "check-outside": cmd_check_outside,
    "spikes-estimate": cmd_spikes_estimate,
    "spikes-rate": cmd_spikes_rate,
    "reproduce-figure": cmd_reproduce_figure,
}


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        command = ns.command
        cfg = resolve_config(command, vars(ns))
        out = _outdir(cfg)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[command](cfg, out)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (CovSpectraError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
