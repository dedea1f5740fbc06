"""Command-line front end: spectrum, bethe, verify and scan.

Documents are JSON trees with a schema version; complex numbers are
``[re, im]`` pairs and floats use the shortest repr that round-trips.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import bethe, chain, elliptic, wavefunction
from .chain import ModelParams
from .errors import EllipChainError

SCHEMA_VERSION = "1.0"
ALPHA_RANGE = (0.05, 64.0)
N_RANGE = (3, 16)
MAX_BETHE_M = 5


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    N: int = 6
    M: int = 1
    alpha: float = 1.0
    J: float = 1.0
    tol: float = bethe.TOL
    l_range: tuple | None = None
    n_random: int = 32
    verify: bool = False
    alpha_grid: tuple = ()
    substeps: int = 4
    timings: bool = False
    inject_fault: bool = False
    out: str | None = None
    extra: dict = field(default_factory=dict)

    def params(self, alpha: float | None = None) -> ModelParams:
        return ModelParams(self.N, self.alpha if alpha is None else alpha, self.J)

    def echo(self, command: str) -> dict:
        out = {
            "N": self.N,
            "M": self.M,
            "alpha": self.alpha,
            "J": self.J,
            "tol": self.tol,
            "l_range": None if self.l_range is None else list(self.l_range),
            "n_random": self.n_random,
            "verify": self.verify,
            "lattice_tol": bethe.LATTICE_TOL,
            "null_ratio": bethe.NULL_RATIO,
            "dedup_tol": bethe.DEDUP_TOL,
        }
        if command == "scan":
            out["alpha_grid"] = list(self.alpha_grid)
            out["substeps"] = self.substeps
        return out


# --- parsing and validation ---------------------------------------------------


def parse_l_range(text: str | None):
    """``None``/``full`` for 0..N-1, or ``custom:0,2,5..7`` (ranges inclusive)."""
    if text is None or text == "full":
        return None
    if not text.startswith("custom:"):
        raise ConfigError(f"--l-range must be 'full' or 'custom:...', got {text!r}")
    vals = []
    for tok in text[len("custom:"):].split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            if ".." in tok:
                lo, hi = tok.split("..")
                vals.extend(range(int(lo), int(hi) + 1))
            else:
                vals.append(int(tok))
        except ValueError:
            raise ConfigError(f"bad --l-range entry {tok!r}") from None
    if not vals:
        raise ConfigError("--l-range custom list is empty")
    return tuple(sorted(set(vals)))


def parse_alpha_grid(text: str | None):
    if not text:
        return ()
    try:
        grid = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"bad --alpha-grid {text!r}") from None
    return grid


def _check_alpha(a: float):
    if not (math.isfinite(a) and ALPHA_RANGE[0] <= a <= ALPHA_RANGE[1]):
        raise ConfigError(f"alpha={a!r} outside supported range [{ALPHA_RANGE[0]}, {ALPHA_RANGE[1]}]")


def validate(cfg: RunConfig) -> RunConfig:
    if not N_RANGE[0] <= cfg.N <= N_RANGE[1]:
        raise ConfigError(f"N={cfg.N} outside supported range {N_RANGE}")
    _check_alpha(cfg.alpha)
    if not (math.isfinite(cfg.J) and cfg.J != 0):
        raise ConfigError("J must be finite and non-zero")
    if not 0 < cfg.tol < 1e-3:
        raise ConfigError("tol must lie in (0, 1e-3)")
    if cfg.command == "spectrum" and not 0 <= cfg.M <= cfg.N:
        raise ConfigError(f"M={cfg.M} must lie in [0, N]")
    if cfg.command in ("bethe", "scan"):
        if not 1 <= cfg.M <= min(MAX_BETHE_M, cfg.N // 2):
            raise ConfigError(f"M={cfg.M} must lie in [1, min({MAX_BETHE_M}, N/2)]")
    if cfg.command == "scan":
        if not cfg.alpha_grid:
            raise ConfigError("scan needs --alpha-grid")
        for a in cfg.alpha_grid:
            _check_alpha(a)
    if cfg.n_random < 1:
        raise ConfigError("n-random must be positive")
    return cfg


# --- serialization --------------------------------------------------------------


def _c(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _carr(a) -> list:
    return [_c(v) for v in np.asarray(a).ravel()]


def _finite(x: float):
    x = float(x)
    return x if math.isfinite(x) else None


def spectrum_to_dict(rec: chain.SpectrumRecord) -> dict:
    return {
        "M": rec.M,
        "provenance": rec.provenance,
        "eigenvalues": [float(v) for v in rec.eigenvalues],
        "momentum_labels": [int(k) for k in rec.momentum_labels],
        "highest_weight": [bool(h) for h in rec.highest_weight],
        "raising_norms": [float(v) for v in rec.raising_norms],
        "residuals": [float(v) for v in rec.residuals],
    }


def root_to_dict(r: bethe.BetheRoots, N: int) -> dict:
    return {
        "M": r.M,
        "quantum_numbers": [int(v) for v in r.quantum_numbers],
        "momentum": r.momentum(N) if r.M else 0,
        "p": _carr(r.p),
        "t": _carr(r.t),
        "q": _carr(r.q),
        "q_tilde": _carr(r.q_tilde),
        "f": _carr(r.f),
        "eps": _carr(r.eps),
        "residual_norm": float(r.residual_norm),
        "E_sf": _c(r.E_sf),
        "calE": _c(r.calE),
        "E": _c(r.E),
        "iterations": int(r.iterations),
        "lattice_residual": _finite(r.lattice_residual),
        "raising_norm": _finite(r.raising_norm),
        "reality_class": r.reality_class() if r.M else "vacuum",
    }


def _to_complex(pairs) -> np.ndarray:
    return np.array([complex(a, b) for a, b in pairs], dtype=complex)


def root_from_dict(d: dict) -> bethe.BetheRoots:
    nan = float("nan")
    return bethe.BetheRoots(
        tuple(d["quantum_numbers"]),
        _to_complex(d["p"]),
        _to_complex(d["t"]),
        _to_complex(d["q"]),
        _to_complex(d["q_tilde"]),
        _to_complex(d["f"]),
        _to_complex(d["eps"]),
        d["residual_norm"],
        complex(*d["E_sf"]),
        complex(*d["calE"]),
        complex(*d["E"]),
        d["iterations"],
        lattice_residual=nan if d["lattice_residual"] is None else d["lattice_residual"],
        raising_norm=nan if d["raising_norm"] is None else d["raising_norm"],
    )


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


def write_document(doc: dict, path: str) -> None:
    """Atomic write: temp file in the target directory, then rename."""
    text = dumps(doc)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_document(path: str) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {doc.get('schema_version')!r}")
    return doc


def _document(cfg: RunConfig, command: str) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "params": cfg.echo(command),
        "spectra": [],
        "roots": [],
        "match_report": None,
    }


# --- commands ------------------------------------------------------------------


def cmd_spectrum(cfg: RunConfig) -> dict:
    t0 = time.perf_counter()
    rec = chain.diagonalize(chain.build_hamiltonian(cfg.params(), cfg.M))
    doc = _document(cfg, "spectrum")
    doc["spectra"].append(spectrum_to_dict(rec))
    if cfg.timings:
        doc["timings"] = {"total": time.perf_counter() - t0}
    return doc


def _match_to_dict(rep: bethe.MatchReport, union: bethe.UnionReport | None) -> dict:
    out = {
        "matched": [{"root": i, "level": j, "deviation": d} for i, j, d in rep.matched],
        "unmatched": list(rep.unmatched),
        "quarantined": [{"quantum_numbers": list(r.quantum_numbers), "E": _c(r.E), "reason": why}
                        for r, why in rep.quarantined],
        "null_roots": rep.null_roots,
        "duplicates": rep.duplicates,
        "failures": rep.failures,
        "hw_levels": rep.hw_levels,
        "hw_reached": rep.hw_reached,
        "matched_highest_weight": rep.matched_highest_weight,
        "max_deviation": rep.max_deviation,
        "reality_classes": dict(sorted(rep.classes.items())),
    }
    if union is not None:
        out["union"] = {
            "levels": union.levels,
            "covered": union.covered,
            "complete": union.complete,
            "max_deviation": union.max_deviation,
            "max_raising_norm": union.max_raising_norm,
            "assignment": [{"M": a, "root": i, "level": j, "deviation": d} for a, i, j, d in union.assignment],
            "extra": [{"M": a, "root": i} for a, i in union.extra],
        }
    return out


def _bethe_at(cfg: RunConfig, alpha: float | None = None) -> dict:
    t0 = time.perf_counter()
    params = cfg.params(alpha)
    doc = _document(cfg, "bethe")
    doc["params"]["alpha"] = params.alpha
    if cfg.verify:
        spec = chain.diagonalize(chain.build_hamiltonian(params, cfg.M))
        union = bethe.union_match(params, cfg.M, cfg.l_range, cfg.n_random, spectrum=spec)
        rep = bethe.enumerate_and_match(params, cfg.M, cfg.l_range, cfg.n_random, spectrum=spec)
        doc["spectra"].append(spectrum_to_dict(spec))
        roots = [r for Mp in sorted(union.roots) for r in union.roots[Mp]]
        doc["match_report"] = _match_to_dict(rep, union)
    else:
        roots = [bethe.vacuum_root(params)]
        for Mp in range(1, cfg.M + 1):
            roots += bethe.find_roots(params, Mp, cfg.l_range, cfg.n_random, cfg.tol)[0]
    doc["roots"] = [root_to_dict(r, cfg.N) for r in roots]
    if cfg.timings:
        doc["timings"] = {"total": time.perf_counter() - t0}
    return doc


def cmd_bethe(cfg: RunConfig) -> dict:
    """Roots for every M' <= M (the vacuum included), with an ED match report under ``--verify``."""
    return _bethe_at(cfg)


def _level_spacing(eigs: np.ndarray) -> float:
    lv = np.unique(np.round(np.sort(eigs), 9))
    return float(np.median(np.diff(lv))) if len(lv) > 1 else 1.0


def cmd_scan(cfg: RunConfig) -> dict:
    """One bethe document per grid point plus level trajectories by continuation.

    Trajectories start from the roots at the first grid point; a branch that
    hits a degenerate point is closed, and any root found at a later grid
    point that no live trajectory accounts for opens a new one.
    """
    t0 = time.perf_counter()
    grid = list(cfg.alpha_grid)
    points = [_bethe_at(cfg, a) for a in grid]

    def fresh(a):
        return bethe.find_roots(cfg.params(a), cfg.M, cfg.l_range, cfg.n_random, cfg.tol)[0]

    def new_traj(r, a):
        return {"quantum_numbers": list(r.quantum_numbers), "alphas": [a], "energies": [float(r.E.real)],
                "lost_at": None, "max_jump_ratio": 0.0}

    start = fresh(grid[0])
    traj = [new_traj(r, grid[0]) for r in start]
    current = list(start)
    for a_prev, a in zip(grid[:-1], grid[1:]):
        live = [i for i, r in enumerate(current) if r is not None]
        new, alphas, E = bethe.continue_roots([current[i] for i in live], cfg.params(a_prev), a, cfg.substeps, cfg.tol)
        spacing = [_level_spacing(chain.diagonalize(chain.build_hamiltonian(cfg.params(float(x)), cfg.M)).eigenvalues)
                   for x in alphas]
        for k, i in enumerate(live):
            for s in range(1, len(alphas)):
                if not np.isfinite(E[k, s]):
                    break
                ratio = abs(E[k, s] - E[k, s - 1]) / min(spacing[s - 1], spacing[s])
                traj[i]["max_jump_ratio"] = max(traj[i]["max_jump_ratio"], float(ratio))
            if new[k] is None:
                traj[i]["lost_at"] = a
                current[i] = None
            else:
                traj[i]["alphas"].append(a)
                traj[i]["energies"].append(float(new[k].E.real))
                current[i] = new[k]
        tracked = [r for r in current if r is not None]
        for r in fresh(a):
            if not bethe._in_span(r, tracked, cfg.N):
                traj.append(new_traj(r, a))
                current.append(r)
                tracked.append(r)
    summary = {
        "trajectories": traj,
        "continuous": all(t["max_jump_ratio"] <= 10.0 for t in traj),
        "lost": sum(t["lost_at"] is not None for t in traj),
    }
    big = max(grid)
    if big >= 8:
        j = np.arange(1, cfg.N)
        h = elliptic.h_exchange(j, cfg.N, big)
        trig = (math.pi / cfg.N) ** 2 / np.sin(math.pi * j / cfg.N) ** 2
        summary["trigonometric_limit"] = {"alpha": big, "max_relative_deviation": float(np.max(np.abs(h / trig - 1)))}
    doc = _document(cfg, "scan")
    doc["points"] = points
    doc["summary"] = summary
    if cfg.timings:
        doc["timings"] = {"total": time.perf_counter() - t0}
    return doc


# --- verify ----------------------------------------------------------------------


class _FaultyParams(ModelParams):
    """Negative control: nearest-neighbour exchange off by one part in a thousand."""

    def exchange(self) -> np.ndarray:
        h = super().exchange()
        h[1] *= 1.001
        h[-1] *= 1.001
        return h


def _verify_checks(cfg: RunConfig):
    N, alpha = cfg.N, cfg.alpha
    params = (_FaultyParams if cfg.inject_fault else ModelParams)(N, alpha, cfg.J)
    checks = []

    def check(name, ok, detail):
        checks.append((name, bool(ok), detail))

    worst = max(elliptic.legendre_defect(chain._context(n, a))
                for n in (4, 6, 8, 12) for a in (0.25, 0.5, 1.0, 2.0, 8.0))
    check("legendre relation", worst < 1e-10, f"max defect {worst:.2e}")

    ctx = params.ctx_N()
    rng = np.random.default_rng(0)
    z = (rng.uniform(0.1, 0.9, 8) * N + 1j * rng.uniform(0.1, 0.9, 8) * alpha).astype(complex)
    h = 1e-4
    fd = (elliptic.wzeta(z + h, ctx) - elliptic.wzeta(z - h, ctx)) / (2 * h)
    err = float(np.max(np.abs(fd + elliptic.wp(z, ctx)) / np.maximum(1.0, np.abs(elliptic.wp(z, ctx)))))
    check("zeta' = -wp", err < 1e-7, f"max rel err {err:.2e}")

    worst = 0.0
    for per, eta in ((ctx.omega1, ctx.eta1), (ctx.omega2, ctx.eta2)):
        lhs = ctx._log_sigma(z + per) - ctx._log_sigma(z)
        rhs = 1j * math.pi + 2 * eta * (z + per / 2)
        d = lhs - rhs
        d = d - 2j * math.pi * np.round(d.imag / (2 * math.pi))
        worst = max(worst, float(np.max(np.abs(d))))
    check("sigma quasi-periodicity", worst < 1e-10, f"max log defect {worst:.2e}")

    prev = None
    ed_ok, details = True, []
    for M in range(0, min(3, N // 2) + 1):
        Hs = chain.build_hamiltonian(params, M)
        H = Hs.matrix
        T = chain.translation_matrix(Hs.basis, Hs.index, N)
        w = np.linalg.eigvalsh(H)
        sym = float(np.max(np.abs(H - H.T)))
        comm = float(np.max(np.abs(H @ T - T @ H)))
        ok = sym < 1e-12 and comm < 1e-10 and (cfg.J < 0 or np.max(w) < 1e-10)
        if prev is not None:
            incl = max(float(np.min(np.abs(w - e))) for e in prev)
            ok = ok and incl < 1e-9
        ed_ok &= ok
        details.append(f"M={M}:{'ok' if ok else 'FAIL'}")
        prev = w
    check("ED invariants", ed_ok, " ".join(details))

    u1 = bethe.union_match(params, 1, spectrum=chain.diagonalize(chain.build_hamiltonian(params, 1)))
    check("one-magnon Bethe vs ED", u1.complete and u1.max_deviation < 1e-8,
          f"{u1.covered}/{u1.levels} levels, max dev {u1.max_deviation:.1e}")

    u2 = bethe.union_match(params, 2, spectrum=chain.diagonalize(chain.build_hamiltonian(params, 2)))
    check("two-magnon union vs ED", u2.complete and u2.max_deviation < 1e-7,
          f"{u2.covered}/{u2.levels} levels, max dev {u2.max_deviation:.1e}")

    roots2 = u2.roots.get(2, [])
    res = max((r.lattice_residual for r in roots2), default=float("inf"))
    check("root lattice residuals", res < bethe.LATTICE_TOL, f"max {res:.1e} over {len(roots2)} roots")

    worst = float("inf")
    if roots2:
        worst = 0.0
        for r in roots2:
            cp = bethe.ansatz_for(r, params).chi_params
            x0 = wavefunction.reference_point(2, N)
            for b in range(2):
                qe = wavefunction.extract_bloch_q(cp, b, x0, n_sub=16)
                d = qe - r.q[b]
                d = complex((d.real + 0.5) % 1.0 - 0.5, d.imag)
                worst = max(worst, abs(d))
    check("Bloch exponents", worst < 1e-6, f"max |q_extracted - q| {worst:.1e}")
    return checks


def cmd_verify(cfg: RunConfig) -> tuple[int, dict]:
    checks = _verify_checks(cfg)
    doc = _document(cfg, "verify")
    doc["checks"] = [{"name": n, "pass": ok, "detail": d} for n, ok, d in checks]
    return (0 if all(ok for _, ok, _ in checks) else 1), doc


# --- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ellipchain", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, m_default):
        p.add_argument("--n", type=int, default=6, help="number of sites")
        p.add_argument("--m", type=int, default=m_default, help="number of magnons")
        p.add_argument("--alpha", type=float, default=1.0, help="imaginary period")
        p.add_argument("--j", type=float, default=1.0, help="coupling J")
        p.add_argument("--tol", type=float, default=bethe.TOL, help="solver residual tolerance")
        p.add_argument("--out", help="output document path")
        p.add_argument("--timings", action="store_true", help="record wall times (breaks bit-identical output)")

    p = sub.add_parser("spectrum", help="exact diagonalization of one sector")
    common(p, 1)
    for name in ("bethe", "scan"):
        p = sub.add_parser(name, help="Bethe roots" if name == "bethe" else "continuation over an alpha grid")
        common(p, 2)
        p.add_argument("--verify", action="store_true", help="match against ED")
        p.add_argument("--l-range", default=None, help="'full' or 'custom:0,1,4..6'")
        p.add_argument("--n-random", type=int, default=32, help="Sobol seeds per family and label tuple")
        if name == "scan":
            p.add_argument("--alpha-grid", required=True, help="comma-separated alphas, continuation order")
            p.add_argument("--substeps", type=int, default=4)
    p = sub.add_parser("verify", help="run the invariant suite")
    common(p, 2)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return parser


def config_from_args(ns) -> RunConfig:
    return validate(RunConfig(
        command=ns.command,
        N=ns.n,
        M=ns.m,
        alpha=ns.alpha,
        J=ns.j,
        tol=ns.tol,
        l_range=parse_l_range(getattr(ns, "l_range", None)),
        n_random=getattr(ns, "n_random", 32),
        verify=getattr(ns, "verify", False) or ns.command == "scan",
        alpha_grid=parse_alpha_grid(getattr(ns, "alpha_grid", None)),
        substeps=getattr(ns, "substeps", 4),
        timings=ns.timings,
        inject_fault=getattr(ns, "inject_fault", False),
        out=ns.out,
    ))


def _print_table(doc: dict, out) -> None:
    cmd = doc["command"]
    if cmd == "spectrum":
        s = doc["spectra"][0]
        print(f"{'E':>22} {'k':>3} {'hw':>3}", file=out)
        for e, k, h in zip(s["eigenvalues"], s["momentum_labels"], s["highest_weight"]):
            print(f"{e:22.14f} {k:3d} {'*' if h else '':>3}", file=out)
    elif cmd == "bethe":
        print(f"{'M':>2} {'l':>14} {'K':>3} {'E':>22} {'class':>8}", file=out)
        for r in doc["roots"]:
            print(f"{r['M']:2d} {str(tuple(r['quantum_numbers'])):>14} {r['momentum']:3d} "
                  f"{r['E'][0]:22.14f} {r['reality_class']:>8}", file=out)
        rep = doc["match_report"]
        if rep:
            print(f"highest weight reached {rep['hw_reached']}/{rep['hw_levels']}, "
                  f"max deviation {rep['max_deviation']:.2e}", file=out)
            u = rep["union"]
            print(f"union over M' <= M covers {u['covered']}/{u['levels']} levels", file=out)
    elif cmd == "verify":
        for c in doc["checks"]:
            print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']:<28} {c['detail']}", file=out)
    elif cmd == "scan":
        s = doc["summary"]
        for t in s["trajectories"]:
            es = " ".join(f"{e:.6f}" for e in t["energies"])
            print(f"{str(tuple(t['quantum_numbers'])):>12}  {es}", file=out)
        print(f"continuous: {s['continuous']}, lost: {s['lost']}", file=out)


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except (ConfigError, ValueError) as exc:
        parser.error(str(exc))
    status = 0
    try:
        if cfg.command == "spectrum":
            doc = cmd_spectrum(cfg)
        elif cfg.command == "bethe":
            doc = cmd_bethe(cfg)
        elif cfg.command == "scan":
            doc = cmd_scan(cfg)
        else:
            status, doc = cmd_verify(cfg)
        _print_table(doc, sys.stdout)
        if cfg.out:
            write_document(doc, cfg.out)
    except (EllipChainError, OSError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything else is an infrastructure failure too
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return status


if __name__ == "__main__":
    sys.exit(main())
