"""Config-driven experiment runner.

    conesaddle <subcommand> --config run.ini --out results/ [--threads k] [--seed n]

Subcommands: layer, saddle, maximal, asymptotics, stability, hardy, all.
The config is an INI file with one section per subcommand; every key has a
default, and unknown sections or keys are rejected.  Exit status is 0 on
success, 2 on a bad config or invalid input, 3 when a solver fails to
converge.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import platform
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import io
from .analysis import asymptotic_report, gradient_decay_check, monotonicity_report
from .errors import ConeSaddleError, ConvergenceError
from .layer import pn_closed_form, solve_layer
from .maximal import barrier_domination, maximality_check, monotone_iterate
from .model import GridSpec2, GridSpec3, make_nonlinearity
from .saddle import cylinder_region, discrete_energy, minimize_energy, odd_reflect, reflected_state
from .stability import (comparison_monotonicity, hardy_report, instability_search, log_sine,
                        random_perturbation, rayleigh_profile, sin_bump)

log = logging.getLogger("conesaddle")

SUBCOMMANDS = ("layer", "saddle", "maximal", "asymptotics", "stability", "hardy")

_floats = "floats"
_ints = "ints"
_strs = "strs"

# section -> key -> (type, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "layer": {"kind": (str, "peierls_nabarro"), "x_max": (float, 20.0), "lambda_max": (float, 40.0),
              "h": (float, 0.05), "tol": (float, 1e-10), "error_tol": (float, 5e-3),
              "refine": (bool, False)},
    "saddle": {"kind": (str, "allen_cahn"), "m": (int, 1), "R": (float, 20.0), "L": (float, 0.0),
               "h": (float, 0.5), "tol": (float, 1e-10), "energy_radii": (_floats, [5.0, 10.0])},
    "maximal": {"kind": (str, "allen_cahn"), "m": (int, 2), "R": (float, 20.0), "L": (float, 20.0),
                "h": (float, 0.5), "tol": (float, 1e-8), "compare_minimizer": (bool, False)},
    "asymptotics": {"kind": (str, "allen_cahn"), "m": (int, 1), "R": (float, 48.0), "L": (float, 48.0),
                    "h": (float, 0.5), "radii": (_floats, [10.0, 20.0]), "band": (float, 1.0)},
    "stability": {"kind": (str, "allen_cahn"), "m": (int, 2), "R": (float, 48.0), "L": (float, 40.0),
                  "h": (float, 1.0), "a": (_floats, [0.25, 0.5]), "N": (_floats, [10.0, 20.0]),
                  "phi": (_strs, ["log_sine:0.5:40", "log_sine:0.5:20", "sin_bump:1:9"]),
                  "margin": (float, 1e-4), "random_samples": (int, 0)},
    "hardy": {"n": (_ints, [4, 6, 8]), "rho_min": (float, 1e-3), "rho_max": (float, 1e3),
              "nodes": (int, 4000)},
}


class ConfigError(ConeSaddleError, ValueError):
    pass


def _key_line(text: str, section: str, key: str) -> int:
    cur = None
    for n, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            cur = m.group(1).strip()
        elif cur == section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line, re.IGNORECASE):
            return n
    return 0


def _convert(kind, raw: str):
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == _floats:
        return [float(x) for x in raw.split(",") if x.strip()]
    if kind == _ints:
        return [int(x) for x in raw.split(",") if x.strip()]
    if kind == _strs:
        return [x.strip() for x in raw.split(",") if x.strip()]
    return kind(raw.strip())


@dataclass
class Config:
    sections: dict
    present: set
    path: str

    def __getitem__(self, name):
        return self.sections[name]


def load_config(path) -> Config:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError(f"{path}:{e.lineno}: key outside any section: {e.line.strip()!r}") from None
    except configparser.ParsingError as e:
        lines = ", ".join(f"{ln}: {ln_text.strip()!r}" for ln, ln_text in e.errors)
        raise ConfigError(f"{path}: cannot parse line(s) {lines}") from None
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    sections = {}
    for name in cp.sections():
        if name not in SCHEMA:
            line = next((n for n, l in enumerate(text.splitlines(), 1) if l.strip() == f"[{name}]"), 0)
            raise ConfigError(f"{path}:{line}: unknown section [{name}]")
    for name, keys in SCHEMA.items():
        vals = {k: d for k, (_, d) in keys.items()}
        if cp.has_section(name):
            lower = {k.lower(): k for k in keys}
            for k, raw in cp.items(name):
                if k.lower() not in lower:
                    raise ConfigError(f"{path}:{_key_line(text, name, k)}: unknown key '{k}' in [{name}]")
                key = lower[k.lower()]
                try:
                    vals[key] = _convert(keys[key][0], raw)
                except ValueError as e:
                    raise ConfigError(f"{path}:{_key_line(text, name, k)}: bad value for {name}.{key}: {e}") from None
        sections[name] = vals
    return Config(sections, set(cp.sections()), str(path))


# --------------------------------------------------------------------------
# pipelines; each returns a summary dict and writes its own files


def run_layer(cfg: dict, out: Path, seed: int) -> dict:
    nl = make_nonlinearity(cfg["kind"])
    h = cfg["h"]
    res = {}
    g = GridSpec2(cfg["x_max"], cfg["lambda_max"], h, h)
    prof = solve_layer(nl, g, tol=cfg["tol"])
    io.write_layer(out / "layer.csv", prof)
    res["slope_at_zero"] = prof.slope_at_zero()
    res["u0_at_x_max"] = float(prof.u0[-1])
    if cfg["kind"] == "peierls_nabarro":
        err = float(np.max(np.abs(prof.u0 - pn_closed_form(g.x, 0.0))))
        res["sup_closed_form_error"] = err
        res["verdicts"] = {"closed_form": "pass" if err <= cfg["error_tol"] else "fail"}
        if cfg["refine"]:
            g2 = g.refined()
            p2 = solve_layer(nl, g2, tol=cfg["tol"])
            err2 = float(np.max(np.abs(p2.u0 - pn_closed_form(g2.x, 0.0))))
            res["refined_error"] = err2
            res["refinement_ratio"] = err / err2
            res["verdicts"]["refinement"] = "pass" if err / err2 >= 3 else "fail"
    return res


def _energy_rows(state, nl, radii):
    full = reflected_state(state).v
    zero = full.with_values(np.zeros(full.grid.shape))
    rows = []
    for S in radii:
        reg = cylinder_region(full.grid, S, min(S, full.grid.lambda_max))
        rows.append({"S": S, "energy": discrete_energy(full, None, reg, nl),
                     "energy_zero": discrete_energy(zero, None, reg, nl)})
    return rows


def run_saddle(cfg: dict, out: Path, seed: int) -> dict:
    nl = make_nonlinearity(cfg["kind"])
    m, R, h = cfg["m"], cfg["R"], cfg["h"]
    L = cfg["L"] if cfg["L"] > 0 else R**0.75
    st = minimize_energy(nl, m, R, L, h=h, tol=cfg["tol"])
    io.write_field(out / "saddle_field.csv", odd_reflect(st), {"nonlinearity": nl.kind, "R": R, "L": st.L})
    io.write_table(out / "saddle_energy_history.csv", ["iteration", "energy"], enumerate(st.energy_history))
    rows = _energy_rows(st, nl, cfg["energy_radii"])
    io.write_table(out / "saddle_energies.csv", ["S", "energy", "energy_zero"], rows)
    res = st.summary()
    res["el_residual"] = st.el_residual
    res["energies"] = rows
    res["verdicts"] = {"below_zero_field": "pass" if all(r["energy"] < r["energy_zero"] for r in rows) else "fail"}
    return res


def run_maximal(cfg: dict, out: Path, seed: int) -> dict:
    nl = make_nonlinearity(cfg["kind"])
    m, R, L, h = cfg["m"], cfg["R"], cfg["L"], cfg["h"]
    st = monotone_iterate(nl, m, R, L, h=h, tol=cfg["tol"])
    io.write_field(out / "maximal_field.csv", st.v, {"nonlinearity": nl.kind, "K": st.K, "a": st.a})
    io.write_table(out / "maximal_record.csv", ["j", "sup_diff", "min", "max"], st.record())
    mono = monotonicity_report(st.v)
    res = {"m": m, "R": R, "L": L, "h": h, "K": st.K, "a": st.a, "iterations": st.iterations,
           "max_increase": float(st.iterates_violation.max()), "final_sup_diff": float(st.iterates_sup_diff[-1]),
           "barrier_excess": barrier_domination(st), "monotonicity": mono.as_dict()}
    verdicts = {"nonincreasing": "pass" if res["max_increase"] <= 1e-12 else "fail",
                "dominated_by_barrier": "pass" if res["barrier_excess"] <= 1e-12 else "fail",
                "monotonicity_signs": "pass" if mono.passes() else "fail"}
    if cfg["compare_minimizer"]:
        sad = minimize_energy(nl, m, R, R**0.75, grid=st.v.grid)
        gap = maximality_check(st, sad)
        res["maximality"] = gap
        verdicts["maximality"] = "pass" if gap["min_gap"] >= -1e-6 else "fail"
    res["verdicts"] = verdicts
    return res


def run_asymptotics(cfg: dict, out: Path, seed: int) -> dict:
    nl = make_nonlinearity(cfg["kind"])
    st = monotone_iterate(nl, cfg["m"], cfg["R"], cfg["L"], h=cfg["h"])
    rows = asymptotic_report(st.v, st.barrier.layer, cfg["radii"], cfg["band"])
    io.write_table(out / "asymptotics.csv", ["R", "sup_u_dev", "sup_grad_dev"], rows)
    prof = gradient_decay_check(odd_reflect(st.v))
    io.write_table(out / "gradient_decay.csv", ["lambda", "sup_grad"], zip(prof.lam, prof.sup_grad))
    dec = all(b["sup_u_dev"] < a["sup_u_dev"] and b["sup_grad_dev"] < a["sup_grad_dev"]
              for a, b in zip(rows, rows[1:]))
    return {"rows": rows, "gradient_C": prof.C, "verdicts": {"deviation_decreases": "pass" if dec else "fail"}}


def parse_phi(spec: str, m: int):
    try:
        kind, r1, r2 = spec.split(":")
        r1, r2 = float(r1), float(r2)
    except ValueError:
        raise ConfigError(f"phi entry {spec!r} must look like kind:rho1:rho2") from None
    makers = {"log_sine": lambda: log_sine(m, r1, r2), "sin_bump": lambda: sin_bump(r1, r2),
              "rayleigh": lambda: rayleigh_profile(m, r1, r2)}
    if kind not in makers:
        raise ConfigError(f"unknown phi kind {kind!r} (expected one of {sorted(makers)})")
    return (spec, makers[kind](), r1, r2)


def run_stability(cfg: dict, out: Path, seed: int) -> dict:
    nl = make_nonlinearity(cfg["kind"])
    m = cfg["m"]
    family = [parse_phi(p, m) for p in cfg["phi"]]
    st = monotone_iterate(nl, m, cfg["R"], cfg["L"], h=cfg["h"])
    vbar = odd_reflect(st.v)
    rep = instability_search(vbar, nl, m, cfg["a"], cfg["N"], family, margin=cfg["margin"])
    io.write_table(out / "stability.csv", ["a", "N", "phi_id", "Q", "Q_scaled"], rep.table)
    res = rep.as_dict()
    res["verdicts"] = {"instability": rep.verdict}
    if cfg["random_samples"] > 0:
        rng = np.random.default_rng(seed)
        g = vbar.grid
        xis = [random_perturbation(g, rng) for _ in range(cfg["random_samples"])]
        w = vbar.with_values(st.barrier.on_grid(g, odd=True))
        cmp_ = comparison_monotonicity(vbar, w, nl, xis)
        res["comparison"] = {"max_excess": cmp_["max_excess"], "holds": cmp_["holds"]}
        res["verdicts"]["comparison"] = "pass" if cmp_["holds"] else "fail"
    return res


def run_hardy(cfg: dict, out: Path, seed: int) -> dict:
    reps = [hardy_report(n, cfg["rho_min"], cfg["rho_max"], cfg["nodes"]) for n in cfg["n"]]
    io.write_table(out / "hardy.csv", ["n", "m", "rayleigh_min", "potential", "criterion"],
                   [r.as_dict() for r in reps])
    return {"reports": [r.as_dict() for r in reps],
            "verdicts": {f"n={r.n}": r.criterion for r in reps}}


PIPELINES = {"layer": run_layer, "saddle": run_saddle, "maximal": run_maximal,
             "asymptotics": run_asymptotics, "stability": run_stability, "hardy": run_hardy}


def _versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"package": pkg, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def run(subcommand: str, config_path, out_dir, threads: int = 1, seed: int = 0) -> int:
    """Run one pipeline (or every configured one for ``all``); return the exit status."""
    t0 = time.perf_counter()
    try:
        cfg = load_config(config_path)
    except ConfigError as e:
        log.error("%s", e)
        return 2
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if subcommand == "all":
        names = [n for n in SUBCOMMANDS if n in cfg.present] or list(SUBCOMMANDS)
    else:
        names = [subcommand]

    def one(name):
        t = time.perf_counter()
        res = PIPELINES[name](cfg[name], out, seed)
        res["wall_time_s"] = time.perf_counter() - t
        return name, res

    summary = {"subcommand": subcommand, "config": {n: cfg[n] for n in names}, "config_path": cfg.path,
               "seed": seed, "versions": _versions(), "results": {}}
    status = 0
    try:
        if threads > 1 and len(names) > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                done = list(ex.map(one, names))
        else:
            done = [one(n) for n in names]
        for name, res in done:
            summary["results"][name] = res
        summary["verdicts"] = {n: r.get("verdicts", {}) for n, r in summary["results"].items()}
    except ConvergenceError as e:
        log.error("convergence failure: %s", e)
        summary["error"] = {"type": "convergence", "message": str(e)}
        status = 3
    except ValueError as e:
        log.error("invalid input: %s", e)
        summary["error"] = {"type": "validation", "message": str(e)}
        status = 2
    summary["status"] = status
    summary["wall_time_s"] = time.perf_counter() - t0
    io.write_summary(out / f"summary_{subcommand}.json", summary)
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conesaddle", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS + ("all",))
    p.add_argument("--config", required=True, help="INI file; see README for the keys")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="pipelines run concurrently under 'all'")
    p.add_argument("--seed", type=int, default=0, help="seed for random test functions")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        log.error("--threads must be at least 1")
        return 2
    return run(args.subcommand, args.config, args.out, args.threads, args.seed)


if __name__ == "__main__":
    sys.exit(main())
