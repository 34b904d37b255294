"""Command-line front end.

Every subcommand reads the same run configuration: rates, capacity,
tolerance, caps, seed, output format and path. Values come from, in
increasing precedence, built-in defaults, a ``key=value`` config file
(``--config``) and command-line flags. ``TANDEMQBD_OUTPUT_DIR`` overrides
only the directory that output files are written to.

Exit codes: 0 ok, 1 validation failure, 2 bad configuration,
3 instability (or a fixed-point iteration that does not settle),
4 infeasible target decay rate.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, fields
from importlib import resources

import numpy as np

from . import __version__
from .control import InfeasibleTarget, build_modified_blocks, design_arrival_rates, design_removal_rates, verify_product_form
from .hitting import hitting_decay_estimate, is_irreducible_on_support, solve_H, support
from .invariant import classify, ell1_sum, solve_w
from .model import (
    Capacity,
    InstabilityError,
    ModelError,
    TandemParams,
    build_blocks,
    compute_eta,
    require_stable,
    spectral_report,
)
from .orthopoly import compute_zhat
from .qbd import ConvergenceError, eigen_spectrum, match_multisets, nonzero_eigenvalues, solve_R
from .validate import CRITERIA, ValidationOptions, run_all

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_UNSTABLE, EXIT_INFEASIBLE = 0, 1, 2, 3, 4
OUTPUT_DIR_ENV = "TANDEMQBD_OUTPUT_DIR"
SCHEMA_VERSION = "1.0"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    lam: float = None
    mu1: float = None
    mu2: float = None
    capacity: str = "inf"
    tol: float = 1e-13
    phase_cap: int = None
    level_cap: int = None
    k_max: int = 200
    m_max: int = 30
    seed: int = 20240601
    format: str = "json"
    output: str = None
    backend: str = None

    def params(self):
        for name in ("lam", "mu1", "mu2"):
            if getattr(self, name) is None:
                raise ConfigError(f"missing required rate {name!r}")
        return TandemParams(self.lam, self.mu1, self.mu2, parse_capacity(self.capacity))


# config-file key -> RunConfig field; flags use the same names with dashes
KEY_ALIASES = {"lambda": "lam", "lam": "lam", "k": "k_max"}
_CASTS = {
    "lam": float, "mu1": float, "mu2": float, "capacity": str, "tol": float,
    "phase_cap": int, "level_cap": int, "k_max": int, "m_max": int, "seed": int,
    "format": str, "output": str, "backend": str,
}


def parse_capacity(text):
    text = str(text).strip().lower()
    if text in ("inf", "infinite", "infinity", "none"):
        return Capacity.INFINITE
    try:
        m = int(text)
    except ValueError:
        raise ConfigError(f"capacity must be a positive integer or 'inf', got {text!r}") from None
    if m < 1:
        raise ConfigError(f"capacity must be >= 1, got {m}")
    return m


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_").lower()
        key = KEY_ALIASES.get(key, key)
        if key not in _CASTS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def build_config(ns):
    """Merge defaults < config file < flags into a :class:`RunConfig`."""
    raw = read_config_file(ns.config) if ns.config else {}
    for f in fields(RunConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            raw[f.name] = v
    cfg = RunConfig()
    for key, value in raw.items():
        try:
            setattr(cfg, key, _CASTS[key](value))
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key}: {value!r}") from None
    if cfg.format not in ("json", "csv"):
        raise ConfigError(f"format must be json or csv, got {cfg.format!r}")
    if cfg.backend not in (None, "numba", "numpy"):
        raise ConfigError(f"backend must be numba or numpy, got {cfg.backend!r}")
    if not (cfg.tol > 0 and math.isfinite(cfg.tol)):
        raise ConfigError("tol must be a positive number")
    for name in ("phase_cap", "level_cap", "k_max", "m_max"):
        v = getattr(cfg, name)
        if v is not None and v < 1:
            raise ConfigError(f"{name} must be >= 1")
    return cfg


def output_path(cfg, command):
    """Resolved output file, or ``None`` for stdout."""
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if cfg.output is None and not env_dir:
        return None
    ext = "csv" if cfg.format == "csv" else "json"
    name = os.path.basename(cfg.output) if cfg.output else f"{command}.{ext}"
    directory = env_dir if env_dir else os.path.dirname(cfg.output)
    return os.path.join(directory, name) if directory else name


def _num(x):
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": _num(x.real), "im": _num(x.imag)}
    x = float(x)
    return x if math.isfinite(x) else None


def _matrix(a):
    return [[_num(v) for v in row] for row in np.asarray(a)]


def _eigs(values):
    return [{"re": _num(np.real(v)), "im": _num(np.imag(v))} for v in values]


def _params_dict(p):
    return {"lambda": p.lam, "mu1": p.mu1, "mu2": p.mu2, "capacity": "inf" if p.is_infinite else p.capacity}


def _blocks_for(cfg, params, default_cap=40):
    """Exact blocks for finite capacity, a phase-capped surrogate otherwise."""
    if params.is_infinite:
        cap = cfg.phase_cap or default_cap
        return build_blocks(params, cap), cap
    if cfg.phase_cap is not None and cfg.phase_cap != params.capacity:
        raise ConfigError("phase-cap must equal the finite capacity (or be omitted)")
    return build_blocks(params), params.capacity


def cmd_spectral(cfg, ns):
    params = cfg.params()
    rep = spectral_report(params)
    return EXIT_OK, {"params": _params_dict(params), **rep.to_dict()}


def _zhat_rows(cfg, params):
    eta = compute_eta(params)
    limit, name = (eta, "eta") if params.mu1 <= params.mu2 else (params.rho2, "rho2")
    rows = []
    for m in range(1, cfg.m_max + 1):
        row = {"m": m, "zhat": None, "limit": limit, "limit_name": name, "gap": None, "error": ""}
        try:
            z = compute_zhat(params.with_capacity(m), m, backend=cfg.backend)
            row.update(zhat=z, gap=abs(z - limit))
        except (ModelError, ArithmeticError) as exc:
            row["error"] = str(exc)
        rows.append(row)
    return rows


def cmd_sweep_zhat(cfg, ns):
    params = cfg.params()
    if not params.is_infinite:
        raise ConfigError("sweep-zhat varies the capacity itself; leave capacity as inf")
    if not params.lam < min(params.mu1, params.mu2):
        raise InstabilityError("the limit of the sweep needs lambda < min(mu1, mu2)")
    rows = _zhat_rows(cfg, params)
    good = [r["zhat"] for r in rows if r["zhat"] is not None]
    mono = bool(np.all(np.diff(good) > 0))
    return EXIT_OK, {"params": _params_dict(params), "rows": rows, "monotone": mono}


def cmd_design(cfg, ns):
    params = cfg.params()
    if not params.is_infinite:
        raise ConfigError("designs apply to the infinite waiting room; leave capacity as inf")
    require_stable(params)
    if ns.z is None:
        raise ConfigError("design needs --z")
    phase_cap = cfg.phase_cap or 400
    level_cap = cfg.level_cap or 120
    make = design_arrival_rates if ns.kind == "arrival" else design_removal_rates
    design = make(params, ns.z, phase_cap)
    rep = verify_product_form(build_modified_blocks(params, design), ns.z, design.w.w, level_cap, backend=cfg.backend)
    return EXIT_OK, {
        "params": _params_dict(params),
        "kind": design.kind.value,
        "target_z": ns.z,
        "phase_cap": phase_cap,
        "level_cap": level_cap,
        "rates": [_num(v) for v in design.rates],
        "verification": {
            "measured_decay": rep.measured_decay,
            "decay_error": abs(rep.measured_decay - ns.z),
            "max_rel_deviation": rep.max_rel_deviation,
            "fitted_c": rep.fitted_c,
            "level_window": list(rep.level_window),
            "phase_window": list(rep.phase_window),
            "residual": rep.residual,
        },
        "notes": design.notes,
    }


def cmd_validate(cfg, ns):
    opts = ValidationOptions(tol=cfg.tol, seed=cfg.seed, backend=cfg.backend, hitting_K=cfg.k_max)
    if cfg.phase_cap is not None:
        opts.design_phase_cap = cfg.phase_cap
    if cfg.level_cap is not None:
        opts.design_level_cap = cfg.level_cap
    if ns.replications is not None:
        opts.replications = ns.replications
    numbers = ns.criteria or sorted(CRITERIA)
    bad = [n for n in numbers if n not in CRITERIA]
    if bad:
        raise ConfigError(f"unknown criteria {bad}; choose from {sorted(CRITERIA)}")
    results = run_all(opts, numbers)
    for r in results:
        print(r.line(), file=sys.stderr)
    ok = all(r.passed for r in results)
    return (EXIT_OK if ok else EXIT_VALIDATION), {
        "passed": ok,
        "criteria": [r.to_dict() for r in results],
    }


def cmd_rmatrix(cfg, ns):
    params = cfg.params()
    require_stable(params)
    blocks, cap = _blocks_for(cfg, params)
    sol = solve_R(blocks, tol=cfg.tol)
    out = {
        "params": _params_dict(params),
        "phase_cap": cap,
        "R": _matrix(sol.r),
        "spectral_radius": sol.spectral_radius,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "monotone": sol.monotone,
        "eigenvalues": _eigs(eigen_spectrum(sol.r)),
    }
    if not params.is_infinite:
        z = compute_zhat(params, params.capacity, backend=cfg.backend)
        out["zhat"] = z
        out["zhat_abs_diff"] = abs(z - sol.spectral_radius)
    return EXIT_OK, out


def cmd_hitting(cfg, ns):
    params = cfg.params()
    blocks, cap = _blocks_for(cfg, params)
    lad = solve_H(blocks, tol=cfg.tol)
    r = solve_R(blocks, tol=cfg.tol) if _stable(params) else None
    est = hitting_decay_estimate(blocks, ns.start_phase, ns.end_phase, cfg.k_max, params)
    out = {
        "params": _params_dict(params),
        "phase_cap": cap,
        "H": _matrix(lad.h_star),
        "H1": _matrix(lad.h_seq[0]),
        "iterations": lad.iterations,
        "residual": lad.residual,
        "monotone": lad.monotone,
        "support": [int(v) for v in support(lad.h_star)],
        "irreducible_on_support": bool(is_irreducible_on_support(lad.h_star)),
        "eigenvalues_H": _eigs(nonzero_eigenvalues(lad.h_star)),
        "decay": {
            "K_max": cfg.k_max,
            "start_phase": ns.start_phase,
            "end_phase": ns.end_phase,
            "ratio_estimate": est.ratio_estimate,
            "slope_estimate": est.slope_estimate,
            "reference": est.reference,
            "reference_name": est.reference_name,
            "gap": est.gap,
        },
    }
    if r is not None:
        out["eigenvalues_R"] = _eigs(nonzero_eigenvalues(r.r))
        out["eigenvalue_coincidence"] = match_multisets(nonzero_eigenvalues(lad.h_star), nonzero_eigenvalues(r.r))
    return EXIT_OK, out


def _stable(params):
    try:
        require_stable(params)
        return True
    except InstabilityError:
        return False


def cmd_invariant(cfg, ns):
    params = cfg.params()
    if not params.is_infinite:
        raise ConfigError("the invariant measure belongs to the infinite waiting room; leave capacity as inf")
    if ns.z is None:
        raise ConfigError("invariant needs --z")
    meas = solve_w(params, ns.z, ns.n_terms)
    cls = classify(params, ns.z)
    out = {
        "params": _params_dict(params),
        "z": ns.z,
        "regime": meas.regime.value,
        "discriminant": meas.discriminant,
        "in_ell1": bool(cls.in_ell1),
        "positive": bool(cls.positive),
        "feasible": bool(cls.feasible),
        "tail_ratio": meas.tail_ratio,
        "ell1_sum": ell1_sum(params, ns.z) if cls.in_ell1 else None,
        "w": [_num(v) for v in meas.w],
    }
    if ns.require_feasible and not cls.feasible:
        return EXIT_INFEASIBLE, out
    return EXIT_OK, out


COMMANDS = {
    "spectral": cmd_spectral,
    "sweep-zhat": cmd_sweep_zhat,
    "design": cmd_design,
    "validate": cmd_validate,
    "rmatrix": cmd_rmatrix,
    "hitting": cmd_hitting,
    "invariant": cmd_invariant,
}

CONFIG_HELP = """\
config file: one key=value per line, '#' starts a comment. Keys are the
long flag names with dashes or underscores (lambda, mu1, mu2, capacity,
tol, phase_cap, level_cap, k_max, m_max, seed, format, output, backend).
Flags given on the command line override the file. The environment
variable TANDEMQBD_OUTPUT_DIR, when set, replaces the directory part of
the output path (and enables file output named after the subcommand).

exit codes: 0 ok, 1 validation failure, 2 bad config, 3 instability,
4 infeasible target.
"""


def _common(p):
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", metavar="FILE", help="key=value config file (default: none)")
    g.add_argument("--lambda", dest="lam", type=float, help="arrival rate (required)")
    g.add_argument("--mu1", type=float, help="service rate of queue 1 (required)")
    g.add_argument("--mu2", type=float, help="service rate of queue 2 (required)")
    g.add_argument("--capacity", help="waiting room of queue 1: integer or 'inf' (default: inf)")
    g.add_argument("--tol", type=float, help="fixed-point iteration tolerance (default: 1e-13)")
    g.add_argument("--phase-cap", type=int,
                   help="phase cap: surrogate size for infinite room (default: 40; design: 400)")
    g.add_argument("--level-cap", type=int, help="level cap of direct solves (default: 120)")
    g.add_argument("--k-max", type=int, help="largest hitting level K (default: 200)")
    g.add_argument("--m-max", type=int, help="largest capacity in sweeps (default: 30)")
    g.add_argument("--seed", type=int, help="Monte Carlo seed (default: 20240601)")
    g.add_argument("--format", choices=("json", "csv"), help="output format; csv only for sweep-zhat (default: json)")
    g.add_argument("--output", metavar="PATH", help="output file (default: stdout)")
    g.add_argument("--backend", choices=("numba", "numpy"), help="kernel back end (default: $TANDEMQBD_BACKEND or numba)")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="tandemqbd",
        description="Spectral objects of the two-station tandem network as a QBD process.",
        epilog=CONFIG_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
        _common(p)
        return p

    add("spectral", "rho1, rho2, eta, z1, regime and feasible decay interval")
    add("sweep-zhat", "decay rate zhat_{m+1} of capacity-m networks for m = 1..m-max")
    p = add("design", "level-0 rates forcing a target decay rate, with a direct-solve check")
    p.add_argument("--kind", choices=("arrival", "removal"), default="arrival", help="design kind (default: arrival)")
    p.add_argument("--z", type=float, help="target decay rate (required)")
    p = add("validate", "run the acceptance suite")
    p.add_argument("--criteria", type=int, nargs="+", help="criterion numbers (default: all)")
    p.add_argument("--replications", type=int, help="Monte Carlo replications (default: 1000000)")
    add("rmatrix", "minimal solution R of the matrix-quadratic equation")
    p = add("hitting", "hitting matrices H_k, their limit H and the decay of P_1^K")
    p.add_argument("--start-phase", type=int, default=0, help="row i of P_1^K (default: 0)")
    p.add_argument("--end-phase", type=int, default=0, help="column j of P_1^K (default: 0)")
    p = add("invariant", "invariant measure w(z) and its feasibility")
    p.add_argument("--z", type=float, help="decay rate (required)")
    p.add_argument("--n-terms", type=int, default=51, help="number of terms of w to print (default: 51)")
    p.add_argument("--require-feasible", action="store_true", help="exit 4 when w(z) is not positive and summable")
    return parser


def render(command, cfg, payload):
    if cfg.format == "csv":
        if command != "sweep-zhat":
            raise ConfigError("csv output is only available for sweep-zhat")
        buf = io.StringIO()
        cols = ["m", "zhat", "limit", "limit_name", "gap", "error"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in payload["result"]["rows"]:
            w.writerow({k: ("" if row[k] is None else (repr(row[k]) if isinstance(row[k], float) else row[k])) for k in cols})
        return buf.getvalue()
    return json.dumps(payload, indent=2, sort_keys=False) + "\n"


def _config_echo(cfg):
    out = {k: v for k, v in vars(cfg).items() if k != "output"}
    cap = parse_capacity(cfg.capacity)
    out["capacity"] = "inf" if cap is Capacity.INFINITE else cap
    return out


def load_schema():
    with resources.files("tandemqbd").joinpath("schemas/report.schema.json").open(encoding="utf-8") as fh:
        return json.load(fh)


def main(argv=None):
    parser = make_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    command = ns.command
    try:
        cfg = build_config(ns)
        code, result = COMMANDS[command](cfg, ns)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleTarget as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InstabilityError, ConvergenceError) as exc:
        print(f"unstable: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": _config_echo(cfg),
        "result": result,
    }
    try:
        text = render(command, cfg, payload)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    path = output_path(cfg, command)
    if path is None:
        sys.stdout.write(text)
    else:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        log.info("wrote %s", path)
    return code


if __name__ == "__main__":
    sys.exit(main())
