"""Command-line interface.

Every subcommand maps onto one module operation.  Results are written as
CSV (one header row, floats with 17 significant digits) or JSON (sorted
keys).  Exit codes: 0 success, 1 numerical failure, 2 rejected
precondition, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_PRECONDITION = 2
EXIT_USAGE = 64
OUTPUT_DIR_ENV = "GLVORTEX_OUTPUT_DIR"

# Central defaults table; documented in the README.
DEFAULTS: dict[str, dict] = {
    "profile": {"n": 1, "kappa": 1 / math.sqrt(2), "N": 800, "rmax": None, "report": "energy"},
    "stability": {"n": 1, "kappa": 1.0, "N": 800, "mmax": 8},
    "beta": {"tau": "0.5,0.8660254037844386", "method": "both", "N": 64, "truncation": None},
    "gamma": {"tau": "0.5,0.8660254037844386", "grid": 48},
    "scan": {"quantity": "beta", "res": 48, "jobs": 1, "kappa": 1.0, "b": 0.97, "N": 32},
    "spectrum": {"b": 1.0, "n": 1, "N": 64, "count": 6, "tau": "0,1"},
    "bifurcate": {"tau": "0.5,0.8660254037844386", "kappa": 1.0, "b": 0.95, "N": 32, "checkpoint": None},
    "lowfield": {"tau": "0.5,0.8660254037844386", "kappa": 1.0, "b": 0.05, "n": 1, "spacing": 0.15},
    "relax": {"tau": "0.5,0.8660254037844386", "kappa": 1.0, "b": 0.95, "N": "24", "dt": 1.0, "T": 400.0,
              "initial": "normal", "perturb": 1e-2, "seed": 3, "scheme": "semi-implicit", "supercell": "1,1",
              "record": 1, "checkpoint": None},
    "dynamics": {"centers": "-5,0;5,0", "degrees": "1,1", "kappa": 1.0, "law": "gradient",
                 "velocities": None, "T": 100.0, "dt": 1.0},
    "classify": {"tau": "0.5,0.8660254037844386", "kappa": 1.0, "b": 0.97},
}

DEFAULT_FORMAT = {"profile": "json", "stability": "json", "beta": "json", "gamma": "json", "scan": "csv",
                  "spectrum": "csv", "bifurcate": "json", "lowfield": "json", "relax": "csv",
                  "dynamics": "csv", "classify": "json"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


@dataclass
class RunConfig:
    """A fully specified run: subcommand, parameters, output path and format."""

    subcommand: str
    params: dict
    out: str | None = None
    format: str | None = None

    def to_json(self) -> str:
        return json.dumps({"subcommand": self.subcommand, "params": self.params, "out": self.out,
                           "format": self.format}, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        d = json.loads(text)
        if d.get("subcommand") not in DEFAULTS:
            raise ValueError(f"unknown subcommand {d.get('subcommand')!r}")
        params = dict(DEFAULTS[d["subcommand"]])
        unknown = set(d.get("params", {})) - set(params)
        if unknown:
            raise ValueError(f"unknown parameters {sorted(unknown)}")
        params.update(d.get("params", {}))
        return cls(d["subcommand"], params, d.get("out"), d.get("format"))


@dataclass
class Result:
    data: dict | None = None
    header: tuple | None = None
    rows: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------


def parse_tau(text: str) -> complex:
    """``"re,im"`` to a complex shape parameter with positive imaginary part."""
    try:
        re_, im_ = (float(x) for x in str(text).split(","))
    except ValueError:
        raise ValueError(f"tau must be given as 're,im', got {text!r}") from None
    if not im_ > 0:
        raise ValueError("tau must have positive imaginary part")
    return complex(re_, im_)


def parse_points(text: str) -> list[complex]:
    """``"x1,y1;x2,y2"`` to complex points."""
    out = []
    for item in str(text).split(";"):
        x, y = (float(v) for v in item.split(","))
        out.append(complex(x, y))
    return out


def parse_ints(text) -> tuple[int, ...]:
    return tuple(int(v) for v in str(text).split(","))


def parse_mesh(text):
    v = parse_ints(text)
    return v[0] if len(v) == 1 else v


def _positive(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be positive")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _run_profile(p):
    from . import vortex

    _positive("kappa", p["kappa"])
    if p["report"] == "critical":
        return Result(vortex.critical_fields(p["kappa"], N=p["N"]).to_dict())
    prof = vortex.solve_profile(p["n"], p["kappa"], p["rmax"], p["N"])
    if p["report"] == "profile":
        return Result(header=("r", "f", "a", "B", "J"), rows=prof.to_rows())
    if p["report"] != "energy":
        raise ValueError(f"unknown report {p['report']!r}")
    return Result({"n": prof.n, "kappa": prof.kappa, "N": prof.N, "R_max": prof.R_max,
                   "energy": vortex.profile_energy(prof), "pi_n": math.pi * prof.n,
                   "flux_quanta": vortex.total_flux(prof) / (2 * math.pi), "residual": prof.residual,
                   "decay_rate_fit": vortex.fit_decay_rate(prof), "decay_rate": vortex.decay_rate(prof.kappa)})


def _run_stability(p):
    from . import vortex

    _positive("kappa", p["kappa"])
    rep = vortex.stability_report(p["n"], p["kappa"], N=p["N"], m_range=range(0, p["mmax"] + 1))
    d = rep.to_dict()
    if p["n"] == 1:
        d["zero_mode_residual"] = vortex.zero_mode_residual(vortex.solve_profile(1, p["kappa"], N=p["N"]))
    return Result(d)


def _run_beta(p):
    from . import abrikosov

    tau = parse_tau(p["tau"])
    out = {}
    if p["method"] in ("lattice-sum", "both"):
        out["lattice_sum"] = abrikosov.beta_lattice_sum(tau, p["truncation"]).to_dict()
    if p["method"] in ("quadrature", "both"):
        out["quadrature"] = abrikosov.beta_quadrature(tau, p["N"]).to_dict()
    if not out:
        raise ValueError(f"unknown method {p['method']!r}")
    return Result(out)


def _run_gamma(p):
    from . import abrikosov

    return Result(abrikosov.gamma(parse_tau(p["tau"]), grid=p["grid"]).to_dict())


def _run_scan(p):
    from . import abrikosov, cell
    from .lattice import in_fundamental_domain

    if p["jobs"] < 1:
        raise ValueError("jobs must be at least 1")
    q = p["quantity"]
    if q == "energy":
        taus = [t for t in abrikosov.scan_grid(p["res"]) if in_fundamental_domain(t)]
        scan = cell.energy_per_cell_scan(taus, p["kappa"], p["b"], N=p["N"], jobs=p["jobs"])
        return Result(header=("re_tau", "im_tau", "energy_per_area", "mean_density", "beta", "converged",
                              "message"), rows=scan.to_rows())
    rows = abrikosov.scan_fundamental_domain(p["res"], q, jobs=p["jobs"])
    return Result(header=("re_tau", "im_tau", q, "in_fundamental_domain"),
                  rows=[(a, b, v, int(f)) for a, b, v, f in rows])


def _run_spectrum(p):
    from . import landau

    res = landau.landau_spectrum(p["b"], p["n"], p["N"], p["count"], tau=parse_tau(p["tau"]))
    return Result(header=("index", "eigenvalue", "cluster"), rows=res.to_rows())


def _run_bifurcate(p):
    from . import cell

    bp = cell.newton_solve_near_hc2(parse_tau(p["tau"]), p["kappa"], p["b"], N=parse_mesh(p["N"]))
    if p["checkpoint"]:
        cell.save_checkpoint(bp.cell, p["checkpoint"])
    return Result(bp.to_dict())


def _run_lowfield(p):
    from . import cell

    lf = cell.assemble_low_field_lattice(parse_tau(p["tau"]), p["kappa"], p["b"], p["n"], spacing=p["spacing"])
    return Result(lf.to_dict())


def _run_relax(p):
    from . import cell
    from .lattice import lattice_with_field

    tau = parse_tau(p["tau"])
    N = parse_mesh(p["N"])
    n1, n2 = parse_ints(p["supercell"])
    if p["initial"] == "lattice":
        ref = cell.newton_solve_near_hc2(tau, p["kappa"], p["b"], N=N).cell
    elif p["initial"] == "normal":
        ref = None
        base = cell.normal_state(lattice_with_field(tau, p["b"], 1), p["kappa"], N)
    else:
        raise ValueError(f"unknown initial state {p['initial']!r}")
    start = ref if ref is not None else base
    if (n1, n2) != (1, 1):
        start = cell.supercell(start, n1, n2)
        ref = start if ref is not None else None
    c0 = cell.perturbed(start, p["perturb"], p["seed"])
    tr = cell.tdgl_relax(c0, p["dt"], p["T"], p["scheme"], reference=ref, record_every=p["record"])
    if p["checkpoint"]:
        cell.save_checkpoint(tr.final, p["checkpoint"])
    return Result(header=("t", "energy", "residual", "flux_quanta", "distance"), rows=tr.to_rows())


def _run_dynamics(p):
    from . import dynamics

    centers = parse_points(p["centers"])
    cfg = dynamics.VortexConfig(tuple(centers), parse_ints(p["degrees"]), p["kappa"])
    if p["law"] == "interaction":
        cal = dynamics.calibrate(cfg.kappa)
        return Result({"separation": cfg.separation, "W_field": dynamics.interaction_energy(cfg, "field"),
                       "W_asymptotic": dynamics.interaction_energy(cfg, "asymptotic"),
                       "calibration": cal.to_dict()})
    if p["law"] == "gradient":
        tr = dynamics.integrate_gradient_law(cfg, p["T"], p["dt"])
    elif p["law"] == "second-order":
        v = parse_points(p["velocities"]) if p["velocities"] else [0j] * len(centers)
        tr = dynamics.integrate_second_order_law(cfg, v, p["T"], p["dt"])
    else:
        raise ValueError(f"unknown law {p['law']!r}")
    if tr.halted:
        print(f"warning: {tr.reason}", file=sys.stderr)
    header = ["t"]
    for j in range(len(centers)):
        header += [f"x{j + 1}", f"y{j + 1}"]
    return Result(header=tuple(header + ["W", "R"]), rows=tr.to_rows())


def _run_classify(p):
    from . import abrikosov

    return Result(abrikosov.classify_stability(parse_tau(p["tau"]), p["kappa"], p["b"]).to_dict())


HANDLERS = {
    "profile": _run_profile,
    "stability": _run_stability,
    "beta": _run_beta,
    "gamma": _run_gamma,
    "scan": _run_scan,
    "spectrum": _run_spectrum,
    "bifurcate": _run_bifurcate,
    "lowfield": _run_lowfield,
    "relax": _run_relax,
    "dynamics": _run_dynamics,
    "classify": _run_classify,
}

HELP = {
    "profile": "radial vortex profile (report energy, profile or critical fields)",
    "stability": "fiber-wise linear stability of a radial vortex",
    "beta": "Abrikosov function by lattice sum and/or quadrature",
    "gamma": "stability function gamma(tau) and its minimizing quasimomentum",
    "scan": "beta, gamma, kappa_c or energy per area over the shape grid",
    "spectrum": "low spectrum of the magnetic Laplacian on a flux cell",
    "bifurcate": "lattice solution bifurcating below h_c2",
    "lowfield": "low-field lattice assembled from radial vortices",
    "relax": "gradient-flow relaxation on a flux cell",
    "dynamics": "interaction energy or motion of well separated vortices",
    "classify": "linear stability verdict of a lattice near h_c2",
}

_CHOICES = {
    ("profile", "report"): ("energy", "profile", "critical"),
    ("beta", "method"): ("lattice-sum", "quadrature", "both"),
    ("scan", "quantity"): ("beta", "gamma", "kappa_c", "energy"),
    ("relax", "initial"): ("normal", "lattice"),
    ("relax", "scheme"): ("semi-implicit", "explicit"),
    ("dynamics", "law"): ("gradient", "second-order", "interaction"),
}


def _type_of(value):
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return int
    if isinstance(value, float):
        return float
    return str


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glvortex", description="Ginzburg-Landau vortices and vortex lattices")
    parser.add_argument("--config", help="replay a stored run configuration (JSON)")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)
    for name, defaults in DEFAULTS.items():
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name])
        for key, value in defaults.items():
            kwargs = {"default": value, "dest": key, "help": f"default: {value}"}
            t = _type_of(value)
            if key in ("rmax", "truncation"):
                t = float
            if t is not None:
                kwargs["type"] = t
            if (name, key) in _CHOICES:
                kwargs["choices"] = _CHOICES[(name, key)]
            sp.add_argument(f"--{key}", **kwargs)
        sp.add_argument("--out", help=f"output file (default: stdout, or ${OUTPUT_DIR_ENV}/<subcommand>.<ext>)")
        sp.add_argument("--format", choices=("csv", "json"), help=f"default: {DEFAULT_FORMAT[name]}")
        sp.add_argument("--save-config", dest="save_config", help="write the run configuration as JSON")
    return parser


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            for i, x in enumerate(v):
                out[f"{key}.{i}"] = x
        else:
            out[key] = v
    return out


def render(result: Result, fmt: str) -> str:
    """Serialize a result deterministically."""
    if fmt == "json":
        if result.data is not None:
            obj = result.data
        else:
            obj = {"header": list(result.header), "rows": [list(r) for r in result.rows]}
        return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"
    if result.data is not None:
        flat = _flatten(_plain(result.data))
        header, rows = tuple(sorted(flat)), [tuple(flat[k] for k in sorted(flat))]
    else:
        header, rows = result.header, result.rows
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(x) for x in r])
    return buf.getvalue()


def _output_path(cfg: RunConfig, fmt: str) -> str | None:
    if cfg.out:
        return cfg.out
    d = os.environ.get(OUTPUT_DIR_ENV)
    if d:
        return os.path.join(d, f"{cfg.subcommand}.{fmt}")
    return None


def dispatch(cfg: RunConfig) -> int:
    """Run a configuration and write its output; returns the exit code."""
    try:
        result = HANDLERS[cfg.subcommand](cfg.params)
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    fmt = cfg.format or DEFAULT_FORMAT[cfg.subcommand]
    text = render(result, fmt)
    path = _output_path(cfg, fmt)
    try:
        if path is None:
            sys.stdout.write(text)
        else:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            with open(path, "w", newline="") as fh:
                fh.write(text)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    if args.config:
        if args.subcommand:
            parser.print_usage(sys.stderr)
            print("glvortex: error: --config replaces the subcommand", file=sys.stderr)
            return EXIT_USAGE
        try:
            with open(args.config) as fh:
                cfg = RunConfig.from_json(fh.read())
        except OSError as exc:
            print(f"cannot read config: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        except (ValueError, KeyError) as exc:
            print(f"error: invalid config: {exc}", file=sys.stderr)
            return EXIT_PRECONDITION
        return dispatch(cfg)
    if not args.subcommand:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    ns = vars(args)
    params = {k: ns[k] for k in DEFAULTS[args.subcommand]}
    cfg = RunConfig(args.subcommand, params, ns["out"], ns["format"])
    if ns["save_config"]:
        try:
            with open(ns["save_config"], "w") as fh:
                fh.write(cfg.to_json() + "\n")
        except OSError as exc:
            print(f"cannot write config: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
