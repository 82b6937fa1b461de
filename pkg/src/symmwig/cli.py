"""Command-line front door: subcommands, config files, CSV/JSON artifacts.

Every table is CSV with '.' decimals and 12 significant digits, so runs
can be diffed. With --out, the table lands at the given path, a JSON
result document (where the subcommand produces one) at <out>.json, and
the run manifest at <out>.manifest.json; without --out the table goes
to stdout and no files are written.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable, Optional, Sequence

from . import __version__
from .chebyshev import trace_cheb_vector
from .covariance import (
    BudgetError,
    V_asymptotic,
    V_n_exact,
    cov_cheb_moment_oracle,
    cov_traces_config_oracle,
)
from .ensemble import EntryModel, SymmetryClass, build_equivalence_classes, sample_matrix
from .montecarlo import SimulationConfig, clt_report, run_simulation, theory_vector
from .patterns import DeltaMatrix, enumerate_delta_sequences

SCHEMA = "symmwig/1"

PATTERN_CONDITIONS = ("forward", "reverse")
PATTERN_FILTERS = ("all", "identical-rows", "identical-rows-alpha1", "tau-realizable")
VARIANCE_MODES = ("exact", "asymptotic", "oracle")
ORACLE_KINDS = ("config", "moment")


@dataclass(frozen=True)
class RunManifest:
    """What was run, with every parameter resolved.

    Replaying the manifest of an exact-mode command reproduces its table
    byte for byte; for Monte Carlo commands the seed makes reruns
    bit-identical as well.
    """

    subcommand: str
    parameters: dict
    seed: Optional[int]
    version: str
    timestamp: str

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "subcommand": self.subcommand,
            "parameters": self.parameters,
            "seed": self.seed,
            "version": self.version,
            "timestamp": self.timestamp,
        }


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return "%.12g" % value
    return str(value)


def _write_csv(stream, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(cell) for cell in row])


# ---------------------------------------------------------------------------
# option resolution: defaults < config file < explicit flags


@dataclass(frozen=True)
class _Opt:
    name: str
    conv: Callable[[str], object]
    default: object = None
    required: bool = False
    help: str = ""


def _to_int(raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"expected an integer, got {raw!r}")


def _to_float(raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"expected a number, got {raw!r}")


def _to_class(raw: str) -> SymmetryClass:
    return SymmetryClass.parse(raw)


def _choice(*allowed: str) -> Callable[[str], str]:
    def conv(raw: str) -> str:
        if raw not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}; got {raw!r}")
        return raw

    return conv


def _to_delta(raw: str) -> DeltaMatrix:
    return DeltaMatrix.from_string(raw)


def _to_family(raw: str) -> str:
    if raw in ("gaussian", "rademacher") or raw.startswith("atoms:"):
        return raw
    raise ValueError("family must be gaussian, rademacher, or atoms:<value:prob,...>")


def load_config(path: str) -> dict[str, tuple[int, str]]:
    """Parse a key=value config file into {key: (line number, raw value)}.

    '#' starts a comment, blank lines are skipped, later duplicates win.
    """
    entries: dict[str, tuple[int, str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            key, eq, raw = text.partition("=")
            key = key.strip()
            raw = raw.strip()
            if not eq or not key or not raw:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {text!r}")
            entries[key] = (lineno, raw)
    return entries


def _resolve(opts: Sequence[_Opt], ns: argparse.Namespace) -> dict:
    by_name = {o.name: o for o in opts}
    values: dict = {}
    if ns.config is not None:
        for key, (lineno, raw) in load_config(ns.config).items():
            opt = by_name.get(key)
            if opt is None:
                raise ValueError(f"{ns.config}:{lineno}: unknown key {key!r}")
            try:
                values[key] = opt.conv(raw)
            except ValueError as exc:
                raise ValueError(f"{ns.config}:{lineno}: {key}: {exc}")
    for opt in opts:
        raw = getattr(ns, opt.name.replace("-", "_"))
        if raw is not None:
            try:
                values[opt.name] = opt.conv(raw)
            except ValueError as exc:
                raise ValueError(f"--{opt.name}: {exc}")
    for opt in opts:
        if opt.name not in values:
            if opt.required:
                raise ValueError(f"missing required --{opt.name}")
            values[opt.name] = opt.default
    return values


def _entry_model(family: str, sigma: Optional[float]) -> tuple[EntryModel, float]:
    """Build the entry distribution; sigma defaults to the family's own scale."""
    if family == "gaussian":
        s = 1.0 if sigma is None else sigma
        return EntryModel.gaussian(s * s), s
    if family == "rademacher":
        s = 1.0 if sigma is None else sigma
        return EntryModel.rademacher(s * s), s
    atoms = []
    for item in family[len("atoms:") :].split(","):
        v, sep, p = item.partition(":")
        if not sep:
            raise ValueError(f"bad atom {item!r} (want value:prob)")
        atoms.append((_to_float(v), _to_float(p)))
    total = math.fsum(p for _, p in atoms)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"atom probabilities sum to {total!r}, not 1")
    mean = math.fsum(v * p for v, p in atoms)
    if abs(mean) > 1e-9:
        raise ValueError("atom distribution must be centered")
    model = EntryModel.from_atoms(atoms)
    s = model.sigma if sigma is None else sigma
    return model, s


def _resolve_threads(value: Optional[int]) -> int:
    if value is not None:
        return value
    env = os.environ.get("SYMMWIG_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValueError(f"SYMMWIG_THREADS={env!r} is not an integer")
    return 1


# ---------------------------------------------------------------------------
# artifact emission


def _manifest_params(values: dict) -> dict:
    params = {}
    for key, val in values.items():
        if isinstance(val, SymmetryClass):
            params[key] = val.value
        elif isinstance(val, DeltaMatrix):
            params[key] = str(val)
        else:
            params[key] = val
    return params


def _emit(
    subcommand: str,
    values: dict,
    header: Sequence[str],
    rows: Sequence[Sequence],
    json_doc: Optional[dict] = None,
    seed: Optional[int] = None,
) -> None:
    out = values.get("out")
    if out is None:
        _write_csv(sys.stdout, header, rows)
        return
    with open(out, "w", encoding="utf-8", newline="") as fh:
        _write_csv(fh, header, rows)
    if json_doc is not None:
        with open(out + ".json", "w", encoding="utf-8") as fh:
            json.dump(json_doc, fh, indent=2)
            fh.write("\n")
    manifest = RunManifest(
        subcommand=subcommand,
        parameters=_manifest_params(values),
        seed=seed,
        version=__version__,
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )
    with open(out + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest.to_json(), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands

_OUT_OPT = _Opt("out", str, help="write the table here (plus .json/.manifest.json)")

_OPTS: dict[str, list[_Opt]] = {
    "classes": [
        _Opt("class", _to_class, required=True, help="symmetry class, DIII or CI"),
        _Opt("n", _to_int, required=True, help="half block size (matrices are 2n x 2n)"),
        _OUT_OPT,
    ],
    "patterns": [
        _Opt("m", _to_int, required=True, help="sequence length"),
        _Opt(
            "condition",
            _choice(*PATTERN_CONDITIONS),
            required=True,
            help="chaining condition",
        ),
        _Opt("filter", _choice(*PATTERN_FILTERS), default="all", help="count filter"),
        _Opt("first-delta", _to_delta, help="pin the first offset matrix, e.g. 01/10"),
        _OUT_OPT,
    ],
    "variance": [
        _Opt("class", _to_class, required=True),
        _Opt("m", _to_int, required=True, help="Chebyshev degree"),
        _Opt("mode", _choice(*VARIANCE_MODES), default="asymptotic"),
        _Opt("n", _to_int, help="required for exact/oracle modes"),
        _Opt("sigma", _to_float, help="entry scale (default 1)"),
        _Opt("family", _to_family, default="gaussian"),
        _Opt("budget", _to_int, help="enumeration budget override"),
        _OUT_OPT,
    ],
    "oracle": [
        _Opt("class", _to_class, required=True),
        _Opt("n", _to_int, required=True),
        _Opt("m", _to_int, required=True, help="first Chebyshev degree"),
        _Opt("mu", _to_int, required=True, help="second Chebyshev degree"),
        _Opt("kind", _choice(*ORACLE_KINDS), default="moment"),
        _Opt("sigma", _to_float),
        _Opt("family", _to_family, default="rademacher"),
        _Opt("budget", _to_int),
        _OUT_OPT,
    ],
    "simulate": [
        _Opt("class", _to_class, required=True),
        _Opt("n", _to_int, required=True),
        _Opt("sigma", _to_float),
        _Opt("M", _to_int, default=6, help="highest Chebyshev degree"),
        _Opt("samples", _to_int, default=10_000),
        _Opt("seed", _to_int, default=0),
        _Opt("family", _choice("gaussian", "rademacher"), default="gaussian"),
        _Opt("threads", _to_int, help="worker threads (default SYMMWIG_THREADS or 1)"),
        _OUT_OPT,
    ],
    "traces": [
        _Opt("class", _to_class, required=True),
        _Opt("n", _to_int, required=True),
        _Opt("seed", _to_int, default=0),
        _Opt("sigma", _to_float),
        _Opt("M", _to_int, default=6),
        _Opt("family", _to_family, default="gaussian"),
        _OUT_OPT,
    ],
}
_OPTS["report"] = [o for o in _OPTS["simulate"] if o.name != "out"] + [
    _Opt("z-max", _to_float, default=3.0, help="z threshold"),
    _Opt("odd-ceiling", _to_float, default=0.5, help="variance ceiling, odd degrees"),
    _Opt("rel-window", _to_float, default=0.10, help="finite-size allowance, even degrees"),
    _OUT_OPT,
]


def _cmd_classes(ns: argparse.Namespace) -> int:
    values = _resolve(_OPTS["classes"], ns)
    cls, n = values["class"], values["n"]
    rows = []
    for c in build_equivalence_classes(cls, n):
        members = ";".join(f"{p}:{q}" for p, q in c.members)
        signs = ";".join(str(s) for s in c.signs)
        rows.append([cls.value, n, c.index, c.kind, c.a, c.b, len(c.members), members, signs])
    header = ["class", "n", "index", "kind", "a", "b", "size", "members", "signs"]
    _emit("classes", values, header, rows)
    return 0


def _patterns_closed_form(m: int, condition: str, filt: str, pinned: bool) -> Optional[int]:
    if filt == "all":
        return 2 ** (m + 1)
    if condition == "forward" and filt == "identical-rows":
        return 2**m
    if condition == "forward" and filt == "identical-rows-alpha1":
        return 2 ** (m - 1)
    if filt == "tau-realizable" and pinned:
        return 2 ** (m - 2)
    return None


def _cmd_patterns(ns: argparse.Namespace) -> int:
    values = _resolve(_OPTS["patterns"], ns)
    m, condition, filt = values["m"], values["condition"], values["filter"]
    first = values["first-delta"]
    filter_name = None if filt == "all" else filt
    _, count = enumerate_delta_sequences(m, condition, filter_name, first)
    expected = _patterns_closed_form(m, condition, filt, first is not None)
    match = None if expected is None else (count == expected)
    rows = [[m, condition, filt, count, expected, match]]
    header = ["m", "condition", "filter", "count", "closed_form", "match"]
    _emit("patterns", values, header, rows)
    return 0


def _cmd_variance(ns: argparse.Namespace) -> int:
    values = _resolve(_OPTS["variance"], ns)
    cls, m, mode = values["class"], values["m"], values["mode"]
    model, sigma = _entry_model(values["family"], values["sigma"])
    budget = {} if values["budget"] is None else {"budget": values["budget"]}
    if mode == "asymptotic":
        value, flag = V_asymptotic(cls, m, sigma, model if m == 2 else None)
        n = values["n"]
    else:
        n = values["n"]
        if n is None:
            raise ValueError(f"--n is required for mode {mode!r}")
        if mode == "exact":
            value = V_n_exact(cls, n, m, model, **budget)
        else:
            value = cov_cheb_moment_oracle(cls, n, m, m, model, sigma, **budget)
        flag = "finite-n"
    rows = [[cls.value, n, m, value, mode, flag]]
    header = ["class", "n", "m", "value", "mode", "flag"]
    _emit("variance", values, header, rows)
    return 0


def _cmd_oracle(ns: argparse.Namespace) -> int:
    values = _resolve(_OPTS["oracle"], ns)
    cls, n, m, mu = values["class"], values["n"], values["m"], values["mu"]
    model, sigma = _entry_model(values["family"], values["sigma"])
    budget = {} if values["budget"] is None else {"budget": values["budget"]}
    if values["kind"] == "config":
        value = cov_traces_config_oracle(cls, n, m, mu, model, sigma, **budget)
    else:
        value = cov_cheb_moment_oracle(cls, n, m, mu, model, sigma, **budget)
    rows = [[cls.value, n, m, mu, value, values["kind"]]]
    header = ["class", "n", "m", "mu", "value", "oracle"]
    _emit("oracle", values, header, rows)
    return 0


def _simulation(values: dict):
    sigma = 1.0 if values["sigma"] is None else values["sigma"]
    config = SimulationConfig(
        symmetry_class=values["class"],
        n=values["n"],
        sigma=sigma,
        M=values["M"],
        samples=values["samples"],
        seed=values["seed"],
        family=values["family"],
        parallelism=_resolve_threads(values["threads"]),
    )
    result = run_simulation(config)
    theory = theory_vector(config.symmetry_class, config.M, sigma, config.model)
    return config, result, theory


def _clean(x):
    """NaN/inf have no JSON spelling; emit null."""
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, list):
        return [_clean(v) for v in x]
    return x


def _report_json(subcommand: str, config, result, report) -> dict:
    est = result.estimates
    return {
        "schema": SCHEMA,
        "subcommand": subcommand,
        "config": {
            "class": config.symmetry_class.value,
            "n": config.n,
            "sigma": config.sigma,
            "M": config.M,
            "samples": config.samples,
            "seed": config.seed,
            "family": config.family,
            "parallelism": config.parallelism,
        },
        "wall_time": result.wall_time,
        "mean": _clean(est.mean.tolist()),
        "cov": _clean(est.cov.tolist()),
        "cov_se": _clean(est.cov_se.tolist()) if est.cov_se is not None else None,
        "k3": _clean(est.k3.tolist()),
        "k3_se": _clean(est.k3_se.tolist()) if est.k3_se is not None else None,
        "k4": _clean(est.k4.tolist()),
        "k4_se": _clean(est.k4_se.tolist()) if est.k4_se is not None else None,
        "report": {
            "rows": [
                {
                    "degree": r.degree,
                    "var_est": r.var_est,
                    "var_se": _clean(r.var_se),
                    "theory": r.theory,
                    "flag": r.flag,
                    "z": _clean(r.z),
                    "k3": _clean(r.k3),
                    "k4": _clean(r.k4),
                    "passed": r.passed,
                    "note": r.note,
                }
                for r in report.rows
            ],
            "offdiag": [
                {"m": m, "mu": mu, "z": _clean(z)} for m, mu, z in report.offdiag
            ],
            "max_offdiag_z": _clean(report.max_offdiag_z),
            "passed": report.passed,
            "z_max": report.z_max,
            "odd_ceiling": report.odd_ceiling,
            "rel_window": report.rel_window,
        },
    }


def _cmd_simulate(ns: argparse.Namespace) -> int:
    values = _resolve(_OPTS["simulate"], ns)
    config, result, theory = _simulation(values)
    report = clt_report(result, theory)
    rows = [
        [r.degree, r.var_est, r.var_se, r.theory, r.flag, r.z, r.k3, r.k4]
        for r in report.rows
    ]
    header = ["degree", "var_est", "var_se", "theory", "flag", "z", "k3", "k4"]
    doc = _report_json("simulate", config, result, report)
    _emit("simulate", values, header, rows, json_doc=doc, seed=config.seed)
    return 0


def _cmd_report(ns: argparse.Namespace) -> int:
    values = _resolve(_OPTS["report"], ns)
    config, result, theory = _simulation(values)
    report = clt_report(
        result,
        theory,
        z_max=values["z-max"],
        odd_ceiling=values["odd-ceiling"],
        rel_window=values["rel-window"],
    )
    rows = [
        ["var", r.degree, None, r.var_est, r.var_se, r.theory, r.flag, r.z, r.k3, r.k4, r.passed, r.note]
        for r in report.rows
    ]
    est = result.estimates
    for m, mu, z in report.offdiag:
        cov = float(est.cov[m - 1, mu - 1])
        se = float(est.cov_se[m - 1, mu - 1]) if est.cov_se is not None else math.nan
        ok = abs(z) <= report.z_max
        rows.append(["cov", m, mu, cov, se, 0.0, "theorem", z, None, None, ok, ""])
    header = [
        "kind", "degree", "mu", "estimate", "se", "target",
        "flag", "z", "k3", "k4", "passed", "note",
    ]
    doc = _report_json("report", config, result, report)
    _emit("report", values, header, rows, json_doc=doc, seed=config.seed)
    return 0


def _cmd_traces(ns: argparse.Namespace) -> int:
    values = _resolve(_OPTS["traces"], ns)
    model, sigma = _entry_model(values["family"], values["sigma"])
    sample = sample_matrix(values["class"], values["n"], model, values["seed"])
    traces = trace_cheb_vector(sample, values["M"], sigma)
    rows = [[m + 1, float(t)] for m, t in enumerate(traces)]
    _emit("traces", values, ["degree", "trace"], rows, seed=values["seed"])
    return 0


_HANDLERS = {
    "classes": _cmd_classes,
    "patterns": _cmd_patterns,
    "variance": _cmd_variance,
    "oracle": _cmd_oracle,
    "simulate": _cmd_simulate,
    "report": _cmd_report,
    "traces": _cmd_traces,
}

_DESCRIPTIONS = {
    "classes": "list the signed entry equivalence classes",
    "patterns": "count chained offset-matrix sequences against closed forms",
    "variance": "finite-n or limiting variance of a Chebyshev trace",
    "oracle": "exact covariance of two Chebyshev traces, by enumeration",
    "simulate": "Monte Carlo trace statistics with theory comparison",
    "report": "simulate, then grade against the limiting covariance",
    "traces": "Chebyshev traces of a single sampled matrix",
}


class _Parser(argparse.ArgumentParser):
    # exit codes: 1 = bad usage/validation, 2 = budget exhaustion
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="symmwig", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"symmwig {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name, opts in _OPTS.items():
        sub = subs.add_parser(name, description=_DESCRIPTIONS[name])
        sub.add_argument("--config", help="key=value file; flags override it")
        for opt in opts:
            extra = " (required)" if opt.required else ""
            sub.add_argument(f"--{opt.name}", type=str, help=opt.help + extra)
        sub.set_defaults(handler=_HANDLERS[name])
    return parser


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run one CLI invocation; returns the process exit code."""
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return ns.handler(ns)
    except BudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
