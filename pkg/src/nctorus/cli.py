"""Command-line front end.

Every command writes one report: the effective configuration, the package
version, the tolerances in force and the command result. JSON output uses
sorted keys so equal runs are byte-identical.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from . import series as fs
from .convergence import (
    CertificateUnavailable,
    TermLimitExceeded,
    e_l_converge,
    find_halfplane,
    halfplane_converge,
    neumann_invert,
)
from .discriminant import theta_line_scan
from .identities import SuiteConfig, run_suite
from .logarithmic import Factored, QuantizationError, chi, log_derivative
from .randomgen import random_element
from .series import IdentityViolation
from .torus import Element, TorusParams, TraceError, corrupted_pairing, delta, trace

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID_INPUT = 2
EXIT_NO_CERTIFICATE = 3

GOLDEN_THETA = (3 - math.sqrt(5)) / 2
TRIANGLE = Element({(1, 0): 1.0, (0, 1): 0.8 + 0.3j, (-1, -1): -0.6 + 0.5j})
SERIES_KINDS = ("E_l", "E_r", "Exp_l", "Exp_r", "s")


class InvalidInput(ValueError):
    pass


@dataclass
class RunConfig:
    theta: float = GOLDEN_THETA
    tau_re: float = -0.3
    tau_im: float = -1.1
    order: int = 5
    box: int = 2
    seed: int = 0
    tol: float = 1e-8
    conv_tol: float = 1e-10
    sv_tol: float = 1e-8
    stability_rtol: float = 1e-3
    cases: int = 10
    support: int = 3
    l1: float = 1.5
    which: str = "E_l"
    radii: list[int] = field(default_factory=lambda: [10, 14, 18])
    input: str | None = None
    format: str = "json"
    out: str | None = None
    corrupt_pairing: bool = False

    @property
    def params(self) -> TorusParams:
        return TorusParams(self.theta, complex(self.tau_re, self.tau_im))

    def tolerances(self) -> dict[str, float]:
        return {
            "identity": self.tol,
            "convergence": self.conv_tol,
            "singular_value": self.sv_tol,
            "stability": self.stability_rtol,
        }

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}
# nested config sections are flattened onto RunConfig fields
_SECTION_ALIASES = {"params": {"tau": None}, "tolerances": {"identity": "tol", "convergence": "conv_tol", "singular_value": "sv_tol", "stability": "stability_rtol"}}


def _flatten(data: dict) -> dict:
    flat: dict[str, Any] = {}
    for key, value in data.items():
        key = key.replace("-", "_")
        if key in _SECTION_ALIASES and isinstance(value, dict):
            aliases = _SECTION_ALIASES[key]
            for k, v in value.items():
                k = k.replace("-", "_")
                if k == "tau" and key == "params":
                    flat["tau_re"], flat["tau_im"] = float(v[0]), float(v[1])
                else:
                    flat[aliases.get(k) or k] = v
        else:
            flat[key] = value
    unknown = sorted(set(flat) - _FIELDS)
    if unknown:
        raise InvalidInput(f"unknown config keys: {', '.join(unknown)}")
    return flat


def load_config(path: str | None, overrides: dict[str, Any]) -> RunConfig:
    data: dict[str, Any] = {}
    if path:
        try:
            loaded = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise InvalidInput(f"cannot read config {path}: {exc}") from exc
        if loaded is not None and not isinstance(loaded, dict):
            raise InvalidInput("config file must hold a mapping")
        data = _flatten(loaded or {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig(**data)
    if cfg.order < 0:
        raise InvalidInput("order must be >= 0")
    if cfg.format not in ("json", "csv"):
        raise InvalidInput(f"unknown format {cfg.format!r}")
    if cfg.which not in SERIES_KINDS:
        raise InvalidInput(f"--which must be one of {', '.join(SERIES_KINDS)}")
    try:
        cfg.params
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc
    return cfg


# ---------------------------------------------------------------------------
# inputs


def _read_input(cfg: RunConfig) -> Any:
    if cfg.input is None:
        return None
    try:
        return json.loads(Path(cfg.input).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"cannot read input {cfg.input}: {exc}") from exc


def _element_from(data: Any) -> Element:
    if isinstance(data, dict):
        data = data.get("a", data.get("element"))
    if not isinstance(data, list):
        raise InvalidInput("input must be a list of {m, n, re, im} terms or {\"a\": [...]}")
    try:
        return Element.from_json(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(f"malformed element: {exc}") from exc


def _input_element(cfg: RunConfig, default) -> Element:
    data = _read_input(cfg)
    if data is None:
        return default()
    return _element_from(data)


def _rng(cfg: RunConfig) -> np.random.Generator:
    return np.random.default_rng(cfg.seed)


# ---------------------------------------------------------------------------
# commands; each returns (result, passed)


def cmd_identities(cfg: RunConfig) -> tuple[dict, bool]:
    suite = SuiteConfig(
        cfg.params,
        order=cfg.order,
        seed=cfg.seed,
        cases=cfg.cases,
        support=cfg.support,
        box=cfg.box,
        l1=cfg.l1,
        tol=cfg.tol,
    )
    hook = corrupted_pairing() if cfg.corrupt_pairing else contextlib.nullcontext()
    with hook:
        results = run_suite(suite)
    rows = [r.to_json() for r in results]
    return {"identities": rows, "failed": [r.identity for r in results if not r.passed]}, all(r.passed for r in results)


def _cpx(z: complex) -> list[float]:
    return [z.real, z.imag]


def cmd_exp(cfg: RunConfig) -> tuple[dict, bool]:
    P, N = cfg.params, cfg.order
    a = _input_element(cfg, lambda: random_element(_rng(cfg), cfg.support, cfg.box, cfg.l1, trace_zero=True, paired=True))
    which = cfg.which
    out: dict[str, Any] = {"which": which, "a": a.to_json()}
    if which == "s":
        s = fs.s_series(a, P, N)
        out["series"] = [_cpx(c) for c in s]
        out["table"] = [
            {"factor": name, **t.to_json()}
            for name, (_, table) in (("E_l", fs.E_l_divisor_table(a, P, N)), ("E_r", fs.E_r_table(-a, P, N)))
            for t in table
        ]
        return out, True
    tables = {
        "E_l": fs.E_l_divisor_table,
        "E_r": fs.E_r_table,
        "Exp_l": fs.Exp_l_table,
        "Exp_r": fs.Exp_r_table,
    }
    x, table = tables[which](a, P, N)
    out["series"] = x.to_json()
    out["table"] = [t.to_json() for t in table]
    return out, True


def cmd_converge(cfg: RunConfig) -> tuple[dict, bool]:
    P, tol = cfg.params, cfg.conv_tol
    a = _input_element(cfg, lambda: random_element(_rng(cfg), cfg.support, cfg.box, 0.05, trace_zero=True))
    out: dict[str, Any] = {"a": a.to_json()}
    if abs(trace(a)) > 1e-10:
        out["rejection"] = {"hypothesis": "trace_zero", "detail": f"|tr(a)| = {abs(trace(a)):.3e}"}
        raise _Rejected(out, EXIT_INVALID_INPUT)
    try:
        x, certificate = e_l_converge(a, P, tol)
        out["path"] = "l1"
        out["certificate"] = certificate.to_json()
    except CertificateUnavailable as exc:
        h = find_halfplane(sorted(a.support()))
        if h is None:
            out["rejection"] = {"hypothesis": "ratio_below_one", "detail": str(exc), "halfplane": None}
            raise _Rejected(out, EXIT_NO_CERTIFICATE) from exc
        x, info = halfplane_converge(a, h, P, tol)
        out["path"] = "halfplane"
        out["certificate"] = info
    cert = out["certificate"]
    residual = cert["residual"] if out["path"] == "l1" else cert["relative_residual"]
    out["result"] = x.to_json()
    passed = residual < 10 * tol
    if out["path"] == "l1" and out["certificate"]["invertible"]:
        inv = neumann_invert(x, P, tol)
        L = log_derivative(x, P, tol)
        out["inverse_certified"] = True
        out["round_trip"] = (L - delta(a, P)).l2()
        passed = passed and out["round_trip"] < 10 * tol
        out["inverse_l1"] = inv.l1()
    else:
        out["inverse_certified"] = False
    return out, passed


def cmd_theta_scan(cfg: RunConfig) -> tuple[dict, bool]:
    a = _input_element(cfg, lambda: TRIANGLE)
    scan = theta_line_scan(a, cfg.params, list(cfg.radii), stability_rtol=cfg.stability_rtol)
    out = scan.to_json()
    out["csv"] = scan.to_csv()
    return out, True


def cmd_chi(cfg: RunConfig) -> tuple[dict, bool]:
    P = cfg.params
    data = _read_input(cfg)
    if data is None:
        rng = _rng(cfg)
        v = tuple(int(c) for c in rng.integers(-3, 4, size=2))
        y, _ = e_l_converge(random_element(rng, cfg.support, 1, 0.05, True), P, 1e-13)
        x: Element | Factored = Factored(v, y)
    elif isinstance(data, dict) and "factored" in data:
        try:
            x = Factored.from_json(data["factored"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInput(f"malformed factored input: {exc}") from exc
    else:
        x = _element_from(data)
    res = chi(x, P, tol=cfg.tol, strict=False)
    out = {"input": x.to_json(), "chi": res.to_json()}
    if isinstance(x, Factored):
        out["expected_lattice_point"] = list(x.v)
        return out, res.residual < cfg.tol and res.lattice_point == x.v
    return out, res.residual < cfg.tol


COMMANDS = {
    "identities": cmd_identities,
    "exp": cmd_exp,
    "converge": cmd_converge,
    "theta-scan": cmd_theta_scan,
    "chi": cmd_chi,
}


class _Rejected(Exception):
    def __init__(self, result: dict, code: int):
        super().__init__(result.get("rejection"))
        self.result = result
        self.code = code


# ---------------------------------------------------------------------------
# output


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def render_json(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


def render_csv(command: str, report: dict) -> str:
    result = report.get("result") or {}
    if command == "theta-scan" and "csv" in result:
        return result["csv"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if command == "identities":
        w.writerow(["identity", "max_residual", "tolerance", "passed"])
        for row in result.get("identities", []):
            w.writerow([row["identity"], repr(row["max_residual"]), repr(row["tolerance"]), int(row["passed"])])
    elif command == "exp" and result.get("which") == "s":
        w.writerow(["k", "re", "im"])
        for k, c in enumerate(result["series"]):
            w.writerow([k, repr(c[0]), repr(c[1])])
    elif command == "exp":
        w.writerow(["k", "m", "n", "re", "im"])
        for k, coeff in enumerate(result["series"]):
            for term in coeff:
                w.writerow([k, term["m"], term["n"], repr(term["re"]), repr(term["im"])])
    elif command == "converge" and "result" in result:
        w.writerow(["m", "n", "re", "im"])
        for term in result["result"]:
            w.writerow([term["m"], term["n"], repr(term["re"]), repr(term["im"])])
    else:
        w.writerow(["key", "value"])
        for k, v in sorted(_jsonable(result).items()):
            w.writerow([k, json.dumps(v, sort_keys=True)])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with RunConfig fields; flags override it")
    common.add_argument("--theta", type=float)
    common.add_argument("--tau-re", type=float)
    common.add_argument("--tau-im", type=float)
    common.add_argument("--order", type=int, help="truncation order N in t")
    common.add_argument("--box", type=int, help="radius of the box random supports are drawn from")
    common.add_argument("--tol", type=float, help="identity / quantization tolerance")
    common.add_argument("--conv-tol", type=float, help="tolerance of convergent sums")
    common.add_argument("--seed", type=int)
    common.add_argument("--cases", type=int, help="random cases per identity")
    common.add_argument("--support", type=int, help="number of modes in random elements")
    common.add_argument("--l1", type=float, help="l1 norm of random elements")
    common.add_argument("--input", help="JSON file with the input element")
    common.add_argument("--format", choices=["json", "csv"])
    common.add_argument("--out", help="write the report here instead of stdout")

    parser = argparse.ArgumentParser(prog="nctorus", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("identities", parents=[common], help="run the identity catalog")
    p.add_argument("--corrupt-pairing", action="store_true", default=None, help="flip the product phase (mutation test)")
    p = sub.add_parser("exp", parents=[common], help="one exponential series with its divisor table")
    p.add_argument("--which", choices=SERIES_KINDS)
    sub.add_parser("converge", parents=[common], help="evaluate E_l at t = 1 with a certificate")
    p = sub.add_parser("theta-scan", parents=[common], help="discriminant points on a complex line")
    p.add_argument("--radii", type=int, nargs="+")
    p.add_argument("--sv-tol", type=float)
    p.add_argument("--stability-rtol", type=float)
    sub.add_parser("chi", parents=[common], help="trace of the logarithmic derivative")
    return parser


def _emit(text: str, cfg: RunConfig | None) -> None:
    if cfg is not None and cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    report: dict[str, Any] = {"command": args.command, "version": __version__}
    cfg: RunConfig | None = None
    try:
        cfg = load_config(args.config, overrides)
        report["config"] = cfg.to_json()
        report["tolerances"] = cfg.tolerances()
        result, passed = COMMANDS[args.command](cfg)
        report["result"] = result
        report["passed"] = passed
        code = EXIT_OK if passed else EXIT_CHECK_FAILED
    except _Rejected as rej:
        report["result"] = rej.result
        report["passed"] = False
        report["error"] = {"code": "certificate_unavailable" if rej.code == EXIT_NO_CERTIFICATE else "invalid_input"}
        code = rej.code
    except (CertificateUnavailable, TermLimitExceeded) as exc:
        report.update(passed=False, error={"code": "certificate_unavailable", "message": str(exc)})
        code = EXIT_NO_CERTIFICATE
    except (IdentityViolation, QuantizationError) as exc:
        report.update(passed=False, error={"code": "check_failed", "message": str(exc)})
        code = EXIT_CHECK_FAILED
    except (InvalidInput, TraceError, ValueError, TypeError) as exc:
        report.update(passed=False, error={"code": "invalid_input", "message": str(exc)})
        code = EXIT_INVALID_INPUT
    report["exit_code"] = code
    fmt = cfg.format if cfg is not None else "json"
    _emit(render_csv(args.command, report) if fmt == "csv" and "result" in report else render_json(report), cfg)
    return code


if __name__ == "__main__":
    sys.exit(main())
