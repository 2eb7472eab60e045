"""``beamlab`` command line: classify, simulate, spectrum, resolvent,
verify-mode and report.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, validate_report
from .discretization import assemble, build_mesh
from .dynamics import FitError, StepError, default_window, fit_decay, mode_state, random_initial, simulate
from .model import (
    STRONGLY_STABLE,
    ConfigError,
    HypothesisError,
    classify,
    closed_form_mode,
    dispersion_gap,
)
from .spectral import PoleError, SpectralError, full_spectrum, mode_residual, resolvent_sweep

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("classify", "simulate", "spectrum", "resolvent", "verify-mode", "report")


def _clean(obj):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(doc: dict) -> str:
    return json.dumps(_clean(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _header(kind: str, cfg: RunConfig) -> dict:
    return {
        "tool": "beamlab",
        "version": __version__,
        "kind": kind,
        "config": cfg.beam.to_dict(),
        "damping": cfg.damping.to_dict(),
    }


def _parse_n_range(text: str) -> list[int]:
    try:
        a, b = text.split("..")
        return [int(a), int(b)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a..b, got {text!r}")


def _overrides(args) -> dict:
    exp = {}
    for attr, key in [("dt", "dt"), ("t_final", "t_final"), ("lambda_min", "lambda_min"),
                      ("lambda_max", "lambda_max"), ("points", "n_points"), ("theorem", "theorem"),
                      ("n_range", "n_range"), ("initial", "initial"), ("seed", "seed")]:
        v = getattr(args, attr, None)
        if v is not None:
            exp[key] = v
    out = {}
    if exp:
        out["experiment"] = exp
    if args.elements is not None:
        out["mesh"] = {"n_elements": args.elements}
    return out


def _system(cfg: RunConfig, n_elements: int | None = None):
    n = cfg.n_elements if n_elements is None else n_elements
    return assemble(cfg.beam, cfg.damping, build_mesh(cfg.beam.L, n))


def _emit(doc: dict, out: Path | None, csv_text: str | None = None) -> str:
    validate_report(_clean(doc))
    text = dumps(doc)
    if out is not None:
        if csv_text is None:
            write_atomic(out, text)
        else:
            write_atomic(out, csv_text)
            write_atomic(out.with_suffix(".json"), text)
    return text


def run_classify(cfg: RunConfig) -> dict:
    doc = _header("classify", cfg)
    doc.update(classify(cfg.beam, cfg.damping).to_dict())
    return doc


def _initial_state(sys_, cfg: RunConfig):
    if cfg.initial == "random":
        return random_initial(sys_, cfg.seed, cfg.smoothness)
    _, theorem, n = cfg.initial.split(":")
    return mode_state(sys_, closed_form_mode(theorem, int(n), cfg.beam))


def simulation_body(cfg: RunConfig):
    sys_ = _system(cfg)
    U0 = _initial_state(sys_, cfg)
    trace = simulate(sys_, U0, cfg.dt, cfg.t_final)
    e = trace.energies
    body = {
        "E0": float(e[0]),
        "E_final": float(e[-1]),
        "balance_residual": trace.balance_residual,
        "drift": trace.drift,
        "n_steps": int(e.size - 1),
        "dt": cfg.dt,
        "t_final": float(trace.times[-1]),
        "initial": cfg.initial,
        "monotone": bool(np.all(np.diff(e) <= 1e-12 * e[0])),
        "n_elements": cfg.n_elements,
    }
    if cfg.initial == "random":
        body["seed"] = cfg.seed
        body["smoothness"] = cfg.smoothness
    window = cfg.fit_window or default_window(float(trace.times[-1]))
    try:
        body["decay_fit"] = fit_decay(trace, window).to_dict()
    except FitError as exc:
        body["decay_fit"] = {"error": str(exc)}
    return body, trace


def spectrum_body(cfg: RunConfig, sys_=None):
    sys_ = sys_ or _system(cfg)
    rep = full_spectrum(sys_)
    body = rep.summary()
    body.pop("config"), body.pop("damping")
    body["n_elements"] = cfg.n_elements
    return body, rep


def sweep_body(cfg: RunConfig, sys_=None):
    sys_ = sys_ or _system(cfg)
    sw = resolvent_sweep(sys_, cfg.lambda_min, cfg.lambda_max, cfg.n_points, cfg.spacing)
    body = sw.summary()
    body.pop("config"), body.pop("damping")
    body["n_elements"] = cfg.n_elements
    return body, sw


def verify_rows(cfg: RunConfig) -> list[dict]:
    coarse, fine = _system(cfg, cfg.n_elements), _system(cfg, 2 * cfg.n_elements)
    rows = []
    for n in range(cfg.n_range[0], cfg.n_range[1] + 1):
        mode = closed_form_mode(cfg.theorem, n, cfg.beam)
        rc, rf = mode_residual(coarse, mode), mode_residual(fine, mode)
        rows.append({
            "n": n,
            "lambda": mode.lam,
            "dispersion_gap": dispersion_gap(cfg.theorem, n, cfg.beam),
            "residual_coarse": rc,
            "residual_fine": rf,
            "ratio": rc / rf if rf > 0 else None,
        })
    return rows


def _verify_csv(rows: list[dict]) -> str:
    cols = ["n", "lambda", "dispersion_gap", "residual_coarse", "residual_fine", "ratio"]
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join("" if r[c] is None else repr(r[c]) for c in cols))
    return "\n".join(lines) + "\n"


def run_report(cfg: RunConfig) -> tuple[dict, int]:
    doc = _header("report", cfg)
    sections: dict = {}
    failures = 0
    verdict = None
    try:
        verdict = classify(cfg.beam, cfg.damping)
        sections["classify"] = verdict.to_dict()
    except Exception as exc:  # noqa: BLE001 - recorded per section
        sections["classify"] = {"error": f"{type(exc).__name__}: {exc}"}
        failures += 1
    sys_ = _system(cfg)
    try:
        sections["spectrum"], _ = spectrum_body(cfg, sys_)
    except Exception as exc:  # noqa: BLE001
        sections["spectrum"] = {"error": f"{type(exc).__name__}: {exc}"}
        failures += 1
    try:
        sections["simulation"], _ = simulation_body(cfg)
    except Exception as exc:  # noqa: BLE001
        sections["simulation"] = {"error": f"{type(exc).__name__}: {exc}"}
        failures += 1
    if verdict is not None and verdict.status == STRONGLY_STABLE:
        try:
            sections["sweep"], _ = sweep_body(cfg, sys_)
        except Exception as exc:  # noqa: BLE001
            sections["sweep"] = {"error": f"{type(exc).__name__}: {exc}"}
            failures += 1
    else:
        status = verdict.status if verdict is not None else "unclassified"
        sections["sweep"] = {"skipped": f"verdict is {status}; sweep needs a strongly stable pattern"}
    doc["sections"] = sections
    return doc, (EXIT_NUMERIC if failures == len(sections) else EXIT_OK)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="beamlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"beamlab {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="JSON run configuration (defaults if omitted)")
    p.add_argument("--out", type=Path, help="output path; CSV reports also write a .json sidecar")
    p.add_argument("--elements", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--lambda-min", dest="lambda_min", type=float)
    p.add_argument("--lambda-max", dest="lambda_max", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--theorem", choices=("T2.3", "T2.4", "T2.5"))
    p.add_argument("--n-range", dest="n_range", type=_parse_n_range, metavar="a..b")
    p.add_argument("--initial", help="random | mode:<T2.3|T2.4|T2.5>:<n>")
    p.add_argument("--seed", type=int)
    return p


def dispatch(args) -> tuple[str, int]:
    cfg = RunConfig.load(args.config, _overrides(args))
    out = args.out
    if args.command == "classify":
        return _emit(run_classify(cfg), out), EXIT_OK
    if args.command == "simulate":
        body, trace = simulation_body(cfg)
        doc = _header("simulate", cfg)
        doc.update(body)
        return _emit(doc, out, trace.to_csv()), EXIT_OK
    if args.command == "spectrum":
        body, rep = spectrum_body(cfg)
        doc = _header("spectrum", cfg)
        doc.update(body)
        return _emit(doc, out, rep.to_csv()), EXIT_OK
    if args.command == "resolvent":
        body, sw = sweep_body(cfg)
        doc = _header("resolvent", cfg)
        doc.update(body)
        return _emit(doc, out, sw.to_csv()), EXIT_OK
    if args.command == "verify-mode":
        rows = verify_rows(cfg)
        doc = _header("verify-mode", cfg)
        doc.update({"theorem": cfg.theorem, "n_coarse": cfg.n_elements,
                    "n_fine": 2 * cfg.n_elements, "rows": rows})
        return _emit(doc, out, _verify_csv(rows)), EXIT_OK
    doc, code = run_report(cfg)
    return _emit(doc, out), code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text, code = dispatch(args)
    except (ConfigError, HypothesisError) as exc:
        print(f"beamlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PoleError as exc:
        print(f"beamlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SpectralError, StepError, FitError, np.linalg.LinAlgError) as exc:
        print(f"beamlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
