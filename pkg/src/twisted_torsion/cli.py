"""Command line entry point: identity checks, parametrix dumps, spectra and torsion reports.

Exit codes: 0 pass, 1 criteria fail, 2 config error, 3 certification error.
"""
import argparse
import copy
import hashlib
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import landau, model_kernel, pgrading, regularizer
from .landau import CertificationError, SpectralData
from .torus import FluxError, TorusModel

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_CERT = 0, 1, 2, 3

DEFAULT_TOLERANCES = {
    "quadrature_abs": 1e-12,
    "identity_tol": 1e-10,
    "zeta_tol": 1e-10,
    "zeta_hat_rel": 1e-6,
    "certification": 1e-12,
    "saturation": 1e-6,
    "trend_window": 3,
}

DEFAULT_CONFIG = {
    "schema": 1,
    "model": {"n": 1, "curvature": [2 * math.pi], "volume": 1.0, "rank_e": 1, "three_form": []},
    "p_grid": [8, 16, 32, 64],
    "cutoff": 24,
    "jmax": 2,
    "seed": 7,
    "identity": {"samples": 500, "max_n": 4, "zeta_hat_models": 50},
    "tolerances": {},
    "workers": 1,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "model"],
    "properties": {
        "schema": {"const": 1},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n", "curvature"],
            "properties": {
                "n": {"type": "integer", "minimum": 1, "maximum": 12},
                "curvature": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "volume": {"type": "number", "exclusiveMinimum": 0},
                "rank_e": {"type": "integer", "minimum": 1},
                "three_form": {
                    "type": "array",
                    "items": {"type": "array", "minItems": 4, "maxItems": 4,
                              "prefixItems": [{"type": "integer"}, {"type": "integer"}, {"type": "integer"},
                                              {"type": "number"}]},
                },
            },
        },
        "p_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "cutoff": {"type": "integer", "minimum": 1},
        "jmax": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer"},
        "identity": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "samples": {"type": "integer", "minimum": 1},
                "max_n": {"type": "integer", "minimum": 1, "maximum": 12},
                "zeta_hat_models": {"type": "integer", "minimum": 1},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number"} for k in DEFAULT_TOLERANCES},
        },
        "workers": {"type": "integer", "minimum": 1},
        "output": {"type": "string"},
    },
}


class ConfigError(ValueError):
    pass


def load_config(path=None, overrides=()):
    """Read, validate and complete a run configuration."""
    if path is None:
        raw = copy.deepcopy(DEFAULT_CONFIG)
    else:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    cfg.update({k: v for k, v in raw.items() if k not in ("identity", "tolerances")})
    cfg["identity"] = {**DEFAULT_CONFIG["identity"], **raw.get("identity", {})}
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(raw.get("tolerances", {}))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--tolerance expects K=V, got {item!r}")
        key, val = item.split("=", 1)
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown tolerance {key!r}")
        try:
            tol[key] = float(val)
        except ValueError as exc:
            raise ConfigError(f"tolerance {key} needs a number") from exc
    cfg["tolerances"] = tol
    grid = cfg["p_grid"]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("p_grid must be strictly ascending")
    try:
        model = TorusModel.from_dict(cfg["model"])
        for p in grid:
            model.degeneracy(p)
    except (ValueError, FluxError) as exc:
        raise ConfigError(str(exc)) from exc
    cfg["_model"] = model
    return cfg


def _tolerance_header(cfg):
    return "# tolerances: " + ", ".join(f"{k}={cfg['tolerances'][k]!r}" for k in sorted(cfg["tolerances"]))


def _write_text(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())


# check-identities

def identity_report(cfg):
    """Deterministic text report of the model-kernel identity sweeps; returns (text, ok)."""
    tol = cfg["tolerances"]
    ident = cfg["identity"]
    rng = np.random.default_rng(cfg["seed"])
    lines = [_tolerance_header(cfg)]
    worst = 0.0
    for _ in range(ident["samples"]):
        n = int(rng.integers(1, ident["max_n"] + 1))
        a = tuple(rng.uniform(0.1, 20.0, size=n))
        u = float(rng.uniform(0.05, 8.0))
        spec = model_kernel.CurvatureSpectrum(a)
        ld = model_kernel.local_density(u, spec)
        tf = model_kernel.trace_form(u, spec)
        worst = max(worst, abs(ld - tf))
    ok_identity = worst < tol["identity_tol"]
    lines.append(f"identity local_density == trace_form: samples={ident['samples']} "
                 f"max_dev={worst:.3e} {'PASS' if ok_identity else 'FAIL'}")

    z2 = model_kernel.riemann_zeta_mellin(2).real
    dev2 = abs(z2 - math.pi ** 2 / 6)
    ok_zeta = dev2 < tol["zeta_tol"]
    lines.append(f"zeta Mellin z=2: value={z2:.15f} dev={dev2:.3e} {'PASS' if ok_zeta else 'FAIL'}")

    worst_rel = 0.0
    for _ in range(ident["zeta_hat_models"]):
        n = int(rng.integers(1, ident["max_n"] + 1))
        spec = model_kernel.CurvatureSpectrum(tuple(rng.uniform(0.5, 30.0, size=n)), float(rng.uniform(0.5, 2.0)))
        closed = model_kernel.zeta_hat_prime_zero(spec)
        numeric = model_kernel.zeta_hat_prime_numeric(spec)
        worst_rel = max(worst_rel, abs(numeric - closed) / max(abs(closed), 1e-300))
    ok_hat = worst_rel < tol["zeta_hat_rel"]
    lines.append(f"zeta_hat'(0) closed form vs numerical derivative: models={ident['zeta_hat_models']} "
                 f"max_rel={worst_rel:.3e} {'PASS' if ok_hat else 'FAIL'}")
    ok = ok_identity and ok_zeta and ok_hat
    lines.append(f"verdict: {'PASS' if ok else 'FAIL'}")
    return "\n".join(lines) + "\n", ok


def cmd_check_identities(cfg, out):
    text, ok = identity_report(cfg)
    _write_text(out / "identities.txt", text)
    sys.stdout.write(text)
    return EXIT_PASS if ok else EXIT_FAIL


# parametrix

def parametrix_report(model, jmax, exact=False):
    if not (0 <= jmax <= 4):
        raise ConfigError("parametrix jmax must lie in [0, 4]")
    op = pgrading.assemble_dirac_squared(model, exact=exact)
    thetas = pgrading.parametrix_coefficients(op, jmax)
    lines = [f"operator degree: {op.degree()}"]
    b_free = pgrading.b_free_max_part(model)
    lines.append(f"max-degree part B-free: {'yes' if b_free else 'no'}")
    lines.append("max-degree part:")
    lines.append(op.max_degree_part().canonical_text())
    for j, th in enumerate(thetas):
        lines.append(f"Theta_{j}:")
        lines.append(th.canonical_text())
    audit = pgrading.degree_audit(thetas)
    lines.append("degree audit: j deg p_max pass")
    ok = b_free and op.degree() == 2
    for row in audit:
        j, deg, pmax, passed = row
        lines.append(f"  {j} {deg} {pmax} {'PASS' if passed else 'FAIL'}")
        ok = ok and passed
    lines.append(f"verdict: {'PASS' if ok else 'FAIL'}")
    return "\n".join(lines) + "\n", ok


def cmd_parametrix(cfg, out, jmax):
    text, ok = parametrix_report(cfg["_model"], jmax)
    text = _tolerance_header(cfg) + "\n" + text
    _write_text(out / "parametrix.txt", text)
    sys.stdout.write(text)
    return EXIT_PASS if ok else EXIT_FAIL


# spectrum

def spectrum_key(model, p, K):
    doc = json.dumps({"model": model.to_dict(), "p": p, "cutoff": K}, sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:24]


def certify(data, tol):
    """Raise unless the split point of the theta-integral is certified at this cutoff."""
    u_c = data.certified_u(tol)
    if u_c > regularizer.SERIES_U_MAX:
        suggested = regularizer._suggest_cutoff(data, 0.25, tol)
        raise CertificationError(
            f"p={data.p}: cutoff {data.cutoff} certifies only u >= {u_c:.3g}; suggested cutoff K={suggested}",
            suggested_cutoff=suggested)
    return u_c


def cached_spectrum(model, p, K, cache_dir, force=False):
    """SpectralData from the content-addressed cache, computing and storing it on a miss."""
    path = cache_dir / f"{spectrum_key(model, p, K)}.json"
    if path.exists() and not force:
        return SpectralData.from_json(path.read_text()), path, True
    data = landau.landau_spectrum(model, p, K)
    cache_dir.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(data.to_json())
        fh.flush()
        os.fsync(fh.fileno())
    if force:
        os.replace(tmp, path)
    else:
        try:
            os.link(tmp, path)  # exclusive create: a concurrent writer keeps its copy
        except FileExistsError:
            pass
        os.unlink(tmp)
    return data, path, False


def _spectrum_job(args):
    model_dict, p, K, cache_dir, force = args
    return cached_spectrum(TorusModel.from_dict(model_dict), p, K, Path(cache_dir), force)


def _spectra(cfg, out, force, p_values):
    model = cfg["_model"]
    K = cfg["cutoff"]
    cache_dir = out / "spectra"
    jobs = [(model.to_dict(), p, K, str(cache_dir), force) for p in p_values]
    if cfg["workers"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
            results = list(pool.map(_spectrum_job, jobs))
    else:
        results = [_spectrum_job(j) for j in jobs]
    return dict(zip(p_values, results))


def cmd_spectrum(cfg, out, force, p=None):
    p_values = [p] if p is not None else cfg["p_grid"]
    results = _spectra(cfg, out, force, p_values)
    for pv in p_values:
        data, path, hit = results[pv]
        u_c = certify(data, cfg["tolerances"]["certification"])
        kern = [m for lam, m in data.entries if lam == 0.0]
        print(f"p={pv} cutoff={data.cutoff} {'cache-hit' if hit else 'computed'} kernel={list(kern[0]) if kern else []} "
              f"u_split={u_c:.6g} file={path}")
    return EXIT_PASS


# torsion

def cmd_torsion(cfg, out, force):
    model = cfg["_model"]
    tol = cfg["tolerances"]
    results = _spectra(cfg, out, force, cfg["p_grid"])
    spectra = {}
    for p, (data, _, _) in results.items():
        certify(data, tol["certification"])
        spectra[p] = data
    report = regularizer.asymptotics_report(model, cfg["p_grid"], K=cfg["cutoff"], tol=tol["certification"],
                                            saturation_tol=tol["saturation"], spectra=spectra)
    report.header["tolerances"] = tol
    report.header["certified"] = True
    _write_text(out / "report.csv", report.to_csv())
    _write_text(out / "report.json", report.to_json())
    sys.stdout.write(_tolerance_header(cfg) + "\n" + report.to_csv())
    ok = report.verdict["pass"]
    print(f"verdict: {'PASS' if ok else 'FAIL'}")
    return EXIT_PASS if ok else EXIT_FAIL


def build_parser():
    parser = argparse.ArgumentParser(prog="twisted-torsion")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("check-identities", "parametrix", "spectrum", "torsion"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, default=None)
        sp.add_argument("--out", type=Path, default=Path("out"))
        sp.add_argument("--force", action="store_true")
        sp.add_argument("--tolerance", action="append", default=[], metavar="K=V")
        if name == "parametrix":
            sp.add_argument("--jmax", type=int, default=None)
        if name == "spectrum":
            sp.add_argument("--p", type=int, default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.tolerance)
        out = args.out
        if args.command == "check-identities":
            status = cmd_check_identities(cfg, out)
        elif args.command == "parametrix":
            jmax = args.jmax if args.jmax is not None else cfg["jmax"]
            status = cmd_parametrix(cfg, out, jmax)
        elif args.command == "spectrum":
            status = cmd_spectrum(cfg, out, args.force, args.p)
        else:
            status = cmd_torsion(cfg, out, args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        status = EXIT_CONFIG
    except CertificationError as exc:
        print(f"certification error: {exc}", file=sys.stderr)
        status = EXIT_CERT
    sys.stdout.flush()
    return status


if __name__ == "__main__":
    sys.exit(main())
