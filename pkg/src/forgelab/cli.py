"""Command-line experiment driver: ``forgelab <kind> --config <path> [--seed N] [--out DIR] [--threads K]``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import __version__
from . import models as M
from .aesmooth import k1_grid_volume, k1_volume_sandwich, nonsmooth_planes, plane_count_cap
from .batch import BatchForgeQuery, batch_bound, batch_mc_volume, estimate_block_lipschitz
from .errors import ConfigError, ForgeLabError
from .forging import ForgeQuery, exact_forge_lr, exact_forge_nn
from .measure import (
    ball_volume,
    bound_lr,
    bound_nn,
    estimate_lipschitz_L,
    general_bound,
    mc_volume,
    nullity,
)
from .probability import DensitySpec, forge_probability_mc, prob_bound
from .trajectory import certify_deviation, forge_at_occurrences, sgd_run

KINDS = ("forge", "volume-sweep", "trajectory", "figure1", "batch", "probability", "nullity-survey", "k1-geometry")
EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_RUNTIME = 0, 1, 2, 3

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_datum = {"type": "object", "properties": {"features": _vec, "label": _num}, "required": ["features"],
          "additionalProperties": False}

SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": list(KINDS)},
        "seed": {"type": "integer", "minimum": 0},
        "model": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["linear", "onelayer", "tanh", "bistable", "quadratic", "remark"]},
                "d": {"type": "integer", "minimum": 1},
                "n": {"type": "integer", "minimum": 1},
                "activation": {"enum": ["relu", "leaky-relu", "tanh"]},
                "slope": _num,
                "center": _num,
            },
            "required": ["kind", "d"],
            "additionalProperties": False,
        },
        "params": {"oneOf": [_vec, {"type": "object", "properties": {"scale": _num},
                                    "required": ["scale"], "additionalProperties": False}]},
        "target": _datum,
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "label_radius": {"type": "number", "exclusiveMinimum": 0},
        "with_label": {"type": "boolean"},
        "epsilons": {"type": "array", "items": {"type": "number"}},
        "samples": {"type": "integer", "minimum": 1},
        "shards": {"type": "integer", "minimum": 1},
        "bound_scale": {"type": "number", "exclusiveMinimum": 0},
        "slope_range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
        "lipschitz_samples": {"type": "integer", "minimum": 2},
        "labels": _vec,
        "steps": {"oneOf": [_num, _vec]},
        "data": {"type": "array", "items": _datum, "minItems": 1},
        "replacement": _datum,
        "certify": {"type": "object", "properties": {"mu": {"oneOf": [_num, _vec]}, "L": {"oneOf": [_num, _vec]}},
                    "required": ["mu", "L"], "additionalProperties": False},
        "w0": _vec,
        "original_first": _num,
        "forged_first": _num,
        "count": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 1},
        "B": {"type": "integer", "minimum": 1},
        "L": {"type": "number", "exclusiveMinimum": 0},
        "density": {"type": "object"},
        "points": {"type": "integer", "minimum": 1},
        "nullity_max": {"type": "integer", "minimum": 0},
        "n0": {"type": "integer", "minimum": 1},
        "n1": {"type": "integer", "minimum": 1},
        "xi": {"type": "number", "exclusiveMinimum": 0},
        "trials": {"type": "integer", "minimum": 1},
        "cells": {"type": "integer", "minimum": 10},
    },
    "required": ["seed"],
    "additionalProperties": False,
}


def _path(parts) -> str:
    return ".".join(str(p) for p in parts) or "<root>"


def load_config(path, kind: str, seed=None, threads=None) -> dict:
    """Read YAML, apply overrides (flag > environment > file) and validate."""
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh) or {}
    except OSError as e:
        raise ConfigError("--config", str(e)) from e
    except yaml.YAMLError as e:
        raise ConfigError("--config", f"invalid YAML: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a mapping")
    if "FORGELAB_SEED" in os.environ:
        cfg["seed"] = _env_int("FORGELAB_SEED")
    if seed is not None:
        cfg["seed"] = seed
    if cfg.get("kind", kind) != kind:
        raise ConfigError("kind", f"config is for {cfg['kind']!r}, command asked for {kind!r}")
    cfg["kind"] = kind
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as e:
        raise ConfigError(_path(e.absolute_path), e.message) from e
    th = threads if threads is not None else (_env_int("FORGELAB_THREADS") if "FORGELAB_THREADS" in os.environ else 1)
    if th < 1:
        raise ConfigError("threads", "must be at least 1")
    cfg["_threads"] = th
    return cfg


def _env_int(name: str) -> int:
    try:
        return int(os.environ[name])
    except ValueError as e:
        raise ConfigError(name, "must be an integer") from e


def _need(cfg, key):
    if key not in cfg:
        raise ConfigError(key, "required for this experiment kind")
    return cfg[key]


def build_model(cfg) -> M.ModelSpec:
    mc = _need(cfg, "model")
    k, d = mc["kind"], mc["d"]
    try:
        if k == "linear":
            return M.linear_regression(d)
        if k == "onelayer":
            return M.one_layer(mc.get("n", 1), d, mc.get("activation", "relu"), mc.get("slope", 0.01))
        if k == "tanh":
            return M.tanh_net(mc.get("n", 1), d)
        if k == "bistable":
            return M.bistable(mc.get("n", 1), d, mc.get("center", 2.0))
        if k == "quadratic":
            return M.quadratic(d)
        return M.remark_model(d)
    except ValueError as e:
        raise ConfigError("model", str(e)) from e


def build_params(cfg, model, rng) -> np.ndarray:
    p = cfg.get("params", {"scale": 1.0})
    if isinstance(p, dict):
        return p["scale"] * rng.standard_normal(model.n_params)
    if len(p) != model.n_params:
        raise ConfigError("params", f"expected {model.n_params} values, got {len(p)}")
    return np.asarray(p, dtype=float)


def build_datum(cfg, key, model) -> M.Datum:
    t = _need(cfg, key)
    if len(t["features"]) != model.d:
        raise ConfigError(f"{key}.features", f"expected {model.d} values, got {len(t['features'])}")
    label = t.get("label")
    if label is None and model.supervised:
        raise ConfigError(f"{key}.label", "supervised model needs a label")
    return M.Datum(t["features"], label)


def _epsilons(cfg) -> list[float]:
    eps = _need(cfg, "epsilons")
    if not eps:
        raise ConfigError("epsilons", "grid must not be empty")
    for i, e in enumerate(eps):
        if not e > 0:
            raise ConfigError(f"epsilons.{i}", "must be positive")
    return [float(e) for e in eps]


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return "" if x is None else str(x)


def _fit_slope(eps, vals) -> float:
    e, v = np.asarray(eps), np.asarray(vals)
    ok = v > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(e[ok]), np.log(v[ok]), 1)[0])


# ---------------------------------------------------------------- experiment kinds

def run_forge(cfg, rng):
    model = build_model(cfg)
    if model.kind not in ("linear", "onelayer"):
        raise ConfigError("model.kind", "exact forging supports linear and onelayer models")
    w = build_params(cfg, model, rng)
    tgt = build_datum(cfg, "target", model)
    rows, ok = [], True
    g_scale = float(np.linalg.norm(M.grad_w(model, w, tgt)))
    for t in _need(cfg, "labels"):
        try:
            if model.kind == "linear":
                sols = exact_forge_lr(w, tgt.features, tgt.label, t)
            else:
                W, v = M.unpack_onelayer(model, w)
                sols = exact_forge_nn(W, v, tgt.features, tgt.label, t, model.activation, model.slope)
        except ForgeLabError as e:
            sols = getattr(e, "solutions", [])
            rows.append({"label": t, "branch": "", "valid": False, "residual": "", "relative_residual": "",
                         "candidate": "", "reason": type(e).__name__})
        for s in sols:
            rel = s.residual / g_scale
            if s.valid:
                ok &= rel <= 1e-8
            rows.append({"label": t, "branch": s.branch, "valid": s.valid, "residual": s.residual,
                         "relative_residual": rel, "candidate": " ".join(_fmt(c) for c in s.candidate.features),
                         "reason": s.reason})
    cols = ["label", "branch", "valid", "residual", "relative_residual", "candidate", "reason"]
    return cols, rows, {"valid_residuals_below_1e-8": bool(ok)}, None


def _volume_bound(cfg, model, w, tgt, eps, with_label, R, L_cache):
    if model.kind == "linear" and model.d > 1 and with_label:
        return bound_lr(model.d, R, eps).value, "loose"
    if model.kind == "onelayer" and model.activation == "relu" and model.d > 1 and with_label:
        _, v = M.unpack_onelayer(model, w)
        return bound_nn(model.d, model.n, R, eps, v).value, "loose"
    if "L" not in L_cache:
        box = (-R * np.ones(model.d), R * np.ones(model.d))
        L_cache["L"] = cfg.get("L") or estimate_lipschitz_L(model, (w, w), box, cfg.get("lipschitz_samples", 4000),
                                                            cfg["seed"], label=tgt.label)
    rep = general_bound(model, w, tgt, np.zeros(model.d), R, eps, L_cache["L"])
    return rep.value, "general"


def run_volume_sweep(cfg, rng):
    model = build_model(cfg)
    w = build_params(cfg, model, rng)
    tgt = build_datum(cfg, "target", model)
    eps_grid = _epsilons(cfg)
    R = cfg.get("radius", 1.0)
    with_label = cfg.get("with_label", model.supervised)
    samples = cfg.get("samples", 200000)
    if samples < 1000:
        raise ConfigError("samples", "need at least 1000")
    scale = cfg.get("bound_scale", 1.0)
    rows, L_cache = [], {}
    for k, eps in enumerate(eps_grid):
        q = ForgeQuery(model, w, tgt, eps, R, with_label, label_radius=cfg.get("label_radius"))
        est = mc_volume(q, samples, cfg["seed"] + k, cfg.get("shards", 8), cfg["_threads"])
        b, regime = _volume_bound(cfg, model, w, tgt, eps, q.with_label, R, L_cache)
        b *= scale
        rows.append({"epsilon": eps, "mc_mean": est.mean, "half_width": est.half_width, "samples": samples,
                     "bound": b, "regime": regime, "dominated": est.mean - est.half_width <= b})
    slope = _fit_slope(eps_grid, [r["mc_mean"] for r in rows])
    for r in rows:
        r["slope"] = slope
    checks = {"domination": all(r["dominated"] for r in rows)}
    if "slope_range" in cfg:
        lo, hi = cfg["slope_range"]
        checks["slope_in_range"] = bool(lo <= slope <= hi)
    cols = ["epsilon", "mc_mean", "half_width", "samples", "bound", "regime", "dominated", "slope"]
    plot = ("loglog", eps_grid, [r["mc_mean"] for r in rows], [r["bound"] for r in rows], f"fitted slope {slope:.3f}")
    return cols, rows, checks, plot


def _trajectory_rows(orig, forged):
    rows = []
    for k in range(len(orig.iterates)):
        rows.append({"step": k, "h": orig.steps[k] if k < len(orig.steps) else None,
                     "original": " ".join(_fmt(x) for x in orig.iterates[k]),
                     "forged": " ".join(_fmt(x) for x in forged.iterates[k]),
                     "deviation": float(np.linalg.norm(forged.iterates[k] - orig.iterates[k]))})
    return rows


def run_trajectory(cfg, rng):
    model = build_model(cfg)
    w0 = np.asarray(cfg["w0"], dtype=float) if "w0" in cfg else build_params(cfg, model, rng)
    data = [M.Datum(d["features"], d.get("label")) for d in _need(cfg, "data")]
    for i, dt in enumerate(data):
        if dt.features.size != model.d:
            raise ConfigError(f"data.{i}.features", f"expected {model.d} values")
    rep = build_datum(cfg, "replacement", model)
    orig = sgd_run(model, w0, data, _need(cfg, "steps"))
    forged = forge_at_occurrences(orig, data[0], rep)
    rows = _trajectory_rows(orig, forged)
    checks = {}
    if "certify" in cfg:
        cert = certify_deviation(model, orig, forged, cfg["certify"]["mu"], cfg["certify"]["L"])
        checks["hypotheses"] = not cert.violations
        checks["contraction"] = bool(cert.contraction_ok)
        checks["conclusion"] = bool(cert.conclusion_holds) or cert.trivially_equal
    cols = ["step", "h", "original", "forged", "deviation"]
    plot = ("overlay", np.arange(len(rows)), orig.iterates[:, 0], forged.iterates[:, 0], "first coordinate")
    return cols, rows, checks, plot


def run_figure1(cfg, rng):
    model = M.bistable(1, 1, cfg.get("model", {}).get("center", 2.0))
    count = cfg.get("count", 20)
    x0 = cfg.get("original_first", -0.5)
    xt = cfg.get("forged_first", 0.2)
    rest = rng.uniform(-1.0, 1.0, count - 1)
    data = [M.Datum([x0])] + [M.Datum([x]) for x in rest]
    w0 = cfg.get("w0", [1e-4])
    orig = sgd_run(model, w0, data, cfg.get("steps", 0.3))
    forged = forge_at_occurrences(orig, data[0], M.Datum([xt]))
    rows = _trajectory_rows(orig, forged)
    c = model.center
    checks = {"original_to_negative_basin": bool(abs(orig.final[0] + c) < 0.25 * c),
              "forged_to_positive_basin": bool(abs(forged.final[0] - c) < 0.25 * c)}
    cols = ["step", "h", "original", "forged", "deviation"]
    plot = ("overlay", np.arange(len(rows)), orig.iterates[:, 0], forged.iterates[:, 0], "w")
    return cols, rows, checks, plot


def run_batch(cfg, rng):
    model = build_model(cfg)
    w = build_params(cfg, model, rng)
    tgt = build_datum(cfg, "target", model)
    m, B = _need(cfg, "m"), _need(cfg, "B")
    if m > B:
        raise ConfigError("m", "must not exceed B")
    R = cfg.get("radius", 1.0)
    samples = cfg.get("samples", 200000)
    scale = cfg.get("bound_scale", 1.0)
    if "L" in cfg:
        L = cfg["L"]
    else:
        box = (-R * np.ones(model.d), R * np.ones(model.d))
        L = estimate_lipschitz_L(model, (w, w), box, cfg.get("lipschitz_samples", 4000), cfg["seed"], label=tgt.label)
    rows = []
    for k, eps in enumerate(_epsilons(cfg)):
        q = BatchForgeQuery(model, w, tgt, m, B, eps, R)
        est = batch_mc_volume(q, samples, cfg["seed"] + k, cfg.get("shards", 8), cfg["_threads"])
        rep = batch_bound(m, model.d, model.n_params, ball_volume(model.d, R) ** m, L, B, eps)
        b = rep.value * scale
        rows.append({"epsilon": eps, "mc_mean": est.mean, "half_width": est.half_width, "bound": b,
                     "regime": rep.regime, "L": L, "dominated": est.mean - est.half_width <= b})
    cols = ["epsilon", "mc_mean", "half_width", "bound", "regime", "L", "dominated"]
    checks = {"domination": all(r["dominated"] for r in rows)}
    if "lipschitz_samples" in cfg and "L" not in cfg:
        box = (-R * np.ones(model.d), R * np.ones(model.d))
        Lb = estimate_block_lipschitz(model, w, box, m, B, cfg["lipschitz_samples"], cfg["seed"] + 1, tgt.label)
        checks["block_lipschitz"] = bool(Lb <= L / B * 1.05)
    plot = ("loglog", [r["epsilon"] for r in rows], [r["mc_mean"] for r in rows], [r["bound"] for r in rows],
            rows[0]["regime"])
    return cols, rows, checks, plot


def run_probability(cfg, rng):
    model = build_model(cfg)
    w = build_params(cfg, model, rng)
    tgt = build_datum(cfg, "target", model)
    dc = dict(cfg.get("density", {}))
    dc.setdefault("R1", cfg.get("radius", 1.0))
    dc.setdefault("R2", cfg.get("label_radius", dc["R1"]))
    try:
        spec = DensitySpec(model.d, **dc)
    except (TypeError, ValueError) as e:
        raise ConfigError("density", str(e)) from e
    trials = cfg.get("trials", 200000)
    scale = cfg.get("bound_scale", 1.0)
    kind = "lr-loose" if model.kind == "linear" else "nn-loose"
    rows = []
    for k, eps in enumerate(_epsilons(cfg)):
        q = ForgeQuery(model, w, tgt, eps, spec.R1, spec.support == "product", spec.center, spec.label_center, spec.R2)
        extra = {}
        if kind == "nn-loose":
            extra = {"n": model.n, "v": M.unpack_onelayer(model, w)[1]}
        b = prob_bound(kind, spec, eps, **extra) * scale
        r = forge_probability_mc(q, spec, trials, cfg["seed"] + k, cfg.get("shards", 8), cfg["_threads"], b, kind)
        rows.append({"epsilon": eps, "mc_estimate": r.mc_estimate, "half_width": r.half_width, "bound": b,
                     "bound_kind": kind, "dominated": r.dominated})
    cols = ["epsilon", "mc_estimate", "half_width", "bound", "bound_kind", "dominated"]
    plot = ("loglog", [r["epsilon"] for r in rows], [r["mc_estimate"] for r in rows], [r["bound"] for r in rows],
            kind)
    return cols, rows, {"domination": all(r["dominated"] for r in rows)}, plot


def run_nullity_survey(cfg, rng):
    model = build_model(cfg)
    with_label = cfg.get("with_label", model.supervised)
    R = cfg.get("radius", 1.0)
    cap = cfg.get("nullity_max")
    rows, ok = [], True
    for i in range(cfg.get("points", 100)):
        w = build_params(cfg, model, rng)
        z = R * rng.uniform(-1, 1, model.d)
        dt = M.Datum(z, rng.uniform(-R, R) if (model.supervised or model.kind == "quadratic") else None)
        try:
            rep = nullity(M.mixed_second_variation(model, w, dt, with_label))
        except ForgeLabError as e:
            rows.append({"point": i, "rank": "", "nullity": "", "columns": "", "sigma_min": "", "within_cap": "",
                         "note": type(e).__name__})
            continue
        within = cap is None or rep.nullity <= cap
        ok &= within
        rows.append({"point": i, "rank": rep.rank, "nullity": rep.nullity, "columns": rep.rank + rep.nullity,
                     "sigma_min": float(rep.singular_values[-1]) if rep.singular_values.size else 0.0,
                     "within_cap": within, "note": ""})
    cols = ["point", "rank", "nullity", "columns", "sigma_min", "within_cap", "note"]
    plot = ("hist", [r["nullity"] for r in rows if r["nullity"] != ""], "nullity")
    return cols, rows, {"nullity_cap": bool(ok)}, plot


def run_k1_geometry(cfg, rng):
    n0, n1 = _need(cfg, "n0"), _need(cfg, "n1")
    d = cfg.get("model", {}).get("d", 2)
    R, xi = cfg.get("radius", 1.0), cfg.get("xi", 0.01)
    cells = cfg.get("cells", 2000 if d == 2 else 150)
    if not 0 < xi < R:
        raise ConfigError("xi", "need 0 < xi < radius")
    rows, ok_count, ok_bracket = [], True, True
    for i in range(cfg.get("trials", 10)):
        W0 = rng.standard_normal((n0, d))
        W1 = rng.standard_normal((n1, n0))
        v = rng.standard_normal(n1)
        hp = nonsmooth_planes(W0, W1, v)
        lo, up = k1_volume_sandwich(R, xi, n0, n1, d)
        grid = k1_grid_volume(hp.normals, R, xi, cells) if d <= 3 else float("nan")
        cnt_ok = len(hp) <= plane_count_cap(n0, n1)
        br = bool(lo <= grid <= up) if d <= 3 else True
        ok_count &= cnt_ok
        ok_bracket &= br
        rows.append({"trial": i, "planes": len(hp), "cap": plane_count_cap(n0, n1),
                     "realized": int(hp.realized.sum()), "kinked": int(hp.kinked.sum()),
                     "lower": lo, "grid": grid, "upper": up, "bracketed": br})
    cols = ["trial", "planes", "cap", "realized", "kinked", "lower", "grid", "upper", "bracketed"]
    plot = ("hist", [r["planes"] for r in rows], "plane count")
    return cols, rows, {"plane_count": bool(ok_count), "sandwich": bool(ok_bracket)}, plot


RUNNERS = {
    "forge": run_forge,
    "volume-sweep": run_volume_sweep,
    "trajectory": run_trajectory,
    "figure1": run_figure1,
    "batch": run_batch,
    "probability": run_probability,
    "nullity-survey": run_nullity_survey,
    "k1-geometry": run_k1_geometry,
}


# ---------------------------------------------------------------- outputs

def write_results(path: Path, cols, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for r in rows:
            wr.writerow([_fmt(r.get(c)) for c in cols])


def write_plot(path: Path, plot, title: str):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "forgelab"
    fig, ax = plt.subplots(figsize=(6, 4))
    if plot is None:
        ax.text(0.5, 0.5, "no plot for this experiment", ha="center", va="center")
        ax.set_axis_off()
    elif plot[0] == "loglog":
        _, x, y, b, note = plot
        xs = np.asarray(x, dtype=float)
        ys = np.asarray(y, dtype=float)
        pos = ys > 0
        ax.loglog(xs[pos], ys[pos], "o-", label="Monte Carlo")
        ax.loglog(xs, np.asarray(b, dtype=float), "s--", label="bound")
        ax.set_xlabel("epsilon")
        ax.set_ylabel("measure")
        ax.set_title(f"{title}: {note}")
        ax.legend()
    elif plot[0] == "overlay":
        _, x, a, b, note = plot
        ax.plot(x, a, "o-", color="tab:red", label="original")
        ax.plot(x, b, "o-", color="tab:green", label="forged")
        ax.set_xlabel("step")
        ax.set_ylabel(note)
        ax.set_title(title)
        ax.legend()
    else:
        _, vals, note = plot
        ax.hist(vals, bins=max(1, len(set(vals))))
        ax.set_xlabel(note)
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def run(kind: str, cfg: dict, out: Path) -> int:
    rng = np.random.default_rng(cfg["seed"])
    cols, rows, checks, plot = RUNNERS[kind](cfg, rng)
    out.mkdir(parents=True, exist_ok=True)
    write_results(out / "results.csv", cols, rows)
    write_plot(out / "plot.svg", plot, kind)
    passed = all(checks.values())
    manifest = {
        "kind": kind,
        "seed": cfg["seed"],
        "threads": cfg["_threads"],
        "version": __version__,
        "config": {k: v for k, v in cfg.items() if not k.startswith("_")},
        "checks": checks,
        "passed": passed,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return EXIT_OK if passed else EXIT_CHECK


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and math.isnan(o):
        return None
    raise TypeError(type(o).__name__)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="forgelab", description="Gradient-forging experiments.")
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--config", required=True)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", default="forgelab-out")
    ap.add_argument("--threads", type=int)
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config, args.kind, args.seed, args.threads)
        return run(args.kind, cfg, Path(args.out))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - every other failure maps to the runtime exit code
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
