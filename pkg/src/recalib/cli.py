"""Command line interface: fit, apply, shift, bound, optbins, simulate.

Exit codes: 0 on success, 2 for input problems (CSV parse errors, bad
configs, unsupported model files, absent classes), 3 for fitting
failures (degenerate bins, empty bins, infeasible bin counts). All
output files are written atomically (temp file plus rename). The CLI
reads nothing from the environment; behavior is set by flags and files
only.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
import tempfile

import click

from .bounds import (
    BoundParams,
    InsufficientSampleError,
    ShiftBoundParams,
    optimal_bins,
    risk_bound_report,
    shift_risk_bound_apriori,
    shift_risk_bound_realized,
)
from .core import (
    Composite,
    Constant,
    Identity,
    LabeledSample,
    BinningScheme,
    PiecewiseRecalibrator,
    Recalibrator,
    ShiftCorrector,
    ShiftWeights,
    apply as apply_recalibrator,
    compose,
    estimate_weights,
    fit_recalibrator,
)
from .fileio import fmt_float, write_text_atomic
from .oracle import GaussianMixtureTask, estimate_K
from . import experiments as exp

MODEL_FORMAT_VERSION = 1


class ModelVersionError(ValueError):
    """The model file's format version is not supported."""


def _recalibrator_to_obj(h: Recalibrator) -> dict:
    if isinstance(h, PiecewiseRecalibrator):
        return {
            "kind": "piecewise",
            "edges": list(h.scheme.edges),
            "values": list(h.values),
            "counts": list(h.counts),
        }
    if isinstance(h, ShiftCorrector):
        obj = {"kind": "shift", "w": list(h.weights.w), "provenance": h.weights.provenance}
        if h.weights.p_hat is not None:
            obj["p_hat"] = list(h.weights.p_hat)
            obj["q_hat"] = list(h.weights.q_hat)
        return obj
    if isinstance(h, Composite):
        return {
            "kind": "composite",
            "outer": _recalibrator_to_obj(h.outer),
            "inner": _recalibrator_to_obj(h.inner),
        }
    if isinstance(h, Constant):
        return {"kind": "constant", "value": h.value}
    if isinstance(h, Identity):
        return {"kind": "identity"}
    raise TypeError(f"cannot serialize {type(h).__name__}")


def _recalibrator_from_obj(obj: dict) -> Recalibrator:
    kind = obj.get("kind")
    if kind == "piecewise":
        return PiecewiseRecalibrator(
            BinningScheme(tuple(obj["edges"])),
            tuple(obj["values"]),
            tuple(obj["counts"]),
        )
    if kind == "shift":
        weights = ShiftWeights(
            w=tuple(obj["w"]),
            provenance=obj["provenance"],
            p_hat=tuple(obj["p_hat"]) if "p_hat" in obj else None,
            q_hat=tuple(obj["q_hat"]) if "q_hat" in obj else None,
        )
        return ShiftCorrector(weights)
    if kind == "composite":
        outer = _recalibrator_from_obj(obj["outer"])
        inner = _recalibrator_from_obj(obj["inner"])
        if not isinstance(outer, ShiftCorrector) or not isinstance(inner, PiecewiseRecalibrator):
            raise ValueError("a composite model needs a shift outer part and a piecewise inner part")
        return Composite(outer=outer, inner=inner)
    if kind == "constant":
        return Constant(obj["value"])
    if kind == "identity":
        return Identity()
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(path: str, h: Recalibrator, metadata: dict) -> None:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "model": _recalibrator_to_obj(h),
        "metadata": metadata,
    }
    write_text_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_model(path: str) -> tuple[Recalibrator, dict]:
    with open(path) as f:
        payload = json.load(f)
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelVersionError(
            f"model format version {version!r} is not supported (expected {MODEL_FORMAT_VERSION})"
        )
    return _recalibrator_from_obj(payload["model"]), payload.get("metadata", {})


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _parse_float(text: str, row: int, column: str, lo: float, hi: float) -> float:
    try:
        value = float(text)
    except ValueError:
        _fail(f"row {row}, column {column}: {text!r} is not a number", 2)
    if not lo <= value <= hi:
        _fail(f"row {row}, column {column}: {value!r} outside [{lo}, {hi}]", 2)
    return value


def _read_csv_columns(path: str, header: tuple[str, ...]):
    """Yield (row_number, fields) for a strict-header CSV; exits 2 on damage."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            first = next(reader)
        except StopIteration:
            _fail(f"{path}: empty file, expected header {','.join(header)}", 2)
        if tuple(s.strip() for s in first) != header:
            _fail(f"{path}: row 1: expected header {','.join(header)}, got {','.join(first)}", 2)
        for i, fields in enumerate(reader, start=2):
            if len(fields) != len(header):
                _fail(f"{path}: row {i}: expected {len(header)} fields, got {len(fields)}", 2)
            yield i, fields


def _read_scores_labels(path: str) -> LabeledSample:
    zs: list[float] = []
    ys: list[int] = []
    for i, (z_text, y_text) in _read_csv_columns(path, ("z", "y")):
        zs.append(_parse_float(z_text, i, "z", 0.0, 1.0))
        y = y_text.strip()
        if y not in ("0", "1"):
            _fail(f"row {i}, column y: {y_text!r} is not 0 or 1", 2)
        ys.append(int(y))
    if not zs:
        _fail(f"{path}: no data rows", 2)
    return LabeledSample(z=zs, y=ys)


def _read_labels(path: str) -> list[int]:
    ys: list[int] = []
    for i, (y_text,) in _read_csv_columns(path, ("y",)):
        y = y_text.strip()
        if y not in ("0", "1"):
            _fail(f"{path}: row {i}, column y: {y_text!r} is not 0 or 1", 2)
        ys.append(int(y))
    if not ys:
        _fail(f"{path}: no data rows", 2)
    return ys


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _resolve_K(k_const, task_name, pi) -> float:
    if k_const is not None:
        return float(k_const)
    if task_name == "gaussian":
        return estimate_K(GaussianMixtureTask(pi), 100_000)
    click.echo("warning: no smoothness constant given; assuming K=1 "
               "(pass --K or --task gaussian)", err=True)
    return 1.0


@click.group()
def main() -> None:
    """Binned probability recalibration with finite-sample guarantees."""


@main.command(name="fit")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="CSV with header z,y.")
@click.option("--bins", default="auto", show_default=True,
              help="Bin count, or 'auto' to minimize the bound objective.")
@click.option("--delta", default=0.1, show_default=True, help="Failure probability for bounds.")
@click.option("--K", "k_const", type=float, default=None,
              help="Smoothness constant for --bins auto.")
@click.option("--task", "task_name", type=click.Choice(["gaussian"]), default=None,
              help="Estimate the smoothness constant from this simulation family.")
@click.option("--pi", default=0.5, show_default=True, help="Prior for --task gaussian.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def cmd_fit(input_path, bins, delta, k_const, task_name, pi, out_path) -> None:
    """Fit a uniform-mass binned recalibrator and save it as a model file."""
    data = _read_scores_labels(input_path)
    if bins == "auto":
        K = _resolve_K(k_const, task_name, pi)
        try:
            B, zeta_min = optimal_bins(data.n, delta, K)
        except ValueError as e:
            _fail(str(e), 3)
        click.echo(f"auto bin count: B = {B} (objective {zeta_min:.6g}, K = {K:.6g})")
    else:
        try:
            B = int(bins)
        except ValueError:
            _fail(f"--bins must be an integer or 'auto', got {bins!r}", 2)
    try:
        model = fit_recalibrator(data, B)
    except ValueError as e:
        _fail(str(e), 3)
    try:
        report = risk_bound_report(BoundParams(n=data.n, B=B, delta=delta))
        click.echo(f"calibration risk bound: {fmt_float(report.cal_bound)}")
        click.echo(f"sharpness risk bound:   {fmt_float(report.sha_bound)}")
        click.echo(f"total risk bound:       {fmt_float(report.risk_bound)}")
        click.echo(f"sample-size gate:       {'ok' if report.conditions_met else 'NOT MET'} "
                   f"({report.condition_detail})")
    except InsufficientSampleError as e:
        click.echo(f"risk bound unavailable: {e}", err=True)
    metadata = {
        "n": data.n,
        "B": B,
        "delta": delta,
        "source_sha256": _sha256(input_path),
    }
    save_model(out_path, model, metadata)
    click.echo(f"model written to {out_path}")


@main.command(name="apply")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="CSV with header z.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def cmd_apply(model_path, input_path, out_path) -> None:
    """Recalibrate a stream of scores; writes CSV with header z,z_cal."""
    try:
        model, _ = load_model(model_path)
    except (ModelVersionError, ValueError, KeyError) as e:
        _fail(f"{model_path}: {e}", 2)
    directory = os.path.dirname(os.path.abspath(out_path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp.", text=True)
    try:
        with os.fdopen(fd, "w") as out:
            out.write("z,z_cal\n")
            for i, (z_text,) in _read_csv_columns(input_path, ("z",)):
                z = _parse_float(z_text, i, "z", 0.0, 1.0)
                out.write(f"{fmt_float(z)},{fmt_float(apply_recalibrator(model, z))}\n")
        os.replace(tmp, out_path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    click.echo(f"recalibrated scores written to {out_path}")


@main.command(name="shift")
@click.option("--labels-p", "labels_p_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Source labels CSV, header y.")
@click.option("--labels-q", "labels_q_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Target labels CSV, header y.")
@click.option("--base-model", "base_model_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Piecewise model to wrap into a composite.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def cmd_shift(labels_p_path, labels_q_path, base_model_path, out_path) -> None:
    """Estimate label-shift weights and save a shift or composite model."""
    labels_p = _read_labels(labels_p_path)
    labels_q = _read_labels(labels_q_path)
    try:
        weights = estimate_weights(labels_p, labels_q)
    except ValueError as e:
        _fail(str(e), 2)
    corrector = ShiftCorrector(weights)
    click.echo(f"estimated weights: w_0 = {fmt_float(weights.w[0])}, "
               f"w_1 = {fmt_float(weights.w[1])}")
    metadata = {
        "n_P": len(labels_p),
        "n_Q": len(labels_q),
        "source_sha256": _sha256(labels_p_path),
        "target_sha256": _sha256(labels_q_path),
    }
    if base_model_path is None:
        save_model(out_path, corrector, metadata)
    else:
        try:
            base, base_meta = load_model(base_model_path)
        except (ModelVersionError, ValueError, KeyError) as e:
            _fail(f"{base_model_path}: {e}", 2)
        if not isinstance(base, PiecewiseRecalibrator):
            _fail(f"{base_model_path}: --base-model must hold a piecewise model", 2)
        metadata["base_model"] = base_meta
        save_model(out_path, compose(corrector, base), metadata)
    click.echo(f"model written to {out_path}")


@main.command(name="bound")
@click.option("--n", type=int, default=None, help="Calibration sample size.")
@click.option("--B", "B", type=int, required=True)
@click.option("--delta", default=0.1, show_default=True)
@click.option("--K", "K", type=float, default=1.0, show_default=True)
@click.option("--smooth/--no-smooth", default=False,
              help="Use the smoothness-based sharpness bound 8K^2/B^2 instead of 2/B.")
@click.option("--n-p", "n_P", type=int, default=None, help="Source size (label-shift mode).")
@click.option("--n-q", "n_Q", type=int, default=None, help="Target size (label-shift mode).")
@click.option("--p-min", type=float, default=None)
@click.option("--q-min", type=float, default=None)
@click.option("--w-min", type=float, default=None)
@click.option("--w-max", type=float, default=None)
@click.option("--rho0", type=float, default=None, help="Realized weight ratio for class 0.")
@click.option("--rho1", type=float, default=None, help="Realized weight ratio for class 1.")
@click.option("--risk-p", type=float, default=None,
              help="Known source risk for the realized bound.")
def cmd_bound(n, B, delta, K, smooth, n_P, n_Q, p_min, q_min, w_min, w_max,
              rho0, rho1, risk_p) -> None:
    """Print risk bounds: single-distribution by default, label-shift with --n-p."""
    try:
        if n_P is not None:
            missing = [name for name, v in (("--n-q", n_Q), ("--p-min", p_min),
                                            ("--q-min", q_min), ("--w-min", w_min),
                                            ("--w-max", w_max)) if v is None]
            if missing:
                _fail(f"label-shift mode needs {', '.join(missing)}", 2)
            rho = (rho0, rho1) if rho0 is not None and rho1 is not None else None
            params = ShiftBoundParams(n_P=n_P, n_Q=n_Q, B=B, delta=delta, K=K,
                                      p_min=p_min, q_min=q_min,
                                      w_min=w_min, w_max=w_max, rho=rho)
            report = shift_risk_bound_apriori(params)
            click.echo(f"recalibration terms (shift-scaled): cal {fmt_float(report.cal_bound)}, "
                       f"sha {fmt_float(report.sha_bound)}")
            click.echo(f"target risk bound: {fmt_float(report.risk_bound)}")
            click.echo(f"gates: {'ok' if report.conditions_met else 'NOT MET'} "
                       f"({report.condition_detail})")
            if rho is not None and risk_p is not None:
                realized = shift_risk_bound_realized(params, risk_p)
                click.echo(f"realized-ratio bound: {fmt_float(realized)}")
        else:
            if n is None:
                _fail("--n is required outside label-shift mode", 2)
            report = risk_bound_report(BoundParams(n=n, B=B, delta=delta, K=K, use_smooth=smooth))
            click.echo(f"calibration risk bound: {fmt_float(report.cal_bound)}")
            click.echo(f"sharpness risk bound:   {fmt_float(report.sha_bound)}")
            click.echo(f"total risk bound:       {fmt_float(report.risk_bound)}")
            click.echo(f"sample-size gate:       {'ok' if report.conditions_met else 'NOT MET'} "
                       f"({report.condition_detail})")
    except ValueError as e:
        _fail(str(e), 2)


@main.command(name="optbins")
@click.option("--n", type=int, required=True)
@click.option("--delta", default=0.1, show_default=True)
@click.option("--K", "k_const", type=float, default=None)
@click.option("--task", "task_name", type=click.Choice(["gaussian"]), default=None)
@click.option("--pi", default=0.5, show_default=True)
def cmd_optbins(n, delta, k_const, task_name, pi) -> None:
    """Print the bin count minimizing the risk bound objective."""
    K = _resolve_K(k_const, task_name, pi)
    try:
        B_star, zeta_min = optimal_bins(n, delta, K)
    except ValueError as e:
        _fail(str(e), 2)
    click.echo(f"B_star = {B_star}")
    click.echo(f"zeta_min = {fmt_float(zeta_min)}")


@main.command(name="simulate")
@click.argument("experiment", type=click.Choice(["risk-grid", "opt-b", "label-shift"]))
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, dir_okay=False), help="JSON config overrides.")
@click.option("--seed", type=int, default=None, help="Override the base seed.")
@click.option("--out-dir", "out_dir", required=True, type=click.Path(file_okay=False))
def cmd_simulate(experiment, config_path, seed, out_dir) -> None:
    """Run a simulation study and write CSV results plus a JSON manifest."""
    defaults = {
        "risk-grid": exp.default_risk_grid_config,
        "opt-b": exp.default_opt_b_config,
        "label-shift": exp.default_label_shift_config,
    }[experiment]()
    overrides = {}
    if config_path is not None:
        try:
            with open(config_path) as f:
                overrides = json.load(f)
            if not isinstance(overrides, dict):
                raise ValueError("config must be a JSON object")
        except (json.JSONDecodeError, ValueError) as e:
            _fail(f"{config_path}: {e}", 2)
    if seed is not None:
        overrides["base_seed"] = seed
    try:
        cfg = exp.config_from_dict(overrides, defaults)
    except (TypeError, ValueError) as e:
        _fail(f"bad config: {e}", 2)

    os.makedirs(out_dir, exist_ok=True)
    if experiment == "risk-grid":
        cells = exp.run_risk_grid(cfg)
        exp.write_risk_grid_csv(cells, os.path.join(out_dir, "risk_grid.csv"))
        cell_summaries = [
            {"n": c.n, "B": c.B, "gates_ok": c.gates_ok, "skipped": c.skipped}
            for c in cells
        ]
        exp.write_manifest(cfg, {"experiment": experiment, "cells": cell_summaries},
                           os.path.join(out_dir, "manifest.json"))
        skipped = sum(1 for c in cells if c.skipped)
        if skipped:
            click.echo(f"warning: {skipped} cell(s) skipped (fewer than two points per bin)",
                       err=True)
        click.echo(f"risk grid written to {out_dir} ({len(cells)} cells, {skipped} skipped)")
    elif experiment == "opt-b":
        result = exp.run_optimal_B(cfg)
        exp.write_opt_b_csv(result, os.path.join(out_dir, "opt_b.csv"))
        exp.write_manifest(cfg, {"experiment": experiment, "K_hat": result.K_hat},
                           os.path.join(out_dir, "manifest.json"))
        click.echo(f"bin-count study written to {out_dir} (K_hat = {result.K_hat:.4f})")
    else:
        result = exp.run_label_shift(cfg)
        exp.write_label_shift_csv(result, os.path.join(out_dir, "label_shift.csv"))
        exp.write_manifest(
            cfg,
            {"experiment": experiment, "B_P": result.B_P, "B_Q": result.B_Q,
             "replacements": result.replacements},
            os.path.join(out_dir, "manifest.json"),
        )
        if result.replacements:
            click.echo(f"warning: {result.replacements} draw(s) replaced because a class "
                       "was absent", err=True)
        click.echo(f"label-shift study written to {out_dir}")


if __name__ == "__main__":
    main()
