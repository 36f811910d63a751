"""Command-line harness: sg simulate | fit | recover | verify | roundtrip.

Exit codes: 0 success, 1 I/O failure, 2 config/format errors, 3 rank-deficient
fit, 4 model/experiment incompatibility, 5 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from .estimate import (
    FitResult,
    RankDeficientFit,
    fit_affine,
    goodness_of_fit,
    recover_parameters,
)
from .experiment import (
    ExperimentConfig,
    FormatError,
    generate_dataset,
    read_dataset,
    write_dataset,
)
from .linearize import (
    AffineCoefficients,
    ObservableSpec,
    Outcome,
    PARAM_LABELS,
    PerturbationParams,
    Protocol,
    compare_with_paper,
    design_matrix,
    render_combination,
    transcribed_system,
)
from .verify import run_all

CONFIG_SCHEMA = "sgkit-config-v1"
FITS_SCHEMA = "sgkit-fits-v1"
RECOVERY_SCHEMA = "sgkit-recovery-v1"

DEFAULT_RESIDUAL_THRESHOLD = 1e-4
FIT_CHI2_THRESHOLD = 3.0


class ConfigError(ValueError):
    pass


def _require(config: dict, key: str, kind, what: str):
    if key not in config:
        raise ConfigError(f"missing key '{key}'")
    value = config[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool):
        raise ConfigError(f"key '{key}' must be {what}")
    if not isinstance(value, kind):
        raise ConfigError(f"key '{key}' must be {what}")
    return value


def load_config(path) -> tuple[ExperimentConfig, dict]:
    """Parse and validate a run configuration; unknown keys are rejected."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")

    known = {
        "schema", "eta", "perturbation", "grid", "protocols", "shots", "seed",
        "strict_normalization", "constraints", "residual_threshold",
    }
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown key '{key}'")

    if _require(raw, "schema", str, "a string") != CONFIG_SCHEMA:
        raise ConfigError(f"key 'schema' must equal '{CONFIG_SCHEMA}'")
    eta = _require(raw, "eta", float, "a number")
    if eta < 0:
        raise ConfigError("key 'eta' must be nonnegative")
    perturbation = _require(raw, "perturbation", list, "a list of 16 numbers")
    if len(perturbation) != 16 or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in perturbation
    ):
        raise ConfigError("key 'perturbation' must be a list of 16 numbers")
    grid = _require(raw, "grid", dict, "an object")
    for key in grid:
        if key not in ("n_theta", "n_phi"):
            raise ConfigError(f"unknown key 'grid.{key}'")
    n_theta = _require(grid, "n_theta", int, "an integer")
    n_phi = _require(grid, "n_phi", int, "an integer")
    if n_theta < 2:
        raise ConfigError("key 'grid.n_theta' must be >= 2")
    if n_phi < 3:
        raise ConfigError("key 'grid.n_phi' must be >= 3")
    protocol_names = _require(raw, "protocols", list, "a list")
    try:
        protocols = tuple(Protocol(name) for name in protocol_names)
    except ValueError as exc:
        raise ConfigError(f"key 'protocols' has an invalid entry: {exc}") from exc
    if not protocols:
        raise ConfigError("key 'protocols' must not be empty")
    shots = _require(raw, "shots", int, "an integer")
    if shots < 0:
        raise ConfigError("key 'shots' must be nonnegative")
    seed = _require(raw, "seed", int, "an integer")
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("key 'seed' must fit in 64 bits")
    strict = raw.get("strict_normalization", False)
    if not isinstance(strict, bool):
        raise ConfigError("key 'strict_normalization' must be a boolean")
    constraints = raw.get("constraints", "derived")
    if constraints not in ("derived", "paper"):
        raise ConfigError("key 'constraints' must be 'derived' or 'paper'")
    threshold = raw.get("residual_threshold", DEFAULT_RESIDUAL_THRESHOLD)
    if not isinstance(threshold, (int, float)) or isinstance(threshold, bool) or threshold <= 0:
        raise ConfigError("key 'residual_threshold' must be a positive number")

    config = ExperimentConfig(
        perturbation=PerturbationParams.from_vector(perturbation, eta),
        n_theta=n_theta,
        n_phi=n_phi,
        protocols=protocols,
        shots=shots,
        seed=seed,
        strict_normalization=strict,
    )
    modes = {"constraints": constraints, "residual_threshold": float(threshold)}
    return config, modes


def cmd_simulate(config_path, out_path) -> int:
    config, _ = load_config(config_path)
    dataset = generate_dataset(config)
    write_dataset(dataset, out_path)
    return 0


def _group_records(dataset):
    groups: dict[ObservableSpec, list] = {}
    for rec in dataset.records:
        groups.setdefault(rec.setting.observable, []).append(rec)
    return groups


def _observable_dict(obs: ObservableSpec) -> dict:
    return {"protocol": obs.protocol.value, "m": obs.m, "outcome": obs.outcome.value}


def _observable_from_dict(data: dict) -> ObservableSpec:
    return ObservableSpec(Protocol(data["protocol"]), Outcome(data["outcome"]), int(data["m"]))


def cmd_fit(data_path, out_path) -> int:
    dataset = read_dataset(data_path)
    fits = [fit_affine(records) for records in _group_records(dataset).values()]
    document = {
        "schema": FITS_SCHEMA,
        "eta": dataset.meta.eta,
        "strict_normalization": dataset.meta.strict_normalization,
        "fits": [
            {
                "observable": _observable_dict(fit.observable),
                "coefficients": fit.coefficients.as_array().tolist(),
                "covariance": fit.covariance.tolist(),
                "chi_square": fit.chi_square,
                "degrees_of_freedom": fit.degrees_of_freedom,
            }
            for fit in fits
        ],
    }
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=1)
        fh.write("\n")
    return 0


def _load_fits(path) -> tuple[list[FitResult], float]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read fits: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"fits document is not valid JSON: {exc}") from exc
    if raw.get("schema") != FITS_SCHEMA:
        raise ConfigError(f"fits document must declare schema '{FITS_SCHEMA}'")
    fits = []
    for item in raw["fits"]:
        fits.append(
            FitResult(
                observable=_observable_from_dict(item["observable"]),
                coefficients=AffineCoefficients(*item["coefficients"]),
                covariance=np.array(item["covariance"]),
                chi_square=float(item["chi_square"]),
                degrees_of_freedom=int(item["degrees_of_freedom"]),
            )
        )
    return fits, float(raw["eta"])


def _recovery_report(fits, eta, constraints, residual_threshold):
    if constraints == "paper":
        system = transcribed_system()
    else:
        system = design_matrix([fit.observable for fit in fits])
    result = recover_parameters(fits, system, eta=eta, mode=constraints)
    quality = goodness_of_fit(fits, threshold=FIT_CHI2_THRESHOLD)
    if result.chi_square is not None and result.degrees_of_freedom:
        recovery_ok = result.chi_square <= FIT_CHI2_THRESHOLD * result.degrees_of_freedom
    else:
        recovery_ok = result.residual_norm <= residual_threshold
    compatible = bool(quality.compatible and recovery_ok)
    comparison = compare_with_paper()
    document = {
        "schema": RECOVERY_SCHEMA,
        "constraints": constraints,
        "eta": eta,
        "parameter_labels": list(PARAM_LABELS),
        "parameters": result.parameters.tolist(),
        "rank": result.rank,
        "nullspace": result.nullspace_basis.tolist(),
        "row_space": result.row_space_basis.tolist(),
        "residual_norm": result.residual_norm,
        "covariance": None if result.covariance is None else result.covariance.tolist(),
        "recovery_chi_square": result.chi_square,
        "recovery_degrees_of_freedom": result.degrees_of_freedom,
        "fit_quality": {
            "per_fit": [[label, value] for label, value in quality.per_fit],
            "chi_square": quality.chi_square,
            "degrees_of_freedom": quality.degrees_of_freedom,
            "threshold": quality.threshold,
            "compatible": quality.compatible,
        },
        "comparison": comparison.to_dict(),
        "compatible": compatible,
    }
    return document, result, quality, comparison, compatible


def _report_text(document, result, quality, comparison) -> str:
    lines = [
        "parameter recovery report",
        f"constraint system: {document['constraints']}",
        f"eta: {document['eta']:.6g}",
        "",
        "recovered parameters (minimum-norm):",
    ]
    for label, value in zip(PARAM_LABELS, result.parameters):
        lines.append(f"  {label:12s} {value: .6e}")
    lines.append("")
    lines.append(f"rank: {result.rank} of 16")
    lines.append(f"residual (probability scale): {result.residual_norm:.6e}")
    if result.chi_square is not None:
        lines.append(
            f"recovery chi-square: {result.chi_square:.4g} over {result.degrees_of_freedom} dof"
        )
    lines.append("unidentifiable directions:")
    for vec in result.nullspace_basis:
        lines.append(f"  {render_combination(vec, zero_tol=1e-8)}")
    lines.append("")
    lines.append(f"fit chi-square: {quality.chi_square:.4g} over {quality.degrees_of_freedom} dof")
    lines.append(f"fit compatibility: {'yes' if quality.compatible else 'NO'}")
    lines.append(f"overall compatibility: {'yes' if document['compatible'] else 'NO'}")
    lines.append("")
    lines.append(comparison.to_text())
    return "\n".join(lines) + "\n"


def cmd_recover(fits_path, out_path, constraints="derived", residual_threshold=DEFAULT_RESIDUAL_THRESHOLD) -> int:
    fits, eta = _load_fits(fits_path)
    document, result, quality, comparison, compatible = _recovery_report(
        fits, eta, constraints, residual_threshold
    )
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=1)
        fh.write("\n")
    text_path = Path(out_path).with_suffix(".txt")
    text_path.write_text(_report_text(document, result, quality, comparison), encoding="utf-8")
    return 0 if compatible else 4


def cmd_verify() -> int:
    results = run_all()
    width = max(len(name) for name, _, _ in results)
    failures = []
    for name, ok, detail in results:
        print(f"{name.ljust(width)}  {'PASS' if ok else 'FAIL'}{'  ' + detail if detail else ''}")
        if not ok:
            failures.append(name)
    if failures:
        print(f"failed: {', '.join(failures)}", file=sys.stderr)
        return 5
    return 0


def cmd_roundtrip(config_path, out_path) -> int:
    config, modes = load_config(config_path)
    with tempfile.TemporaryDirectory() as workdir:
        data_path = Path(workdir) / "dataset.csv"
        fits_path = Path(workdir) / "fits.json"
        write_dataset(generate_dataset(config), data_path)
        status = cmd_fit(data_path, fits_path)
        if status != 0:
            return status
        return cmd_recover(
            fits_path,
            out_path,
            constraints=modes["constraints"],
            residual_threshold=modes["residual_threshold"],
        )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a dataset from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="fit affine deviation coefficients")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("recover", help="recover instrument parameters from fits")
    p.add_argument("--fits", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--constraints", choices=("derived", "paper"), default="derived")
    p.add_argument("--residual-threshold", type=float, default=DEFAULT_RESIDUAL_THRESHOLD)

    p = sub.add_parser("verify", help="run the oracle and invariant suites")

    p = sub.add_parser("roundtrip", help="simulate, fit and recover in one run")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out)
        if args.command == "fit":
            return cmd_fit(args.data, args.out)
        if args.command == "recover":
            return cmd_recover(
                args.fits, args.out,
                constraints=args.constraints,
                residual_threshold=args.residual_threshold,
            )
        if args.command == "verify":
            return cmd_verify()
        if args.command == "roundtrip":
            return cmd_roundtrip(args.config, args.out)
        raise AssertionError("unreachable")
    except (ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RankDeficientFit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
