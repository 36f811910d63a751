"""Inverse problem: affine fits of measured deviations and parameter recovery.

Fits are weighted least squares of (frequency - ideal probability) on the
basis (1, kx, ky, kz), with binomial weights for counted data and uniform
weights for exact records.  Recovery stacks the fitted coefficients (scaled
by 1/eta) against the design system and solves by SVD, reporting the
minimum-norm solution, rank, nullspace and residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linearize import (
    AffineCoefficients,
    LinearSystem,
    ObservableSpec,
    PARAM_LABELS,
    ideal_probability,
)

WEIGHT_CLAMP = 1e-6
RANK_RTOL = 1e-10


class RankDeficientFit(ValueError):
    """The affine fit design is rank deficient or under-determined."""


class InconsistentSystem(RuntimeError):
    """Recovery residual exceeds the caller's threshold."""


@dataclass(frozen=True)
class FitResult:
    """Affine fit of one observable's deviations from the ideal model.

    The covariance is the WLS estimate for counted data and a zero matrix
    for exact records, which carry no sampling variance.
    """

    observable: ObservableSpec
    coefficients: AffineCoefficients
    covariance: np.ndarray
    chi_square: float
    degrees_of_freedom: int

    def __post_init__(self):
        cov = np.array(self.covariance, dtype=float).reshape(4, 4)
        cov.setflags(write=False)
        object.__setattr__(self, "covariance", cov)
        if self.degrees_of_freedom < 1:
            raise ValueError("fit needs at least one degree of freedom")

    @property
    def has_variance(self) -> bool:
        return bool(np.any(self.covariance != 0.0))


@dataclass(frozen=True)
class RecoveryResult:
    """Minimum-norm recovery of the 16 parameters with identifiability data.

    ``row_space_basis`` (rank x 16, orthonormal) spans the identifiable
    parameter combinations; ``nullspace_basis`` spans the rest.
    ``residual_norm`` is reported on the probability-deviation scale (the
    scaled-system residual multiplied back by eta) so it can be compared
    with statistical noise and truncation error.  ``chi_square`` is the
    standard-error-weighted residual over the data rows, present only when
    the fits carry sampling variance.
    """

    parameters: np.ndarray
    rank: int
    nullspace_basis: np.ndarray
    row_space_basis: np.ndarray
    residual_norm: float
    covariance: np.ndarray | None
    chi_square: float | None
    degrees_of_freedom: int | None
    mode: str
    column_labels: tuple[str, ...] = PARAM_LABELS


def fit_affine(records, reference=None) -> FitResult:
    """Weighted least squares of the deviation data for one observable.

    Args:
        records: MeasurementRecord sequence, all for the same observable,
            at least 5 of them spanning a rank-4 direction design.
        reference: baseline probability model, callable(observable,
            direction) -> float; defaults to the ideal instrument.

    Raises RankDeficientFit when the design cannot determine 4 coefficients.
    """
    records = list(records)
    if not records:
        raise RankDeficientFit("no records")
    observable = records[0].setting.observable
    if any(rec.setting.observable != observable for rec in records):
        raise ValueError("records mix observables")
    if len(records) < 5:
        raise RankDeficientFit(
            f"{observable.label()}: need at least 5 records, got {len(records)}"
        )
    if reference is None:
        reference = ideal_probability

    directions = np.array([rec.setting.direction.unit_vector() for rec in records])
    design = np.column_stack([np.ones(len(records)), directions])
    baseline = np.array([reference(observable, rec.setting.direction) for rec in records])
    values = np.array([rec.frequency() for rec in records]) - baseline

    weights = np.ones(len(records))
    sampled = False
    for i, rec in enumerate(records):
        if rec.shots > 0:
            sampled = True
            p_hat = min(1.0 - WEIGHT_CLAMP, max(WEIGHT_CLAMP, rec.frequency()))
            weights[i] = rec.shots / (p_hat * (1.0 - p_hat))

    sqrt_w = np.sqrt(weights)
    design_w = design * sqrt_w[:, None]
    singular = np.linalg.svd(design_w, compute_uv=False)
    if singular[-1] <= RANK_RTOL * singular[0]:
        raise RankDeficientFit(f"{observable.label()}: direction design has rank < 4")

    coeffs, *_ = np.linalg.lstsq(design_w, values * sqrt_w, rcond=None)
    residual = values - design @ coeffs
    chi_square = float(np.sum(weights * residual ** 2))
    covariance = np.linalg.inv(design.T @ (weights[:, None] * design)) if sampled else np.zeros((4, 4))
    return FitResult(
        observable=observable,
        coefficients=AffineCoefficients(*coeffs),
        covariance=covariance,
        chi_square=chi_square,
        degrees_of_freedom=len(records) - 4,
    )


@dataclass(frozen=True)
class GoodnessOfFit:
    per_fit: tuple[tuple[str, float], ...]
    chi_square: float
    degrees_of_freedom: int
    threshold: float
    compatible: bool


def goodness_of_fit(
    fits, threshold: float = 3.0, exact_tolerance: float = 1e-10
) -> GoodnessOfFit:
    """Per-fit and aggregate chi-square per degree of freedom.

    Counted data is compatible when every fit has chi-square/dof below
    ``threshold``.  Exact records carry no noise, so their residual must
    vanish outright (chi-square below ``exact_tolerance``).
    """
    fits = list(fits)
    per_fit = tuple(
        (fit.observable.label(), fit.chi_square / fit.degrees_of_freedom) for fit in fits
    )
    chi_square = float(sum(fit.chi_square for fit in fits))
    dof = int(sum(fit.degrees_of_freedom for fit in fits))
    compatible = all(
        fit.chi_square <= threshold * fit.degrees_of_freedom
        if fit.has_variance
        else fit.chi_square <= exact_tolerance
        for fit in fits
    )
    return GoodnessOfFit(per_fit, chi_square, dof, threshold, compatible)


def recover_parameters(
    fits,
    system: LinearSystem,
    eta: float,
    mode: str = "derived",
    max_residual: float | None = None,
) -> RecoveryResult:
    """Solve the stacked linear system for the 16 parameters.

    Fitted coefficients are divided by eta (recovered parameters come out
    O(1)); constraint rows keep rhs 0.  The solve is a rank-revealing SVD:
    singular values below 1e-10 of the largest are treated as zero, the
    returned solution is minimum-norm and the nullspace basis orthonormal.

    Raises InconsistentSystem when ``max_residual`` is given and the
    residual (probability-deviation scale) exceeds it.
    """
    fits = list(fits)
    by_observable = {fit.observable: fit for fit in fits}
    scale = eta if eta > 0 else 1.0

    rhs = np.array(system.rhs, dtype=float)
    row_variance = np.zeros(len(rhs))
    for i, key in enumerate(system.rhs_keys):
        if key is None:
            continue
        obs, j, factor = key
        fit = by_observable.get(obs)
        if fit is None:
            raise ValueError(f"no fit supplied for {obs.label()}")
        rhs[i] = factor * fit.coefficients.as_array()[j] / scale
        row_variance[i] = factor ** 2 * fit.covariance[j, j] / scale ** 2

    matrix = system.rows
    u, s, vt = np.linalg.svd(matrix, full_matrices=True)
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    inv_s = np.zeros_like(s)
    inv_s[:rank] = 1.0 / s[:rank]
    pseudo = vt[:rank].T @ (np.diag(inv_s[:rank]) @ u[:, :rank].T)
    solution = pseudo @ rhs

    residual_vec = matrix @ solution - rhs
    residual_norm = float(np.linalg.norm(residual_vec)) * scale

    nullspace = vt[rank:]
    row_space = vt[:rank]

    covariance = None
    chi_square = None
    dof = None
    data_rows = np.array([key is not None for key in system.rhs_keys])
    if np.all(row_variance[data_rows] > 0.0):
        cov_rhs = np.zeros((len(rhs), len(rhs)))
        # full 4x4 covariance blocks for rows sharing a fit
        for i, key_i in enumerate(system.rhs_keys):
            if key_i is None:
                continue
            obs_i, j_i, f_i = key_i
            for k, key_k in enumerate(system.rhs_keys):
                if key_k is None or key_k[0] != obs_i:
                    continue
                _, j_k, f_k = key_k
                cov_rhs[i, k] = f_i * f_k * by_observable[obs_i].covariance[j_i, j_k] / scale ** 2
        covariance = pseudo @ cov_rhs @ pseudo.T
        chi_square = float(np.sum(residual_vec[data_rows] ** 2 / row_variance[data_rows]))
        dof = int(np.sum(data_rows)) - rank

    if max_residual is not None and residual_norm > max_residual:
        raise InconsistentSystem(
            f"recovery residual {residual_norm:.3e} exceeds threshold {max_residual:.3e}"
        )
    return RecoveryResult(
        parameters=solution,
        rank=rank,
        nullspace_basis=nullspace,
        row_space_basis=row_space,
        residual_norm=residual_norm,
        covariance=covariance,
        chi_square=chi_square,
        degrees_of_freedom=dof,
        mode=mode,
    )
