import math

import numpy as np
import pytest

from sgkit.experiment import (
    ExperimentConfig,
    FormatError,
    InvalidGrid,
    MeasurementRecord,
    exact_dataset,
    make_grid,
    plan_settings,
    read_dataset,
    sampled_dataset,
    write_dataset,
)
from sgkit.instrument import exact_normalize, normalization_residual
from sgkit.linearize import (
    Outcome,
    PerturbationParams,
    Protocol,
    build_perturbed,
)

from conftest import kraus_mat


def config_of(vec16, eta, **kw):
    defaults = dict(n_theta=4, n_phi=8, shots=0, seed=7)
    defaults.update(kw)
    return ExperimentConfig(PerturbationParams.from_vector(vec16, eta), **defaults)


ZERO = np.zeros(16)


# --- grid and plan -----------------------------------------------------------


def test_make_grid_2x4():
    grid = make_grid(2, 4)
    assert len(grid) == 8
    assert {d.theta for d in grid} == {math.pi / 4, 3 * math.pi / 4}
    assert all(abs(d.unit_vector()[2]) < 1.0 for d in grid)


@pytest.mark.parametrize("n_theta,n_phi", [(3, 4), (2, 3), (4, 8)])
def test_grid_design_rank_four(n_theta, n_phi):
    grid = make_grid(n_theta, n_phi)
    design = np.column_stack([np.ones(len(grid)), [d.unit_vector() for d in grid]])
    assert np.linalg.matrix_rank(design, tol=1e-10) == 4


def test_make_grid_rejects_small():
    with pytest.raises(InvalidGrid):
        make_grid(1, 4)
    with pytest.raises(InvalidGrid):
        make_grid(2, 2)


def test_plan_cardinalities():
    single = config_of(ZERO, 0.0, n_theta=2, n_phi=4, protocols=(Protocol.SINGLE,))
    assert len(plan_settings(single)) == 48
    successive = config_of(ZERO, 0.0, n_theta=2, n_phi=4, protocols=(Protocol.SUCCESSIVE,))
    assert len(plan_settings(successive)) == 24
    both = config_of(ZERO, 0.0, n_theta=2, n_phi=4)
    assert len(plan_settings(both)) == 72


def test_plan_is_deterministic_and_ordered():
    config = config_of(ZERO, 0.0, n_theta=2, n_phi=4)
    plan_a, plan_b = plan_settings(config), plan_settings(config)
    assert plan_a == plan_b
    keys = [
        (s.observable.protocol.value, s.observable.m, s.observable.outcome.value)
        for s in plan_a
    ]
    assert keys == sorted(keys, key=lambda t: (t[0], t[1], {"up": 0, "down": 1}[t[2]]))


# --- exact data ----------------------------------------------------------------


def test_exact_ideal_single_probability():
    dataset = exact_dataset(config_of(ZERO, 0.0, protocols=(Protocol.SINGLE,)))
    for rec in dataset.records:
        obs = rec.setting.observable
        if obs.m == 0 and obs.outcome is Outcome.UP:
            kz = rec.setting.direction.unit_vector()[2]
            assert rec.probability == pytest.approx(0.5 * (1 + kz), abs=1e-14)


def test_exact_ideal_successive_probability():
    dataset = exact_dataset(config_of(ZERO, 0.0, protocols=(Protocol.SUCCESSIVE,)))
    for rec in dataset.records:
        if rec.setting.observable.m == 0:
            kz = rec.setting.direction.unit_vector()[2]
            assert rec.probability == pytest.approx(0.5 * (1 + kz), abs=1e-14)


def test_exact_matches_matrix_pipeline(rng):
    from sgkit.instrument import cyclic_rotation, rotate_instrument

    from conftest import mat

    vec = rng.uniform(-1.0, 1.0, size=16)
    config = config_of(vec, 1e-3, n_theta=2, n_phi=3)
    dataset = exact_dataset(config)
    inst = build_perturbed(config.perturbation)
    for rec in dataset.records:
        obs = rec.setting.observable
        state = rec.setting.direction.unit_vector()
        rotated = rotate_instrument(inst, cyclic_rotation(obs.m))
        branch = rotated.up if obs.outcome is Outcome.UP else rotated.down
        b = kraus_mat(branch)
        rho = 0.5 * mat(1.0, state)
        if obs.protocol is Protocol.SINGLE:
            expected = np.trace(rho @ b @ b.conj().T).real
        else:
            rho1 = sum(
                kraus_mat(br).conj().T @ rho @ kraus_mat(br) for br in inst.branches
            )
            expected = np.trace(rho1 @ b @ b.conj().T).real
        assert rec.probability == pytest.approx(expected, abs=1e-12)


def test_exact_completeness_raw_and_strict(rng):
    vec = rng.uniform(-1.0, 1.0, size=16)
    eta = 1e-3
    raw = exact_dataset(config_of(vec, eta, protocols=(Protocol.SINGLE,)))
    by_setting = {}
    for rec in raw.records:
        key = (rec.setting.observable.m, rec.setting.direction)
        by_setting.setdefault(key, []).append(rec.probability)
    for probs in by_setting.values():
        assert abs(sum(probs) - 1.0) <= 10 * eta

    strict = exact_dataset(
        config_of(vec, eta, protocols=(Protocol.SINGLE,), strict_normalization=True)
    )
    by_setting = {}
    for rec in strict.records:
        key = (rec.setting.observable.m, rec.setting.direction)
        by_setting.setdefault(key, []).append(rec.probability)
    for probs in by_setting.values():
        assert abs(sum(probs) - 1.0) <= 1e-12


def test_strict_normalization_uses_normalized_instrument(rng):
    vec = rng.uniform(-1.0, 1.0, size=16)
    config = config_of(vec, 1e-2, strict_normalization=True, n_theta=2, n_phi=3)
    inst = exact_normalize(build_perturbed(config.perturbation))
    assert normalization_residual(inst) <= 1e-12
    dataset = exact_dataset(config)
    assert dataset.meta.strict_normalization


# --- sampled data -----------------------------------------------------------------


def test_sampled_reproducible():
    config = config_of(ZERO, 0.0, shots=1000, seed=42, n_theta=2, n_phi=3)
    a, b = sampled_dataset(config), sampled_dataset(config)
    assert a.records == b.records


def test_sampled_probability_one_saturates():
    vec = np.zeros(16)
    vec[0] = 2.0  # pushes the up-branch weight far above 1; clamped to p = 1
    config = config_of(vec, 1.0, shots=500, seed=1, protocols=(Protocol.SINGLE,), n_theta=2, n_phi=3)
    dataset = sampled_dataset(config)
    ups = [r for r in dataset.records if r.setting.observable.outcome is Outcome.UP]
    assert all(r.successes == r.shots for r in ups)


def test_sampled_concentration(rng):
    shots = 10**6
    vec = rng.uniform(-1.0, 1.0, size=16)
    config = config_of(vec, 1e-3, shots=shots, seed=11)
    sampled = sampled_dataset(config)
    exact = exact_dataset(config_of(vec, 1e-3, shots=0, seed=11))
    bad = 0
    for s_rec, e_rec in zip(sampled.records, exact.records):
        p = e_rec.probability
        sigma = math.sqrt(max(p * (1 - p), 1e-12) / shots)
        if abs(s_rec.frequency() - p) > 5 * sigma:
            bad += 1
    assert bad <= 0.01 * len(sampled.records)


# --- file format -------------------------------------------------------------------


def test_write_read_round_trip_exact(tmp_path, rng):
    vec = rng.uniform(-1.0, 1.0, size=16)
    dataset = exact_dataset(config_of(vec, 1e-3, n_theta=2, n_phi=3))
    path = tmp_path / "data.csv"
    write_dataset(dataset, path)
    back = read_dataset(path)
    assert back.meta == dataset.meta
    assert back.records == dataset.records


def test_write_read_round_trip_sampled(tmp_path):
    dataset = sampled_dataset(config_of(ZERO, 0.0, shots=1234, seed=5, n_theta=2, n_phi=3))
    path = tmp_path / "data.csv"
    write_dataset(dataset, path)
    assert read_dataset(path).records == dataset.records


def test_read_rejects_header_mismatch(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# sgkit-v1\n# eta=0\n# strict_normalization=false\n# seed=0\n# grid=2,3\nwrong,header\n")
    with pytest.raises(FormatError):
        read_dataset(path)


def test_read_rejects_missing_tag(tmp_path):
    dataset = exact_dataset(config_of(ZERO, 0.0, n_theta=2, n_phi=3))
    path = tmp_path / "data.csv"
    write_dataset(dataset, path)
    stripped = "\n".join(path.read_text().splitlines()[1:]) + "\n"
    path.write_text(stripped)
    with pytest.raises(FormatError):
        read_dataset(path)


def test_read_rejects_excess_successes(tmp_path):
    dataset = sampled_dataset(config_of(ZERO, 0.0, shots=10, seed=5, n_theta=2, n_phi=3))
    path = tmp_path / "data.csv"
    write_dataset(dataset, path)
    lines = path.read_text().splitlines()
    parts = lines[6].split(",")
    parts[6] = str(int(parts[5]) + 1)  # successes > shots
    lines[6] = ",".join(parts)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError) as err:
        read_dataset(path)
    assert "line 7" in str(err.value)


def test_record_validation():
    setting = plan_settings(config_of(ZERO, 0.0, n_theta=2, n_phi=3))[0]
    with pytest.raises(ValueError):
        MeasurementRecord(setting, 10, 11, None)
    with pytest.raises(ValueError):
        MeasurementRecord(setting, 0, 0, 1.5)
    with pytest.raises(ValueError):
        MeasurementRecord(setting, 10, 5, 0.5)
