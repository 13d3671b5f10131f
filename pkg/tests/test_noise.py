"""Noise model construction, variance tensor, drift, regularity, Wiener paths."""

import numpy as np
import pytest

from lu_flow.noise import (
    WienerPath,
    build_noise_model,
    check_regularity,
    sample_increments,
)
from lu_flow.spectral import (
    TorusGrid,
    h_norm,
    to_physical,
)


def fd_divergence(a, n):
    """Central-difference row divergence of the (2,2,n,n) tensor field."""
    h = 2.0 * np.pi / n
    out = np.zeros((2, n, n))
    for i in range(2):
        for j in range(2):
            d = (np.roll(a[i, j], -1, axis=j) - np.roll(a[i, j], 1, axis=j)) / (2 * h)
            out[i] += d
    return out


# ---------------------------------------------------------------------------
# construction


def test_zero_amplitude_model(grid16):
    model = build_noise_model(grid16, 1, 3.0, 0.0)
    assert np.max(np.abs(model.variance_tensor)) == 0.0
    assert np.max(np.abs(model.ito_stokes_drift.coeffs)) == 0.0


def test_homogeneous_pair(grid16):
    # cos/sin of the same wavevector with equal weights: |phi|^2 sums to a
    # constant, the variance tensor is constant in x and the drift cancels
    model = build_noise_model(grid16, 2, 3.0, 1.0)
    a = model.variance_tensor
    for i in range(2):
        for j in range(2):
            assert np.ptp(a[i, j]) < 1e-14 * max(np.max(np.abs(a[i, j])), 1.0)
    assert h_norm(grid16, model.ito_stokes_drift.coeffs) < 1e-14


def test_pure_family_drift_vanishes_at_any_truncation(grid16):
    # each pure mode contributes w w^T trig^2(k.x) whose divergence is
    # proportional to w (w . k) = 0, so the drift is zero for every K
    for K in (1, 3, 5, 9):
        model = build_noise_model(grid16, K, 3.0, 1.0)
        assert h_norm(grid16, model.ito_stokes_drift.coeffs) < 1e-14


def test_mixed_family_drift_nonzero(grid16):
    model = build_noise_model(grid16, 4, 3.0, 1.0, mix_shells=True)
    assert h_norm(grid16, model.ito_stokes_drift.coeffs) > 1e-3


def test_modes_divergence_free_and_ordering_deterministic(grid16):
    from lu_flow.spectral import max_divergence
    for mix in (False, True):
        m1 = build_noise_model(grid16, 6, 3.0, 1.0, mix_shells=mix)
        m2 = build_noise_model(grid16, 6, 3.0, 1.0, mix_shells=mix)
        for a, b in zip(m1.modes, m2.modes):
            assert np.array_equal(a.coeffs, b.coeffs)
            assert max_divergence(grid16, a.coeffs) == 0.0


def test_too_many_modes_rejected():
    with pytest.raises(ValueError):
        build_noise_model(TorusGrid(8), 500, 3.0, 1.0)


# ---------------------------------------------------------------------------
# variance tensor


def test_single_mode_rank_one(grid16):
    model = build_noise_model(grid16, 1, 3.0, 1.0)
    phi = to_physical(grid16, model.modes[0].coeffs)
    expected = np.einsum("i...,j...->ij...", phi, phi)
    assert np.max(np.abs(model.variance_tensor - expected)) < 1e-14
    det = (model.variance_tensor[0, 0] * model.variance_tensor[1, 1]
           - model.variance_tensor[0, 1] ** 2)
    assert np.max(np.abs(det)) < 1e-14  # rank <= 1 per point


def test_variance_tensor_pointwise_summation_oracle():
    # K = 4, r = 3 on N = 16: compare a(x) at sample points against the
    # direct physical-space sum over modes
    g = TorusGrid(16)
    model = build_noise_model(g, 4, 3.0, 1.0, mix_shells=True)
    phys = [to_physical(g, m.coeffs) for m in model.modes]
    direct = sum(np.einsum("i...,j...->ij...", p, p) for p in phys)
    for (i, j) in [(0, 0), (3, 7), (8, 8), (15, 1), (5, 12)]:
        assert np.max(np.abs(model.variance_tensor[:, :, i, j]
                             - direct[:, :, i, j])) < 1e-13


def test_variance_tensor_psd_and_trace_identity(grid16):
    model = build_noise_model(grid16, 4, 3.0, 1.0, mix_shells=True)
    a = model.variance_tensor
    trace = a[0, 0] + a[1, 1]
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    assert np.all(trace >= -1e-14)
    assert np.all(det >= -1e-12)
    total = sum(h_norm(grid16, m.coeffs) ** 2 for m in model.modes)
    integral = trace.mean() * (2.0 * np.pi) ** 2
    assert abs(integral - total) < 1e-10 * total


# ---------------------------------------------------------------------------
# Ito-Stokes drift


def test_drift_quadratic_in_amplitude(grid16):
    base = build_noise_model(grid16, 4, 3.0, 1.0, mix_shells=True)
    scaled = build_noise_model(grid16, 4, 3.0, 3.0, mix_shells=True)
    diff = scaled.ito_stokes_drift.coeffs - 9.0 * base.ito_stokes_drift.coeffs
    assert np.max(np.abs(diff)) < 1e-12 * np.max(np.abs(base.ito_stokes_drift.coeffs))


def test_drift_matches_finite_difference_oracle():
    # second-order central differences of the physical a converge to the
    # spectral divergence at O(h^2)
    errs = []
    for n in (16, 32):
        g = TorusGrid(n)
        model = build_noise_model(g, 4, 3.0, 1.0, mix_shells=True)
        us_phys = to_physical(g, model.ito_stokes_drift.coeffs)
        fd = 0.5 * fd_divergence(model.variance_tensor, n)
        errs.append(np.max(np.abs(fd - us_phys)) / np.max(np.abs(us_phys)))
    assert errs[0] < 0.2
    assert errs[0] / errs[1] > 3.0  # O(h^2) refinement


# ---------------------------------------------------------------------------
# regularity report


def test_regularity_zero_amplitude(grid16):
    rep = check_regularity(build_noise_model(grid16, 4, 3.0, 0.0))
    assert rep["passes"]
    assert rep["partial_sum_h3"] == 0.0
    assert rep["us_h3"] == 0.0


def test_regularity_partial_sum_saturates_for_smooth_spectrum():
    g = TorusGrid(32)
    s8 = check_regularity(build_noise_model(g, 8, 3.0, 1.0))["partial_sum_h3"]
    s16 = check_regularity(build_noise_model(g, 16, 3.0, 1.0))["partial_sum_h3"]
    assert abs(s16 - s8) < 0.10 * s8


def test_regularity_pass_fail(grid32):
    assert check_regularity(build_noise_model(grid32, 16, 3.0, 1.0))["passes"]
    assert not check_regularity(build_noise_model(grid32, 16, 1.0, 1.0))["passes"]


# ---------------------------------------------------------------------------
# Wiener paths


def test_path_determinism_and_seed_sensitivity():
    a = WienerPath(42, 1e-3, 50, 4)
    b = WienerPath(42, 1e-3, 50, 4)
    c = WienerPath(43, 1e-3, 50, 4)
    assert np.array_equal(a.increments, b.increments)
    assert np.max(np.abs(a.increments - c.increments)) > 1e-6


def test_sample_increments_contract():
    path = WienerPath(7, 1e-3, 10, 3)
    assert np.array_equal(sample_increments(path, 4), sample_increments(path, 4))
    with pytest.raises(IndexError):
        sample_increments(path, 10)


def test_member_streams_differ():
    a = WienerPath(42, 1e-3, 50, 4, member=0)
    b = WienerPath(42, 1e-3, 50, 4, member=1)
    assert np.max(np.abs(a.increments - b.increments)) > 1e-6


def test_coarsen_sums_consecutive_increments():
    fine = WienerPath(5, 1e-3, 40, 4)
    coarse = fine.coarsen(4)
    assert coarse.dt == pytest.approx(4e-3)
    assert np.allclose(coarse.increments,
                       fine.increments.reshape(10, 4, 4).sum(axis=1), atol=0)


def test_increment_moments():
    # empirical covariance over 1e5 steps within 5 standard errors of diag(dt)
    n, dt = 100_000, 1e-3
    path = WienerPath(11, dt, n, 3)
    x = path.increments
    cov = x.T @ x / n
    se_diag = dt * np.sqrt(2.0 / n)   # var of squared gaussians
    se_off = dt / np.sqrt(n)
    for i in range(3):
        for j in range(3):
            target = dt if i == j else 0.0
            se = se_diag if i == j else se_off
            assert abs(cov[i, j] - target) < 5 * se, (i, j, cov[i, j])
    assert abs(x.mean()) < 5 * np.sqrt(dt / (3 * n))
