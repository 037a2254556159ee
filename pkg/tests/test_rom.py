import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from damrom import solver as solver_mod
from damrom.rom import (BasisArchiveError, ReducedBasis, ReducedState, SnapshotError, SnapshotSet,
                        build_basis, build_reduced_basis, collect_snapshots, compare_fom_rom,
                        project, read_matrix, reconstruct, run_reduced, write_matrix)
from damrom.scenario import DamScenario
from damrom.solver import (FieldState, PicardControl, ThetaScheme, Trajectory, initial_steady_state,
                           run_transient)


def _orthogonal(n, k, rng):
    q, _ = np.linalg.qr(rng.normal(size=(n, k)))
    return q


# --- POD algebra -------------------------------------------------------------------------


def test_rank_one_matrix():
    rng = np.random.default_rng(0)
    u, v = rng.normal(size=40), rng.normal(size=15)
    blk = build_basis(np.outer(u, v))
    assert blk.size == 1
    assert abs(blk.vectors[:, 0] @ u) == pytest.approx(np.linalg.norm(u), rel=1e-12)


def test_synthetic_spectrum_truncation():
    rng = np.random.default_rng(1)
    U, V = _orthogonal(30, 3, rng), _orthogonal(12, 3, rng)
    M = U @ np.diag([1.0, 1e-2, 1e-5]) @ V.T
    blk = build_basis(M, 1e-4)
    assert blk.size == 2
    np.testing.assert_allclose(blk.sigma, [1.0, 1e-2], rtol=1e-10)
    assert blk.discarded[0] == pytest.approx(1e-5, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(5, 40), st.integers(1, 20), st.floats(1e-6, 0.5), st.integers(0, 2 ** 31))
def test_orthonormality_and_eckart_young(n, m, ratio, seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, m)) * np.logspace(0, -6, m)[None, :]
    blk = build_basis(M, ratio)
    B = blk.vectors
    assert np.abs(B.T @ B - np.eye(blk.size)).max() <= 1e-10
    resid = np.linalg.norm(M - B @ (B.T @ M), "fro") ** 2
    assert resid <= np.sum(blk.discarded ** 2) + 1e-9 * blk.sigma[0] ** 2
    assert np.all(np.diff(blk.sigma) <= 0)
    assert np.all(blk.sigma >= ratio * blk.sigma[0])


@pytest.mark.parametrize("M,ratio", [(np.zeros((3, 2)), 1e-4), (np.ones((3, 2)), 0.0),
                                     (np.ones((3, 2)), 1.0), (np.zeros((0, 2)), 1e-4)])
def test_build_basis_rejects(M, ratio):
    with pytest.raises(ValueError):
        build_basis(M, ratio)


# --- archive --------------------------------------------------------------------------------


def test_matrix_file_round_trip(tmp_path):
    A = np.arange(12.0).reshape(3, 4) / 7
    write_matrix(tmp_path / "a.bin", A)
    raw = (tmp_path / "a.bin").read_bytes()
    assert raw[:8] == b"DRBMAT01" and len(raw) == 8 + 16 + 12 * 8
    np.testing.assert_array_equal(read_matrix(tmp_path / "a.bin"), A)
    (tmp_path / "b.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="expected 3x4"):
        read_matrix(tmp_path / "b.bin")
    (tmp_path / "c.bin").write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ValueError, match="not a basis"):
        read_matrix(tmp_path / "c.bin")


# --- a small dam problem -------------------------------------------------------------------

N_STEPS = 12


@pytest.fixture(scope="module")
def small():
    sc = DamScenario(n_levels=3)
    A = sc.build()
    init = initial_steady_state(A, sc.geometry.WL, ThetaScheme())
    snaps = collect_snapshots([1e-8, 1e-7], sc, n_steps=N_STEPS, initial=init)
    return sc, A, init, snaps


def test_snapshot_layout(small):
    sc, A, init, snaps = small
    assert snaps.n_columns == 2 * N_STEPS and snaps.runs == [0, 1]
    assert snaps.M_u.shape == (A.dofmap.n_u, 2 * N_STEPS)
    np.testing.assert_array_equal(snaps.k_s[:N_STEPS], 1e-8)
    np.testing.assert_allclose(snaps.t[:N_STEPS], 8640.0 * np.arange(1, N_STEPS + 1))


def test_single_run_column_count(small):
    sc, A, init, _ = small
    s = collect_snapshots([3e-8], sc, n_steps=5, initial=init)
    assert s.M_u.shape[1] == s.M_p.shape[1] == 5


def test_snapshot_columns_regenerate_bit_identically(small):
    sc, A, init, snaps = small
    j = snaps.columns_of(1)[7]
    traj = run_transient(sc.with_ks(float(snaps.k_s[j])).build(), init, ThetaScheme(),
                         PicardControl(), n_steps=8)
    assert traj.times[-1] == snaps.t[j]
    np.testing.assert_array_equal(traj.states[-1].P, snaps.M_p[:, j])
    np.testing.assert_array_equal(traj.states[-1].U, snaps.M_u[:, j])


def test_parallel_collection_matches_serial(small):
    sc, A, init, snaps = small
    par = collect_snapshots([1e-8, 1e-7], sc, n_steps=N_STEPS, initial=init, workers=2)
    np.testing.assert_array_equal(par.M_p, snaps.M_p)
    np.testing.assert_array_equal(par.run, snaps.run)


def test_failed_run_names_parameter(small):
    sc, A, init, _ = small
    with pytest.raises(SnapshotError, match="3e-08"):
        collect_snapshots([3e-8], sc, control=PicardControl(tol_rel=1e-30, max_iters=2),
                          n_steps=2, initial=init)
    with pytest.raises(ValueError):
        collect_snapshots([], sc, n_steps=2, initial=init)


def test_snapshot_set_round_trip(small, tmp_path):
    snaps = small[3]
    d = snaps.save(tmp_path / "snaps")
    assert sorted(p.name for p in d.iterdir()) == [
        "index.json", "run000_P.npy", "run000_U.npy", "run001_P.npy", "run001_U.npy"]
    back = SnapshotSet.load(d)
    np.testing.assert_array_equal(back.M_u, snaps.M_u)
    np.testing.assert_array_equal(back.t, snaps.t)
    np.testing.assert_array_equal(back.k_s, snaps.k_s)
    with pytest.raises(FileNotFoundError):
        SnapshotSet.load(tmp_path / "nowhere")


@pytest.fixture(scope="module")
def basis(small):
    sc, A, init, snaps = small
    return build_reduced_basis(snaps, A.dofmap, 1e-4)


def test_reduced_basis_invariants(small, basis):
    A = small[1]
    dm = A.dofmap
    for B in (basis.B_u, basis.B_p):
        assert np.abs(B.T @ B - np.eye(B.shape[1])).max() <= 1e-10
    c = dm.constrained
    cu, cp = c[c < dm.n_u], c[c >= dm.n_u] - dm.n_u
    assert np.all(basis.B_u[cu] == 0) and np.all(basis.B_p[cp] == 0)
    assert np.all(np.diff(basis.sigma_p) <= 0)


def test_reconstruct_and_project(small, basis):
    sc, A, init, snaps = small
    zero = ReducedState(np.zeros(basis.sizes[0]), np.zeros(basis.sizes[1]))
    st0 = reconstruct(basis, zero)
    np.testing.assert_array_equal(np.concatenate([st0.U, st0.P]), basis.lift)
    s = FieldState(snaps.M_u[:, 5], snaps.M_p[:, 5])
    once = reconstruct(basis, project(basis, s))
    twice = reconstruct(basis, project(basis, once))
    np.testing.assert_allclose(twice.P, once.P, rtol=0, atol=1e-12 * np.abs(once.P).max())
    # Eckart-Young on the snapshot matrix bounds the pressure reconstruction error
    Mp = snaps.M_p - basis.lift_p[:, None]
    free = A.dofmap.free_mask()[A.dofmap.n_u:]
    Mp = Mp * free[:, None]
    err = np.linalg.norm(Mp - basis.B_p @ (basis.B_p.T @ Mp), "fro") ** 2
    _, sv, _ = np.linalg.svd(Mp, full_matrices=False)
    assert err <= np.sum(sv[basis.sizes[1]:] ** 2) * (1 + 1e-8) + 1e-9 * sv[0] ** 2
    with pytest.raises(ValueError):
        reconstruct(basis, ReducedState(np.zeros(1), np.zeros(1)))


def test_basis_archive_round_trip(small, basis, tmp_path):
    sc, A, _, _ = small
    d = basis.save(tmp_path / "basis")
    back = ReducedBasis.load(d, A.dofmap)
    np.testing.assert_array_equal(back.B_u, basis.B_u)
    np.testing.assert_array_equal(back.B_p, basis.B_p)
    np.testing.assert_array_equal(back.lift, basis.lift)
    assert back.sizes == basis.sizes and back.threshold == 1e-4
    other = DamScenario(n_levels=4).build()
    with pytest.raises(BasisArchiveError, match="different mesh"):
        ReducedBasis.load(d, other.dofmap)
    with pytest.raises(BasisArchiveError, match="basis not found"):
        ReducedBasis.load(tmp_path / "missing")
    (d / "B_p.bin").write_bytes(b"garbage")
    with pytest.raises(BasisArchiveError, match="corrupt"):
        ReducedBasis.load(d)


def _identity_basis(A):
    dm = A.dofmap
    free = dm.free_mask()
    Iu = np.eye(dm.n_u)[:, free[:dm.n_u]]
    Ip = np.eye(dm.n_p)[:, free[dm.n_u:]]
    return ReducedBasis(Iu, Ip, dm.lift(), np.ones(Iu.shape[1]), np.ones(Ip.shape[1]), 1e-4,
                        dm.fingerprint(), dm.mesh.fingerprint())


def test_identity_basis_reproduces_fom(small):
    sc, A, init, _ = small
    ctl = PicardControl(tol_rel=1e-10, reuse_factor=False)
    fom = run_transient(A, init, ThetaScheme(), ctl, n_steps=6)
    rom = run_reduced(_identity_basis(A), A, init, ThetaScheme(), ctl, n_steps=6)
    rep = compare_fom_rom(fom, rom.trajectory)
    assert rep.max_e_u < 1e-8 and rep.max_e_p < 1e-8


def test_online_dirichlet_exact_and_no_sparse_solver(small, basis, monkeypatch):
    sc, A, init, _ = small

    def forbidden(*a, **k):
        raise AssertionError("online phase called the full-order sparse solver")

    monkeypatch.setattr(spla, "splu", forbidden)
    monkeypatch.setattr(spla, "spsolve", forbidden)
    monkeypatch.setattr(solver_mod, "SparseFactor", forbidden)
    monkeypatch.setattr(solver_mod, "solve_sparse", forbidden)
    A2 = sc.with_ks(3e-8).build()
    run = run_reduced(basis, A2, init, ThetaScheme(), PicardControl(), n_steps=N_STEPS)
    dm = A2.dofmap
    c = dm.constrained
    for st in run.trajectory.states:
        np.testing.assert_allclose(st.vector()[c], dm.constrained_values, rtol=0, atol=1e-12)
    assert len(run.reduced) == N_STEPS + 1 and run.wall > 0


def test_untrained_conductivity_is_accurate(small, basis):
    sc, _, init, _ = small
    A2 = sc.with_ks(3e-8).build()
    fom = run_transient(A2, init, ThetaScheme(), PicardControl(), n_steps=N_STEPS)
    rom = run_reduced(basis, A2, init, ThetaScheme(), PicardControl(), n_steps=N_STEPS)
    rep = compare_fom_rom(fom, rom.trajectory)
    assert rep.max_e_p < 5e-2 and rep.max_e_u < 5e-2


# --- comparison ---------------------------------------------------------------------------


def _traj(states):
    tr = Trajectory()
    for j, (u, p) in enumerate(states):
        tr.append(FieldState(np.asarray(u, float), np.asarray(p, float), float(j)), 1, 1.0)
    return tr


def test_compare_identical_and_scaled():
    rng = np.random.default_rng(5)
    data = [(rng.normal(size=4), rng.normal(size=3)) for _ in range(6)]
    fom = _traj(data)
    rep = compare_fom_rom(fom, _traj(data))
    assert np.all(rep.e_u == 0) and np.all(rep.e_p == 0) and len(rep.t) == 5
    scaled = _traj([(1.01 * u, 1.01 * p) for u, p in data])
    rep = compare_fom_rom(fom, scaled)
    np.testing.assert_allclose(rep.e_u, 0.01, rtol=1e-12)
    np.testing.assert_allclose(rep.e_p, 0.01, rtol=1e-12)
    assert rep.speedup == pytest.approx(1.0)
    with pytest.raises(ValueError, match="time grids"):
        compare_fom_rom(fom, _traj(data[:4]))
