import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtpgd.errors import ArgumentError, NumericError, ShapeError
from mtpgd.fem import Material, evaluate_strain
from mtpgd.mesh import rectangular_bar
from mtpgd.plasticity import (
    PlasticState,
    consistent_tangent,
    integrate_history,
    integrate_history_sparse,
    read_snapshot,
    return_map_point,
    stacked_rows,
    von_mises,
    write_snapshot,
    write_snapshot_csv,
)
from oracles import explicit_plastic_paths

from conftest import STEEL

G = STEEL.shear_modulus
BULK = STEEL.lame_lambda + 2 * G / 3


def chain(path, material=STEEL):
    state = PlasticState.zeros(1)
    out = []
    for eps in path:
        r = return_map_point(eps, state, material)
        state = PlasticState(r.eps_p, [r.eps_bar])
        out.append(r)
    return out


class TestReturnMapPoint:
    def test_elastic_step(self):
        g = 100.0 / (np.sqrt(3) * G)  # pure shear with q_trial = 100 MPa
        r = return_map_point([0, 0, g], PlasticState.zeros(1), STEEL)
        assert r.eps_bar == 0.0 and not np.any(r.eps_p)
        assert von_mises(r.sigma) == pytest.approx(100.0, rel=1e-12)

    def test_plastic_multiplier_closed_form(self):
        # q_trial = 300 MPa: dgamma = (300 - 205) / (3G + H) = 3.8885390428211586e-4,
        # 1000-substep explicit oracle gives 3.8885390428211066e-4
        g = 300.0 / (np.sqrt(3) * G)
        r = return_map_point([0, 0, g], PlasticState.zeros(1), STEEL)
        assert r.eps_bar == pytest.approx(3.8885390428211586e-4, rel=1e-14)
        oracle = explicit_plastic_paths(np.array([[[0.0, 0.0, g]]]), STEEL)[0, -1]
        assert r.eps_bar == pytest.approx(oracle, rel=1e-9)
        # flow direction is pure shear: eps12 = 1.5 dgamma s12 / q = dgamma sqrt(3) / 2
        np.testing.assert_allclose(r.eps_p, [0, 0, np.sqrt(3) / 2 * r.eps_bar], rtol=1e-12, atol=1e-18)
        assert von_mises(r.sigma) == pytest.approx(205.0 + 2e3 * r.eps_bar, rel=1e-12)

    def test_uniaxial_strain_bilinear_curve(self):
        # uniaxial strain: elastic slope K + 4G/3, hardening slope K + 4/3 G H / (3G + H),
        # yield at eps11 = sigma_y0 / (2G)
        H = STEEL.hardening_modulus
        e_y = 205.0 / (2 * G)
        strains = np.linspace(0, 6 * e_y, 31)[1:]
        res = chain([[e, 0, 0] for e in strains])
        s11 = np.array([r.sigma[0] for r in res])
        k_el, k_pl = BULK + 4 * G / 3, BULK + 4 / 3 * G * H / (3 * G + H)
        ref = np.where(strains <= e_y, k_el * strains, k_el * e_y + k_pl * (strains - e_y))
        np.testing.assert_allclose(s11, ref, rtol=1e-11)

    def test_pressure_unaffected_by_flow(self, rng):
        for _ in range(20):
            eps = rng.normal(size=3) * 5e-3
            r = return_map_point(eps, PlasticState.zeros(1), STEEL)
            p = (r.sigma[0] + r.sigma[1] + r.sigma[3]) / 3
            assert p == pytest.approx(BULK * (eps[0] + eps[1]), rel=1e-10, abs=1e-9)

    def test_non_finite(self):
        with pytest.raises(NumericError):
            return_map_point([np.nan, 0, 0], PlasticState.zeros(1), STEEL)

    def test_multi_point_state_rejected(self):
        with pytest.raises(ShapeError):
            return_map_point([0, 0, 0], PlasticState.zeros(2), STEEL)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(*[st.floats(-8e-3, 8e-3)] * 3), min_size=1, max_size=12))
def test_kkt_and_monotone_hardening(path):
    eb_prev = 0.0
    for r in chain(path):
        f = von_mises(r.sigma) - (205.0 + 2e3 * r.eps_bar)
        dg = r.eps_bar - eb_prev
        assert f <= 1e-8 * 205.0
        assert dg >= 0.0
        assert abs(dg * f) <= 1e-8 * 205.0
        eb_prev = r.eps_bar


class TestConsistentTangent:
    def test_matches_finite_differences(self, rng):
        n = 30
        eps = rng.normal(size=(n, 3)) * 3e-3
        p = rng.normal(size=(n, 3)) * 5e-4
        eb = np.abs(rng.normal(size=n)) * 1e-3
        D = consistent_tangent(eps, p, eb, STEEL)
        h = 1e-9
        for k in range(3):
            dp = np.zeros(3)
            dp[k] = h
            sp = [return_map_point(e + dp, PlasticState(pi, [b]), STEEL).sigma[:3] for e, pi, b in zip(eps, p, eb)]
            sm = [return_map_point(e - dp, PlasticState(pi, [b]), STEEL).sigma[:3] for e, pi, b in zip(eps, p, eb)]
            fd = (np.array(sp) - np.array(sm)) / (2 * h)
            np.testing.assert_allclose(D[:, :, k], fd, rtol=1e-5, atol=1e-5 * G)


class TestIntegrateHistory:
    def mesh(self):
        return rectangular_bar(length=4, width=2, nx=2, ny=1)

    def test_elastic_program_gives_zero_snapshot(self):
        m = self.mesh()
        strain = np.full((m.n_points, 3, 5), 1e-5)
        snap, final = integrate_history(m, STEEL, strain)
        assert not np.any(snap.data) and not np.any(final.eps_bar)
        assert snap.data.shape == (3 * m.n_points, 5) and snap.evaluations == m.n_points * 5

    def test_load_unload_freezes_plastic_strain(self):
        e_y = 205.0 / (2 * G)
        snap, final = integrate_history(
            rectangular_bar(nx=1, ny=1), STEEL, np.tile(np.array([[3 * e_y, 2 * e_y], [0, 0], [0, 0]]), (4, 1, 1))
        )
        np.testing.assert_array_equal(snap.data[:, 1], snap.data[:, 0])
        assert final.eps_bar[0] > 0

    def test_matches_chained_calls(self, rng):
        m = rectangular_bar(nx=1, ny=1)
        path = np.cumsum(rng.normal(size=(10, 3)) * 1.5e-3, axis=0)
        strain = np.tile(path.T[None], (4, 1, 1))
        snap, final = integrate_history(m, STEEL, strain, record_eps_bar=True)
        res = chain(path)
        np.testing.assert_array_equal(snap.data[stacked_rows([0], 4)], np.array([r.eps_p for r in res]).T)
        np.testing.assert_array_equal(snap.eps_bar[0], [r.eps_bar for r in res])
        assert np.all(np.diff(snap.eps_bar, axis=1) >= 0)

    def test_time_refinement_order(self):
        # smooth non-proportional strain loop; successive halving of the step
        def final_eps_bar(n):
            t = np.linspace(0, 1, n + 1)[1:]
            path = 4e-3 * np.column_stack([np.sin(2 * np.pi * t), -0.5 * np.sin(2 * np.pi * t), 1 - np.cos(2 * np.pi * t)])
            return chain(path)[-1].eps_bar

        vals = [final_eps_bar(n) for n in (20, 40, 80, 160)]
        d = np.abs(np.diff(vals))
        orders = np.log2(d[:-1] / d[1:])
        slope = np.polyfit(np.log([20, 40, 80]), np.log(d), 1)[0]
        assert -slope >= 0.9 and np.all(orders >= 0.9)

    def test_shape_errors(self):
        m = self.mesh()
        with pytest.raises(ShapeError):
            integrate_history(m, STEEL, np.zeros((m.n_points + 1, 3, 2)))
        with pytest.raises(ShapeError):
            integrate_history(m, STEEL, np.zeros((m.n_points, 2, 2)))


class TestSparse:
    def test_full_set_identity(self, rng):
        m = rectangular_bar(length=4, width=2, nx=2, ny=1)
        strain = np.cumsum(rng.normal(size=(m.n_points, 3, 6)) * 2e-3, axis=2)
        full, _ = integrate_history(m, STEEL, strain)
        sp, _ = integrate_history_sparse(m, STEEL, strain, None, np.arange(m.n_points))
        np.testing.assert_array_equal(sp.data, full.data)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_locality(self, seed):
        r = np.random.default_rng(seed)
        m = rectangular_bar(length=4, width=2, nx=2, ny=1)
        strain = np.cumsum(r.normal(size=(m.n_points, 3, 5)) * 2e-3, axis=2)
        init = PlasticState(r.normal(size=(m.n_points, 3)) * 1e-4, np.abs(r.normal(size=m.n_points)) * 1e-4)
        full, ffinal = integrate_history(m, STEEL, strain, init)
        pts = np.sort(r.choice(m.n_points, size=r.integers(1, m.n_points), replace=False))
        sp, sfinal = integrate_history_sparse(m, STEEL, strain[pts], init, pts)
        np.testing.assert_array_equal(sp.data, full.data[stacked_rows(pts, m.n_points)])
        np.testing.assert_array_equal(sfinal.eps_bar, ffinal.eps_bar[pts])
        assert sp.evaluations == len(pts) * 5

    def test_empty_and_out_of_range(self):
        m = rectangular_bar(nx=1, ny=1)
        with pytest.raises(ArgumentError):
            integrate_history_sparse(m, STEEL, np.zeros((0, 3, 2)), None, [])
        with pytest.raises(ArgumentError):
            integrate_history_sparse(m, STEEL, np.zeros((1, 3, 2)), None, [4])


class TestPersistence:
    def test_binary_round_trip(self, tmp_path, rng):
        data = rng.normal(size=(12, 37))
        write_snapshot(tmp_path / "s.bin", data, chunk_width=8)
        np.testing.assert_array_equal(read_snapshot(tmp_path / "s.bin"), data)

    def test_not_a_snapshot(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"0" * 64)
        with pytest.raises(ArgumentError):
            read_snapshot(tmp_path / "x.bin")

    def test_csv_header(self, tmp_path):
        write_snapshot_csv(tmp_path / "s.csv", np.zeros((6, 3)))
        head = (tmp_path / "s.csv").read_text().splitlines()[0].split(",")
        assert head[0] == "t [s]" and len(head) == 7 and all(h.endswith("]") for h in head)


def test_strain_roundtrip_from_displacement():
    m = rectangular_bar(nx=2, ny=1)
    u = np.zeros((m.n_dofs, 3))
    assert evaluate_strain(m, u).shape == (m.n_points, 3, 3)


def test_material_constants_validated():
    with pytest.raises(ArgumentError):
        Material(210e3, 0.3, 205.0, -1.0)
