import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from damrom.assembly import Assembler, BoundaryConditions, DofMap
from damrom.mesh import DamGeometry, Mesh, MeshError, boundary_measure
from damrom.scenario import (DamScenario, LoadSchedule, TailingsLoadParams, crest_load,
                             hydrostatic_load, tailings_load)
from damrom.solver import DAY

LP = TailingsLoadParams()
SCHED = LoadSchedule()
GEOM = DamGeometry()


def test_active_earth_pressure_coefficient():
    s = math.sin(math.radians(35))
    assert LP.K_a == pytest.approx((1 - s) / (1 + s), rel=1e-12)
    assert LP.K_a == pytest.approx(0.27099, abs=1e-5)


@pytest.mark.parametrize("kw", [dict(phi=0.0), dict(phi=math.pi / 2), dict(gamma_t=0.0)])
def test_tailings_params_validation(kw):
    with pytest.raises(ValueError):
        TailingsLoadParams(**kw)


def test_hydrostatic_load_values():
    assert hydrostatic_load(7.0, 7.0, 1e4) == 0.0
    assert hydrostatic_load(0.0, 7.0, 1e4) == pytest.approx(70e3)
    assert hydrostatic_load(2.0, 7.0, 1e4) - hydrostatic_load(5.0, 7.0, 1e4) == pytest.approx(3e4)
    assert hydrostatic_load(9.0, 7.0, 1e4) == 0.0


def test_tailings_load_values():
    assert tailings_load(10.0, LP, 10.0, 7.0) == (0.0, 0.0, 0.0)
    px, py, pe = tailings_load(7.0, LP, 10.0, 7.0)
    assert py == pytest.approx(63e3) and px == pytest.approx(LP.K_a * 63e3)
    assert px == pytest.approx(17.07e3, rel=1e-3)
    assert pe == pytest.approx(math.hypot(px, py))
    # submerged branch: 21 * 3 + 11 * 7 kPa at the base
    assert tailings_load(0.0, LP, 10.0, 7.0)[1] == pytest.approx(140e3)
    assert tailings_load(8.0, LP, 10.0, 7.0)[1] == pytest.approx(42e3)
    with pytest.raises(ValueError):
        tailings_load(10.5, LP, 10.0, 7.0)
    with pytest.raises(ValueError):
        tailings_load(-0.1, LP, 10.0, 7.0)


def test_tailings_load_continuous_at_water_level():
    eps = 1e-9
    lo = np.array(tailings_load(7.0 - eps, LP, 10.0, 7.0))
    hi = np.array(tailings_load(7.0 + eps, LP, 10.0, 7.0))
    np.testing.assert_allclose(lo, hi, rtol=1e-8)


def test_crest_load_ramp():
    assert crest_load(0.0, SCHED, LP) == (0.0, 0.0)
    qx, qy = crest_load(10 * DAY, SCHED, LP)
    assert qy == pytest.approx(21e3) and qx == pytest.approx(5.69e3, rel=1e-3)
    assert crest_load(40 * DAY, SCHED, LP) == (qx, qy)
    hx, hy = crest_load(5 * DAY, SCHED, LP)
    assert (hx, hy) == pytest.approx((qx / 2, qy / 2), rel=1e-15)


@pytest.mark.parametrize("kw", [dict(ramp_duration=0.0), dict(raise_height=-1.0)])
def test_schedule_validation(kw):
    with pytest.raises(ValueError):
        LoadSchedule(**kw)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_loads_lipschitz_in_height(y1, y2):
    # continuity: bounded slope everywhere, including across the water level
    d = np.abs(np.array(tailings_load(y1, LP, 10.0, 7.0)) - np.array(tailings_load(y2, LP, 10.0, 7.0)))
    assert np.all(d <= 2 * LP.gamma_t * abs(y1 - y2) + 1e-6)
    assert abs(hydrostatic_load(y1, 7.0, 1e4) - hydrostatic_load(y2, 7.0, 1e4)) <= 1e4 * abs(y1 - y2) + 1e-9


@pytest.fixture(scope="module")
def scenario():
    return DamScenario(n_levels=8)


def test_every_boundary_edge_has_one_hydraulic_kind(scenario):
    bcs = scenario.boundary_conditions()
    kinds = {tag: bcs.hydraulic_kind(tag) for tag in scenario.mesh.tags}
    assert kinds == {"UW": "dirichlet", "D": "robin", "UD": "no-flux", "B": "no-flux", "T": "no-flux"}
    assert set(bcs.displacement) == {"B"} and bcs.displacement["B"] == (0.0, 0.0)


def test_total_crest_force(scenario):
    # crest traction alone: the upstream faces share the crest corner node
    bcs = scenario.boundary_conditions()
    only_top = BoundaryConditions(traction={"T": bcs.traction["T"]})
    A = Assembler(scenario.mesh, DofMap(scenario.mesh), scenario.material, only_top)
    f = A.traction_vector(20 * DAY)
    span = boundary_measure(scenario.mesh, "T")
    assert span == pytest.approx(GEOM.crest_width)
    assert f[1::2].sum() == pytest.approx(-21e3 * 1.0 * span, rel=1e-10)
    assert f[0::2].sum() == 0.0


def test_upstream_tractions(scenario):
    bcs = scenario.boundary_conditions()
    t = 20 * DAY
    qx, qy = crest_load(t, SCHED, LP)
    y = np.array([8.0, 9.5])
    tx, ty = bcs.traction["UD"](0 * y, y, t)
    px, py, _ = tailings_load(y, LP, GEOM.H, GEOM.WL)
    np.testing.assert_allclose(tx, qx + px)
    np.testing.assert_allclose(ty, -(qy + py))
    # below the water level the reservoir pressure acts along the inward normal
    y = np.array([1.0, 5.0])
    wx, wy = bcs.traction["UW"](0 * y, y, t)
    dx, dy = bcs.traction["UD"](0 * y, y, t)
    pw = 1e4 * (GEOM.WL - y)
    n = np.array([1.0, -GEOM.upstream_slope]) / math.hypot(1.0, GEOM.upstream_slope)
    np.testing.assert_allclose(wx - dx, pw * n[0])
    np.testing.assert_allclose(wy - dy, pw * n[1])


def test_prescribed_pressure_on_wet_face(scenario):
    A = scenario.build()
    dm = A.dofmap
    nodes = scenario.mesh.nodes_with_tag("UW")
    lift = dm.lift()
    np.testing.assert_allclose(lift[dm.n_u + nodes], 1e4 * (GEOM.WL - scenario.mesh.nodes[nodes, 1]),
                               rtol=0, atol=1e-9)


def test_scenario_reproducible(scenario):
    a, b = scenario.build(), DamScenario(n_levels=8).build()
    assert scenario.fingerprint() == DamScenario(n_levels=8).fingerprint()
    np.testing.assert_array_equal(a.traction_vector(3.3 * DAY), b.traction_vector(3.3 * DAY))
    np.testing.assert_array_equal(a.dofmap.constrained_values, b.dofmap.constrained_values)
    assert scenario.fingerprint() != scenario.with_ks(3e-9).fingerprint()


def test_unknown_boundary_tag_rejected():
    nodes = [[0, 0], [1, 0], [0, 1]]
    with pytest.raises(MeshError, match="unknown"):
        Mesh(nodes, [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], ["B", "X", "UD"])
