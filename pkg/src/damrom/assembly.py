"""Taylor-Hood (P2 displacement / P1 pressure) assembly on triangles.

The coupled discrete system for displacement ``U`` and pore pressure ``P`` is

    K U - Q(P) P = f_u(P, t)
    H(P) P + C(P) dU/dt - S(P) dP/dt = f_p(P)

with

    K  = int grad(N_u)^T D_el grad(N_u)
    Q  = int div(N_u)^T Se N_p
    C  = int N_p^T Theta div(N_u)
    S  = int N_p^T s(p) N_p,              s = -(dTheta/dp + Theta/K_w)
    H  = int grad(N_p)^T k/gamma_w grad(N_p) + seepage Robin block
    f_u = int N_u rho(p) g + tractions
    f_p = int grad(N_p) . k/gamma_w rho_w g

Gravity points in -y. Darcy flux is ``q = -k/gamma_w (grad p - rho_w g)``
so a hydrostatic column carries no flow.

Element-level kernels are computed for all triangles at once; global
matrices are scattered into precomputed CSR patterns, so re-assembly at a new
pressure state costs a few vectorised passes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .constitutive import MaterialParams, pointwise_laws
from .mesh import Mesh

# --- quadrature -------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points with weights normalised to the reference measure 1."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


def triangle_rule() -> QuadratureRule:
    """Six-point rule, exact for polynomials of degree 4."""
    a, b = 0.445948490915965, 0.091576213509771
    wa, wb = 0.223381589678011, 0.109951743655322
    pts = np.array([
        [1 - 2 * a, a, a], [a, 1 - 2 * a, a], [a, a, 1 - 2 * a],
        [1 - 2 * b, b, b], [b, 1 - 2 * b, b], [b, b, 1 - 2 * b],
    ])
    w = np.array([wa, wa, wa, wb, wb, wb])
    return QuadratureRule(pts, w / w.sum(), 4)


def edge_rule() -> QuadratureRule:
    """Three-point Gauss-Legendre on an edge, exact to degree 5."""
    r = np.sqrt(3.0 / 5.0) / 2.0
    s = np.array([0.5 - r, 0.5, 0.5 + r])
    return QuadratureRule(np.column_stack([1 - s, s]), np.array([5.0, 8.0, 5.0]) / 18.0, 5)


def p2_values(lam: np.ndarray) -> np.ndarray:
    """P2 basis at barycentric points; vertices 0-2 then midpoints of (0,1), (1,2), (2,0)."""
    l0, l1, l2 = lam[:, 0], lam[:, 1], lam[:, 2]
    return np.column_stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ])


def p2_lambda_derivatives(lam: np.ndarray) -> np.ndarray:
    """d(phi_a)/d(lambda_b) at each point, shape (nq, 6, 3)."""
    nq = len(lam)
    d = np.zeros((nq, 6, 3))
    for a in range(3):
        d[:, a, a] = 4 * lam[:, a] - 1
    for k, (i, j) in enumerate([(0, 1), (1, 2), (2, 0)]):
        d[:, 3 + k, i] = 4 * lam[:, j]
        d[:, 3 + k, j] = 4 * lam[:, i]
    return d


# --- degrees of freedom -----------------------------------------------------


class DofMap:
    """Numbering for P2 displacement (2 components) and P1 pressure.

    Displacement dof of P2 node ``n`` and component ``c`` is ``2 n + c``;
    P2 nodes are the mesh vertices followed by the edge midpoints. Pressure
    dofs are the mesh vertices. In the monolithic system pressure dofs are
    offset by ``n_u``.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        t = mesh.triangles
        local = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1)
        flat = np.sort(local.reshape(-1, 2), axis=1)
        self.edges, inv = np.unique(flat, axis=0, return_inverse=True)
        inv = inv.ravel()
        nv = mesh.n_nodes
        self.n_vertices = nv
        self.tri_p2 = np.hstack([t, nv + inv.reshape(-1, 3)])
        self.n_p2 = nv + len(self.edges)
        self.p2_coords = np.vstack([mesh.nodes, mesh.nodes[self.edges].mean(axis=1)])
        self.elem_u = np.empty((len(t), 12), dtype=np.int64)
        self.elem_u[:, 0::2] = 2 * self.tri_p2
        self.elem_u[:, 1::2] = 2 * self.tri_p2 + 1
        self.elem_p = t.copy()
        key = {tuple(e): k for k, e in enumerate(self.edges.tolist())}
        be = np.sort(mesh.edges, axis=1)
        self.boundary_mid = nv + np.array([key[tuple(e)] for e in be.tolist()], dtype=np.int64)
        self._constraints: dict[int, float] = {}

    @property
    def n_u(self) -> int:
        return 2 * self.n_p2

    @property
    def n_p(self) -> int:
        return self.n_vertices

    @property
    def n_total(self) -> int:
        return self.n_u + self.n_p

    def p2_nodes_with_tag(self, tag: str) -> np.ndarray:
        mask = self.mesh.edge_tags == tag
        return np.unique(np.concatenate([self.mesh.edges[mask].ravel(), self.boundary_mid[mask]]))

    def constrain(self, dofs, values) -> None:
        """Prescribe global dofs; a second, different value for a dof is an error."""
        dofs = np.atleast_1d(np.asarray(dofs, dtype=np.int64))
        values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
        if dofs.size and (dofs.min() < 0 or dofs.max() >= self.n_total):
            raise ValueError("constrained dof out of range")
        for d, v in zip(dofs.tolist(), values.tolist()):
            old = self._constraints.get(d)
            if old is not None and abs(old - v) > 1e-12 * max(1.0, abs(v)):
                raise ValueError(f"conflicting prescriptions on dof {d}: {old} vs {v}")
            self._constraints[d] = v

    @property
    def constrained(self) -> np.ndarray:
        return np.array(sorted(self._constraints), dtype=np.int64)

    @property
    def constrained_values(self) -> np.ndarray:
        return np.array([self._constraints[d] for d in sorted(self._constraints)])

    def lift(self) -> np.ndarray:
        """Global vector holding prescribed values, zero elsewhere."""
        x = np.zeros(self.n_total)
        x[self.constrained] = self.constrained_values
        return x

    def free_mask(self) -> np.ndarray:
        m = np.ones(self.n_total, dtype=bool)
        m[self.constrained] = False
        return m

    def fingerprint(self) -> str:
        import hashlib
        h = hashlib.sha256(self.mesh.fingerprint().encode())
        h.update(self.constrained.tobytes())
        h.update(np.round(self.constrained_values, 12).tobytes())
        return h.hexdigest()


# --- boundary conditions ------------------------------------------------------

TractionFn = Callable[[np.ndarray, np.ndarray, float], tuple]


@dataclass(frozen=True)
class BoundaryConditions:
    """Boundary data keyed by mesh tag.

    ``displacement`` maps a tag to per-component prescribed values (a
    callable ``f(x, y)`` or a constant; ``None`` leaves the component free).
    ``traction`` maps a tag to ``f(x, y, t) -> (tx, ty)``. ``pressure`` maps a
    tag to ``f(x, y)`` for Dirichlet pore pressure. Tags in ``seepage`` carry
    the unilateral Robin outflow condition. Hydraulic tags not mentioned are
    impervious.
    """

    displacement: Mapping[str, tuple] = field(default_factory=dict)
    traction: Mapping[str, TractionFn] = field(default_factory=dict)
    pressure: Mapping[str, Callable] = field(default_factory=dict)
    seepage: tuple[str, ...] = ()
    beta_multiplier: float = 1.0

    def hydraulic_kind(self, tag: str) -> str:
        if tag in self.pressure:
            return "dirichlet"
        if tag in self.seepage:
            return "robin"
        return "no-flux"


def _evaluate(fn, x, y):
    if callable(fn):
        return np.broadcast_to(np.asarray(fn(x, y), dtype=float), x.shape)
    return np.full(x.shape, float(fn))


def constrain_dofmap(dofmap: DofMap, bcs: BoundaryConditions) -> DofMap:
    """Populate the dof map's constraint list from the Dirichlet data."""
    for tag, comps in bcs.displacement.items():
        nodes = dofmap.p2_nodes_with_tag(tag)
        x, y = dofmap.p2_coords[nodes].T
        for c, fn in enumerate(comps):
            if fn is not None:
                dofmap.constrain(2 * nodes + c, _evaluate(fn, x, y))
    for tag, fn in bcs.pressure.items():
        nodes = dofmap.mesh.nodes_with_tag(tag)
        x, y = dofmap.mesh.nodes[nodes].T
        dofmap.constrain(dofmap.n_u + nodes, _evaluate(fn, x, y))
    return dofmap


# --- sparse patterns --------------------------------------------------------


class _Pattern:
    """Fixed CSR sparsity pattern with a scatter map for element values."""

    def __init__(self, rows: np.ndarray, cols: np.ndarray, shape: tuple[int, int]):
        self.shape = shape
        keys = rows.ravel().astype(np.int64) * shape[1] + cols.ravel()
        self.keys, self.scatter = np.unique(keys, return_inverse=True)
        self.scatter = self.scatter.ravel()
        r = self.keys // shape[1]
        self.indices = (self.keys % shape[1]).astype(np.int32)
        self.indptr = np.searchsorted(r, np.arange(shape[0] + 1)).astype(np.int32)
        self.nnz = len(self.keys)

    def assemble(self, values: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.scatter, weights=values.ravel(), minlength=self.nnz)
        return self.from_data(data)

    def from_data(self, data: np.ndarray) -> sp.csr_matrix:
        m = sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)
        m.has_sorted_indices = True
        return m

    def locate(self, rows, cols) -> np.ndarray:
        keys = np.asarray(rows, dtype=np.int64) * self.shape[1] + np.asarray(cols)
        pos = np.searchsorted(self.keys, keys)
        if np.any(self.keys[np.minimum(pos, self.nnz - 1)] != keys):
            raise KeyError("entry outside sparsity pattern")
        return pos


def _scatter_into(n: int, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
    return np.bincount(idx.ravel(), weights=vals.ravel(), minlength=n)


@dataclass(frozen=True)
class OperatorSet:
    """Discrete operators linearised at one pressure state and time."""

    K: sp.csr_matrix
    Q: sp.csr_matrix
    C: sp.csr_matrix
    S: sp.csr_matrix
    H: sp.csr_matrix
    f_u: np.ndarray
    f_p: np.ndarray
    P: np.ndarray
    t: float = 0.0


def plane_strain_matrix(lam: float, mu: float) -> np.ndarray:
    return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])


class Assembler:
    """Caches geometry, quadrature and sparsity for one mesh/material/BC set."""

    def __init__(self, mesh: Mesh, dofmap: DofMap, params: MaterialParams,
                 bcs: BoundaryConditions | None = None, gravity: bool = True):
        self.mesh = mesh
        self.dofmap = dofmap
        self.params = params
        self.bcs = bcs if bcs is not None else BoundaryConditions()
        self.gravity = np.array([0.0, -params.fluid.g]) if gravity else np.zeros(2)

        tri = mesh.triangles
        xy = mesh.nodes[tri]
        jac = np.stack([xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]], axis=2)  # (M, 2, 2), columns = edge vectors
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        bad = np.flatnonzero(np.abs(det) <= 1e-14 * np.max(np.abs(det)))
        if bad.size:
            raise ValueError(f"singular Jacobian in element {bad[0]}")
        inv = np.linalg.inv(jac)  # rows: grad of lambda_1, lambda_2
        g12 = inv
        g0 = -g12.sum(axis=1)
        self.grad_lam = np.concatenate([g0[:, None, :], g12], axis=1)  # (M, 3, 2)
        self.area = 0.5 * det

        rule = triangle_rule()
        self.rule = rule
        self.lam_q = rule.points
        self.WA = rule.weights[None, :] * self.area[:, None]  # (M, nq)
        self.phi_q = p2_values(self.lam_q)  # (nq, 6)
        dphi = p2_lambda_derivatives(self.lam_q)
        self.G = np.einsum("qab,ebd->eqad", dphi, self.grad_lam)  # (M, nq, 6, 2)
        self.Gu = self.G.reshape(len(tri), len(self.lam_q), 12)  # local dof 2a+i
        self.xq = np.einsum("qa,ead->eqd", self.lam_q, xy)  # quadrature points (M, nq, 2)
        self.mass_q = np.einsum("qa,qb->qab", self.lam_q, self.lam_q)
        self.flow_k = np.einsum("ead,ebd->eab", self.grad_lam, self.grad_lam)
        self.coup = np.einsum("eqk,qb->eqkb", self.Gu, self.lam_q)  # div(N_u) N_p at quadrature

        eu, ep = dofmap.elem_u, dofmap.elem_p
        n_u, n_p = dofmap.n_u, dofmap.n_p
        self.pat_uu = _Pattern(np.repeat(eu, 12, axis=1), np.tile(eu, (1, 12)), (n_u, n_u))
        self.pat_up = _Pattern(np.repeat(eu, 3, axis=1), np.tile(ep, (1, 12)), (n_u, n_p))
        self.pat_pu = _Pattern(np.repeat(ep, 12, axis=1), np.tile(eu, (1, 3)), (n_p, n_u))
        self.pat_pp = _Pattern(np.repeat(ep, 3, axis=1), np.tile(ep, (1, 3)), (n_p, n_p))

        self._setup_boundary()
        self._K = None

    # boundary edge data
    def _setup_boundary(self):
        mesh, dm = self.mesh, self.dofmap
        er = edge_rule()
        self.edge_rule = er
        s = er.points[:, 1]
        self.edge_phi2 = np.column_stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)])
        self.edge_phi1 = er.points  # (nq, 2)
        a, b = mesh.edges[:, 0], mesh.edges[:, 1]
        pa, pb = mesh.nodes[a], mesh.nodes[b]
        self.edge_len = np.hypot(*(pb - pa).T)
        self.edge_xq = pa[:, None, :] * (1 - s)[None, :, None] + pb[:, None, :] * s[None, :, None]
        self.edge_p2 = np.column_stack([a, b, dm.boundary_mid])
        t = (pb - pa) / self.edge_len[:, None]
        self.edge_normal = np.column_stack([t[:, 1], -t[:, 0]])  # outward for CCW boundary

        # seepage faces
        seep = np.isin(mesh.edge_tags, list(self.bcs.seepage))
        self.seep_edges = np.flatnonzero(seep)
        se = mesh.edges[self.seep_edges]
        self.seep_beta = (self.bcs.beta_multiplier * self.params.k_s
                          / (self.params.gamma_w * self.edge_len[self.seep_edges]))
        rows = np.repeat(se, 2, axis=1)
        cols = np.tile(se, (1, 2))
        self.seep_pos = self.pat_pp.locate(rows.ravel(), cols.ravel()).reshape(-1, 4) if len(se) else np.zeros((0, 4), dtype=np.int64)

    # --- constant parts ----------------------------------------------------
    def stiffness(self) -> sp.csr_matrix:
        if self._K is None:
            el = self.params.elastic
            self._K = self.pat_uu.assemble(self.stiffness_elements(el.lam, el.mu))
        return self._K

    def stiffness_elements(self, lam, mu) -> np.ndarray:
        W, G, Gu = self.WA, self.G, self.Gu
        k_lam = np.einsum("eq,eqk,eql->ekl", W, Gu, Gu)
        gg = np.einsum("eq,eqad,eqbd->eab", W, G, G)
        k_mu = np.einsum("eq,eqaj,eqbi->eaibj", W, G, G).reshape(len(W), 12, 12)
        for i in range(2):
            k_mu[:, i::2, i::2] += gg
        return lam * k_lam + mu * k_mu

    def traction_vector(self, t: float) -> np.ndarray:
        f = np.zeros(self.dofmap.n_u)
        w = self.edge_rule.weights
        for tag, fn in self.bcs.traction.items():
            sel = np.flatnonzero(self.mesh.edge_tags == tag)
            if sel.size == 0:
                continue
            x, y = self.edge_xq[sel, :, 0], self.edge_xq[sel, :, 1]
            tx, ty = fn(x, y, t)
            tx = np.broadcast_to(np.asarray(tx, dtype=float), x.shape)
            ty = np.broadcast_to(np.asarray(ty, dtype=float), x.shape)
            wl = w[None, :] * self.edge_len[sel, None]
            nodes = self.edge_p2[sel]
            f += _scatter_into(f.size, 2 * nodes, np.einsum("eq,eq,qa->ea", wl, tx, self.edge_phi2))
            f += _scatter_into(f.size, 2 * nodes + 1, np.einsum("eq,eq,qa->ea", wl, ty, self.edge_phi2))
        return f

    def body_load(self, fn) -> np.ndarray:
        """Load vector of a body force ``fn(x, y) -> (fx, fy)``."""
        x, y = self.xq[..., 0], self.xq[..., 1]
        fx, fy = fn(x, y)
        fx = np.broadcast_to(np.asarray(fx, dtype=float), x.shape)
        fy = np.broadcast_to(np.asarray(fy, dtype=float), x.shape)
        fe = np.empty((len(x), 12))
        fe[:, 0::2] = np.einsum("eq,eq,qa->ea", self.WA, fx, self.phi_q)
        fe[:, 1::2] = np.einsum("eq,eq,qa->ea", self.WA, fy, self.phi_q)
        return _scatter_into(self.dofmap.n_u, self.dofmap.elem_u, fe)

    def pressure_source(self, fn) -> np.ndarray:
        x, y = self.xq[..., 0], self.xq[..., 1]
        s = np.broadcast_to(np.asarray(fn(x, y), dtype=float), x.shape)
        return _scatter_into(self.dofmap.n_p, self.dofmap.elem_p,
                             np.einsum("eq,eq,qa->ea", self.WA, s, self.lam_q))

    def conductance(self, coefficient: float = 1.0) -> sp.csr_matrix:
        """Scalar P1 stiffness int coefficient grad(N_p)^T grad(N_p)."""
        return self.pat_pp.assemble(coefficient * self.area[:, None, None] * self.flow_k)

    def divergence_coupling(self, weight=1.0) -> sp.csr_matrix:
        """int div(N_u)^T weight N_p with a constant or per-quadrature weight."""
        w = self.WA * np.broadcast_to(weight, self.WA.shape)
        return self.pat_up.assemble(np.einsum("eq,eqkb->ekb", w, self.coup))

    # --- pressure-dependent parts ---------------------------------------------
    def pressure_at_quadrature(self, P: np.ndarray) -> np.ndarray:
        return P[self.dofmap.elem_p] @ self.lam_q.T

    def state_operators(self, P: np.ndarray, t: float = 0.0,
                        traction: np.ndarray | None = None) -> OperatorSet:
        """Operators and load vectors linearised at pressure ``P`` and time ``t``."""
        P = np.asarray(P, dtype=float)
        if P.shape != (self.dofmap.n_p,):
            raise ValueError(f"pressure vector has shape {P.shape}, expected ({self.dofmap.n_p},)")
        if not np.all(np.isfinite(P)):
            raise FloatingPointError("non-finite pore pressure passed to assembly")
        pq = self.pressure_at_quadrature(P)
        law = pointwise_laws(pq, self.params)
        W = self.WA
        gw = self.params.gamma_w

        Q = self.pat_up.assemble(np.einsum("eq,eqkb->ekb", W * law["se"], self.coup))
        C = self.pat_pu.assemble(np.einsum("eq,eqkb->ebk", W * law["theta"], self.coup))
        S = self.pat_pp.assemble(np.einsum("eq,qab->eab", W * law["storage"], self.mass_q))

        kq = (W * law["k"]).sum(axis=1) / gw  # int k/gamma_w over each element
        h_data = np.bincount(self.pat_pp.scatter, weights=(kq[:, None, None] * self.flow_k).ravel(),
                             minlength=self.pat_pp.nnz)
        if self.seep_edges.size:
            h_data += self._robin_data(P)
        H = self.pat_pp.from_data(h_data)

        b_w = self.params.fluid.rho_w * self.gravity
        fpe = kq[:, None] * (self.grad_lam @ b_w)
        f_p = _scatter_into(self.dofmap.n_p, self.dofmap.elem_p, fpe)

        rho = law["rho"]
        fe = np.empty((len(W), 12))
        fe[:, 0::2] = np.einsum("eq,qa->ea", W * rho * self.gravity[0], self.phi_q)
        fe[:, 1::2] = np.einsum("eq,qa->ea", W * rho * self.gravity[1], self.phi_q)
        f_u = _scatter_into(self.dofmap.n_u, self.dofmap.elem_u, fe)
        f_u += self.traction_vector(t) if traction is None else traction
        return OperatorSet(self.stiffness(), Q, C, S, H, f_u, f_p, P.copy(), t)

    def _robin_data(self, P: np.ndarray) -> np.ndarray:
        """Seepage block scattered into the pressure pattern; active where p > 0."""
        se = self.mesh.edges[self.seep_edges]
        pq = P[se] @ self.edge_phi1.T  # (E, nq)
        active = pq > 0.0
        w = self.edge_rule.weights[None, :] * active * (self.seep_beta * self.edge_len[self.seep_edges])[:, None]
        blk = np.einsum("eq,qa,qb->eab", w, self.edge_phi1, self.edge_phi1)
        return np.bincount(self.seep_pos.ravel(), weights=blk.ravel(), minlength=self.pat_pp.nnz)

    def robin_matrix(self, P: np.ndarray) -> sp.csr_matrix:
        return self.pat_pp.from_data(self._robin_data(P) if self.seep_edges.size else np.zeros(self.pat_pp.nnz))

    # --- post-processing ------------------------------------------------------
    def darcy_flux(self, P: np.ndarray) -> np.ndarray:
        """Darcy velocity (m/s) at element centroids, shape (M, 2)."""
        tri = self.dofmap.elem_p
        grad_p = np.einsum("ea,ead->ed", P[tri], self.grad_lam)
        k = pointwise_laws(P[tri].mean(axis=1), self.params)["k"]
        b_w = self.params.fluid.rho_w * self.gravity
        return -(k / self.params.gamma_w)[:, None] * (grad_p - b_w)

    def boundary_fluxes(self, P: np.ndarray, ops: OperatorSet | None = None) -> dict[str, float]:
        """Outflow (m^3/s per metre) through each tagged boundary part.

        Dirichlet faces report the consistent reaction of the flow residual,
        seepage faces the Robin outflow, impervious faces zero.
        """
        if ops is None:
            ops = self.state_operators(P)
        R = self.robin_matrix(P)
        residual = (ops.H - R) @ P - ops.f_p
        out = {tag: 0.0 for tag in self.mesh.tags}
        taken: set[int] = set()
        for tag in self.mesh.tags:
            if self.bcs.hydraulic_kind(tag) == "dirichlet":
                nodes = [n for n in self.mesh.nodes_with_tag(tag).tolist() if n not in taken]
                taken.update(nodes)
                out[tag] = float(-residual[nodes].sum())
        robin_out = R @ P
        for tag in self.bcs.seepage:
            if tag in out:
                nodes = [n for n in self.mesh.nodes_with_tag(tag).tolist() if n not in taken]
                out[tag] += float(robin_out[nodes].sum())
        return out

    # --- error norms for verification ------------------------------------------
    def l2_error_u(self, U: np.ndarray, exact) -> float:
        x, y = self.xq[..., 0], self.xq[..., 1]
        ue = U[self.dofmap.elem_u]
        ux = ue[:, 0::2] @ self.phi_q.T
        uy = ue[:, 1::2] @ self.phi_q.T
        ex, ey = exact(x, y)
        return float(np.sqrt(np.sum(self.WA * ((ux - ex) ** 2 + (uy - ey) ** 2))))

    def l2_error_p(self, P: np.ndarray, exact) -> float:
        x, y = self.xq[..., 0], self.xq[..., 1]
        pq = self.pressure_at_quadrature(P)
        return float(np.sqrt(np.sum(self.WA * (pq - exact(x, y)) ** 2)))

    def integrate_p(self, P: np.ndarray) -> float:
        return float(np.sum(self.WA * self.pressure_at_quadrature(P)))


def assemble_elastic_stiffness(mesh: Mesh, dofmap: DofMap, params: MaterialParams) -> sp.csr_matrix:
    return Assembler(mesh, dofmap, params).stiffness()


def assemble_state_operators(mesh: Mesh, dofmap: DofMap, params: MaterialParams,
                             P: np.ndarray, bcs: BoundaryConditions | None = None,
                             t: float = 0.0) -> OperatorSet:
    return Assembler(mesh, dofmap, params, bcs).state_operators(P, t)


def apply_dirichlet(A: sp.spmatrix, b: np.ndarray, dofmap: DofMap):
    """Symmetric elimination of the constrained dofs.

    Constrained rows and columns are zeroed with a unit diagonal, the
    right-hand side receives the lift contribution and holds the prescribed
    values at constrained rows.
    """
    c = dofmap.constrained
    if c.size == 0:
        return A, b
    g = np.zeros(A.shape[0])
    g[c] = dofmap.constrained_values
    free = np.ones(A.shape[0])
    free[c] = 0.0
    Df = sp.diags(free)
    A2 = (Df @ A @ Df + sp.diags(1.0 - free)).tocsc()
    b2 = free * (b - A @ g) + g
    return A2, b2


def darcy_flux(assembler: Assembler, P: np.ndarray) -> np.ndarray:
    return assembler.darcy_flux(P)
