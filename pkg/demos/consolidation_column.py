"""Saturated soil column under a sudden surface load.

A 10 m column drained at the top is loaded by 100 kPa. The pore water
carries almost the whole load at first and then drains; the mean excess
pressure is compared with the one-dimensional series solution.

Run: python3 demos/consolidation_column.py
"""
import math

import numpy as np

from damrom.assembly import Assembler, BoundaryConditions, DofMap, constrain_dofmap
from damrom.constitutive import default_material
from damrom.mesh import rectangle_mesh
from damrom.solver import FieldState, PicardControl, ThetaScheme, run_transient

H, LOAD, NY = 10.0, 1e5, 40


def average_degree(T, terms=200):
    return 1 - sum(2 / M ** 2 * math.exp(-M ** 2 * T)
                   for M in (math.pi * (2 * i + 1) / 2 for i in range(terms)))


mat = default_material(k_s=1e-7)
mesh = rectangle_mesh(1.0, H, 1, NY)
bcs = BoundaryConditions(displacement={"B": (0, 0), "UD": (0, None), "D": (0, None)},
                         traction={"T": lambda x, y, t: (0 * x, -LOAD + 0 * x)},
                         pressure={"T": 0.0})
dm = constrain_dofmap(DofMap(mesh), bcs)
A = Assembler(mesh, dm, mat, bcs, gravity=False)

M = mat.elastic.p_wave_modulus
Kw = mat.fluid.K_w
c_v = mat.k_s / (mat.gamma_w * mat.vg.theta_s * (1 / M + 1 / Kw))
p0 = LOAD * Kw / (M + Kw)
t_ref = H ** 2 / c_v
print(f"consolidation coefficient c_v = {c_v:.3e} m^2/s, undrained pressure {p0 / 1e3:.2f} kPa")

dt = 0.002 * t_ref
traj = run_transient(A, FieldState(np.zeros(dm.n_u), np.zeros(dm.n_p)), ThetaScheme(1.0, dt),
                     PicardControl(), n_steps=500)
print(f"{'T = c_v t / H^2':>16} {'U (FEM)':>9} {'U (series)':>11}")
for j in (1, 5, 25, 50, 100, 200, 300, 500):
    st = traj.states[j]
    U = 1 - A.integrate_p(st.P) / H / p0
    T = traj.times[j] / t_ref
    print(f"{T:16.3f} {U:9.4f} {average_degree(T):11.4f}")
settle = -st.U[1::2].min()
print(f"final surface settlement {1e3 * settle:.2f} mm (drained value {1e3 * LOAD * H / M:.2f} mm)")
