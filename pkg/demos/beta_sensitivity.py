"""Sensitivity of the steady seepage to the seepage-face penalty.

The downstream face is a seepage boundary: water leaves through a Robin
condition with coefficient beta = multiplier * k_s / (gamma_w * l_edge)
wherever the pore pressure is positive. The multiplier is a modelling
choice, so this script solves the steady state for a range of values and
prints the outflow and where the phreatic line meets the downstream face.

Run: python3 demos/beta_sensitivity.py [n_levels]
"""
import sys

import numpy as np

from damrom.output import phreatic_line
from damrom.scenario import DamScenario
from damrom.solver import PicardControl, ThetaScheme, initial_steady_state

n_levels = int(sys.argv[1]) if len(sys.argv) > 1 else 9
print(f"{'beta x':>7} {'outflow D [l/day/m]':>20} {'inflow UW [l/day/m]':>20} {'exit height [m]':>16}")
for mult in (0.25, 0.5, 1.0, 2.0, 4.0):
    sc = DamScenario(n_levels=n_levels, beta_multiplier=mult)
    A = sc.build()
    st = initial_steady_state(A, sc.geometry.WL, ThetaScheme(), PicardControl())
    flux = A.boundary_fluxes(st.P)
    pts = np.vstack(phreatic_line(sc.mesh, st.P))
    exit_y = pts[np.argmax(pts[:, 0]), 1]  # downstream end of the line
    to_lpd = 1e3 * 86400.0
    print(f"{mult:7.2f} {flux['D'] * to_lpd:20.4f} {flux['UW'] * to_lpd:20.4f} {exit_y:16.3f}")
