"""Ready-made boundary inputs for channel scenarios."""
from __future__ import annotations

import numpy as np

from .assembly import build_dofmap
from .mesh import Mesh
from .node import BoundarySignal


def ramp(t: float, ramp_time: float) -> tuple[float, float]:
    """Smooth start ``(1 - cos(pi t / T)) / 2`` on ``[0, T]``, then 1.

    Returns the value and its time derivative.
    """
    if ramp_time <= 0 or t >= ramp_time:
        return 1.0, 0.0
    if t <= 0:
        return 0.0, 0.0
    a = np.pi / ramp_time
    return 0.5 * (1.0 - np.cos(a * t)), 0.5 * a * np.sin(a * t)


def parabolic_profile(mesh: Mesh, peak: float = 1.0) -> np.ndarray:
    """Parabolic normal inflow ``(4 peak s (1 - s), 0)`` on the inflow nodes.

    ``s`` is the relative height along the inflow segment, which is assumed
    vertical with the flow entering in the +x direction.
    """
    dm = build_dofmap(mesh)
    y = mesh.p2_nodes[dm.in_nodes, 1]
    y0, y1 = y.min(), y.max()
    s = (y - y0) / (y1 - y0)
    out = np.zeros((len(y), 2))
    out[:, 0] = 4.0 * peak * s * (1.0 - s)
    out[np.isin(dm.in_nodes, dm.in_wall_nodes)] = 0.0
    return out


def parabolic_inflow(mesh: Mesh, peak: float = 1.0, ramp_time: float = 0.0,
                     u_sigma=None) -> BoundarySignal:
    profile = parabolic_profile(mesh, peak)
    return BoundarySignal(
        u_v=lambda t: ramp(t, ramp_time)[0] * profile,
        u_sigma=u_sigma,
        du_v=lambda t: ramp(t, ramp_time)[1] * profile,
    )


def constant_outflow(mesh: Mesh, stress) -> callable:
    """Spatially and temporally constant outflow stress vector."""
    n = len(build_dofmap(mesh).out_nodes)
    s = np.broadcast_to(np.asarray(stress, dtype=float), (n, 2)).copy()
    return lambda t: s


def sinusoidal_outflow(mesh: Mesh, amplitude, frequency: float = 1.0) -> callable:
    """Outflow stress ``amplitude * sin(2 pi f t)``, uniform along the boundary."""
    n = len(build_dofmap(mesh).out_nodes)
    a = np.broadcast_to(np.asarray(amplitude, dtype=float), (n, 2)).copy()
    return lambda t: np.sin(2.0 * np.pi * frequency * t) * a
