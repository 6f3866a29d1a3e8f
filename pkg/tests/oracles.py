"""Independent oracles shared by the test modules.

Nothing here calls into the package's geometry code; the symbolic oracle
works directly from the chart metric dr^2 + exp(2v)[(c + lam1 s)^2 dx^2 +
(c + lam2 s)^2 dy^2].
"""

import math
from functools import lru_cache

import numpy as np
import sympy as sp

from vpmcf.foliation import ReferenceSurfaceData

X, Y, R = sp.symbols("x y r", real=True)

# smooth periodic test data on the 2 pi x 2 pi torus
SMOOTH_V = sp.Rational(1, 5) * sp.cos(X + sp.Rational(3, 10)) * sp.sin(Y)
SMOOTH_LAM1 = sp.Rational(2, 5) * sp.sin(X) * sp.cos(Y) + sp.Rational(1, 10)
SMOOTH_LAM2 = sp.Rational(3, 10) * sp.cos(2 * Y - 1) - sp.Rational(1, 10) * sp.sin(X)


def _divergence_mean_curvature(v, lam1, lam2, u):
    """H = div(grad phi / |grad phi|) for phi = r - u, evaluated on r = u."""
    c, s = sp.cosh(R), sp.sinh(R)
    g1 = sp.exp(2 * v) * (c + lam1 * s) ** 2
    g2 = sp.exp(2 * v) * (c + lam2 * s) ** 2
    ux, uy = sp.diff(u, X), sp.diff(u, Y)
    norm = sp.sqrt(1 + ux**2 / g1 + uy**2 / g2)
    nu = (-ux / g1 / norm, -uy / g2 / norm, 1 / norm)
    vol = sp.sqrt(g1 * g2)
    div = (sp.diff(vol * nu[0], X) + sp.diff(vol * nu[1], Y) + sp.diff(vol * nu[2], R)) / vol
    return div.subs(R, u)


@lru_cache(maxsize=None)
def graph_mean_curvature_oracle(kind: str, r0: float, eps: float):
    """Vectorized H(x, y) of the graph r = r0 + eps (sin x + 0.5 cos y) over ``kind`` data."""
    u = sp.nsimplify(r0) + sp.nsimplify(eps) * (sp.sin(X) + sp.cos(Y) / 2)
    if kind == "fuchsian":
        v = lam1 = lam2 = sp.Integer(0)
    elif kind == "smooth":
        v, lam1, lam2 = SMOOTH_V, SMOOTH_LAM1, SMOOTH_LAM2
    else:
        raise ValueError(kind)
    H = _divergence_mean_curvature(v, lam1, lam2, u)
    return sp.lambdify((X, Y), H, "numpy"), sp.lambdify((X, Y), u, "numpy")


def sampled_data(kind: str, n: int) -> ReferenceSurfaceData:
    L = 2 * math.pi
    xs = np.arange(n) * (L / n)
    Xg, Yg = np.meshgrid(xs, xs, indexing="ij")
    if kind == "fuchsian":
        z = np.zeros((n, n))
        return ReferenceSurfaceData(n, n, L, L, z, z.copy(), z.copy())
    fields = [sp.lambdify((X, Y), f, "numpy")(Xg, Yg) * np.ones_like(Xg) for f in (SMOOTH_V, SMOOTH_LAM1, SMOOTH_LAM2)]
    return ReferenceSurfaceData(n, n, L, L, *fields)


def leaf_volume_fuchsian(c: float, lx: float = 2 * math.pi, ly: float = 2 * math.pi) -> float:
    """Volume under the leaf r = c of the Fuchsian chart: lx ly (c/2 + sinh(2c)/4)."""
    return lx * ly * (0.5 * c + 0.25 * math.sinh(2.0 * c))
