"""Weighted sup norms, kernel elements, and orthogonality projections.

The weighted norm of a right-hand side is sup |g(x)| cosh(theta x),
taken over both components (the pair norm is the max of the component
norms).  Weights are handled through log-cosh so that large theta*R
neither overflows nor turns exact zeros into NaNs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GramSingular
from .operator1d import Grid, PairGridFunction
from .profile import ProfileTable, eval_profile

_LOG2 = np.log(2.0)


@dataclass(frozen=True)
class NormContext:
    """Exponential weight rate; theta > 0 in the theorem regime."""

    theta: float

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive")


def log_cosh(y):
    y = np.abs(y)
    return y + np.log1p(np.exp(-2.0 * y)) - _LOG2


def cosh_weights(x, theta):
    """exp(-log cosh(theta x)): decaying weights, safe for any theta*x."""
    return np.exp(-log_cosh(theta * x))


def weighted_sup_norm(u: PairGridFunction, ctx: NormContext) -> float:
    """max over nodes and components of |u| * cosh(theta x)."""
    lw = log_cosh(ctx.theta * u.grid.nodes)
    with np.errstate(divide="ignore"):
        m1 = np.log(np.abs(u.comp1)) + lw
        m2 = np.log(np.abs(u.comp2)) + lw
    top = max(np.max(m1), np.max(m2))
    return float(np.exp(top))


def unweighted_sup_norm(u: PairGridFunction) -> float:
    return float(max(np.max(np.abs(u.comp1)), np.max(np.abs(u.comp2))))


@dataclass(frozen=True)
class KernelBasis:
    """The two kernel elements of the omega=0 operator on the grid:
    z1 = (V1', V2') and z2 = (x V1' + V1, x V2' + V2)."""

    z1: PairGridFunction
    z2: PairGridFunction


def kernel_basis(p: ProfileTable, grid: Grid) -> KernelBasis:
    x = grid.nodes
    v1, dv1, v2, dv2 = eval_profile(p, x)
    z1 = PairGridFunction(grid, dv1, dv2)
    z2 = PairGridFunction(grid, x * dv1 + v1, x * dv2 + v2)
    return KernelBasis(z1=z1, z2=z2)


def pair_inner(u: PairGridFunction, v: PairGridFunction, grid: Grid) -> float:
    """Composite trapezoid of u.v (both components) over [-R, R]."""
    f = u.comp1 * v.comp1 + u.comp2 * v.comp2
    return float(np.trapezoid(f, dx=grid.h))


class Projector:
    """Removes kernel-element content from right-hand sides.

    Subtracts multiples of the carriers z_i / cosh(2 theta x) (the bare
    elements are unbounded, so a theta-decaying carrier keeps the
    projected g inside the weighted class) with coefficients chosen so
    the trapezoid pairings with the z_i vanish.
    """

    def __init__(self, elements, grid: Grid, ctx: NormContext):
        self.grid = grid
        self.elements = list(elements)
        k = len(self.elements)
        if k == 0:
            raise ValueError("need at least one kernel element")
        w = cosh_weights(grid.nodes, 2.0 * ctx.theta)
        self.carriers = [
            PairGridFunction(grid, z.comp1 * w, z.comp2 * w) for z in self.elements
        ]
        gram = np.empty((k, k))
        for i, z in enumerate(self.elements):
            for j, c in enumerate(self.carriers):
                gram[i, j] = pair_inner(z, c, grid)
        if np.linalg.cond(gram) > 1e12:
            raise GramSingular(
                f"carrier Gram condition {np.linalg.cond(gram):.3e}; grid too coarse"
            )
        self.gram = gram

    def coefficients(self, g: PairGridFunction) -> np.ndarray:
        rhs = np.array([pair_inner(z, g, self.grid) for z in self.elements])
        return np.linalg.solve(self.gram, rhs)

    def __call__(self, g: PairGridFunction) -> PairGridFunction:
        c = self.coefficients(g)
        out = g.copy()
        for ci, w in zip(c, self.carriers):
            out.comp1 -= ci * w.comp1
            out.comp2 -= ci * w.comp2
        return out


def project_orthogonal(
    g: PairGridFunction,
    elements,
    grid: Grid,
    ctx: NormContext,
) -> PairGridFunction:
    """Return g minus carrier multiples so that the trapezoid integrals
    of (z_i . g) vanish for every chosen kernel element z_i."""
    return Projector(elements, grid, ctx)(g)
