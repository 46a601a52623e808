"""Vector-field bundles consumed by the time stepper.

A model owns the parameters and answers F(u), dF(u) and the constant
coefficients (C_u, C_ubar).  Three variants:

  ModifiedGLModel  the real thing (truncated Ginzburg-Landau reaction)
  ZeroModel        F == 0; the flow is the exact diagonal propagator
  LinearModel      F(u) = lam * u; closed-form solution per mode

The override models exist so integrators, cone certificates and the graph
construction can be checked against closed forms.
"""

from __future__ import annotations

import numpy as np

from . import truncation
from .spectral import SpectralField, SpectralGrid
from .truncation import FPrimeContext, IntervalContext, ModelParams


class ModifiedGLModel:
    name = "modified_gl"

    def __init__(self, params: ModelParams, dealias: bool = True):
        self.params = params
        self.dealias = dealias

    def F(self, u: SpectralField) -> SpectralField:
        return truncation.nonlinearity_F(u, self.params, self.dealias)

    def F_context(self, u: SpectralField) -> FPrimeContext:
        return FPrimeContext(u, self.params, self.dealias)

    def F_prime_apply(self, u: SpectralField, v: SpectralField) -> SpectralField:
        return self.F_context(u).apply(v)

    def interval_context(self, u1: SpectralField, u2: SpectralField,
                         nodes: int | None = None) -> IntervalContext:
        kw = {} if nodes is None else {"nodes": nodes}
        return IntervalContext(u1, u2, self.params, self.dealias, **kw)

    def coefficients(self, u: SpectralField) -> tuple[complex, complex]:
        return truncation.coefficients_C(u, self.params)

    def interval_coefficients(self, u1: SpectralField, u2: SpectralField,
                              nodes: int = 4) -> tuple[complex, complex]:
        return truncation.coefficients_C_interval(u1, u2, self.params,
                                                 nodes=nodes)

    def interval_coefficients_batch(self, coeffs1: np.ndarray,
                                    coeffs2: np.ndarray, grid: SpectralGrid,
                                    nodes: int = 4):
        return truncation.coefficients_C_interval_batch(
            coeffs1, coeffs2, grid, self.params, nodes=nodes)


class _ConstantContext:
    """dF context for models whose derivative is v -> C_u v (+ 0 vbar)."""

    def __init__(self, grid: SpectralGrid, lam: complex):
        self.grid = grid
        self.C_u = lam
        self.C_ub = 0.0 + 0.0j

    def apply(self, v: SpectralField) -> SpectralField:
        if self.C_u == 0.0:
            return v.grid.zero_field()
        return v.grid.field(self.C_u * v.coeffs, copy=False)


class ZeroModel:
    """F == 0 with the damping term disabled; pure linear flow."""

    name = "zero"

    def __init__(self, params: ModelParams):
        self.params = params
        self.dealias = False

    def F(self, u: SpectralField) -> SpectralField:
        return u.grid.zero_field()

    def F_context(self, u: SpectralField) -> _ConstantContext:
        return _ConstantContext(u.grid, 0.0 + 0.0j)

    def F_prime_apply(self, u, v):
        return v.grid.zero_field()

    def interval_context(self, u1, u2, nodes=None):
        return _ConstantContext(u1.grid, 0.0 + 0.0j)

    def coefficients(self, u):
        return 0.0 + 0.0j, 0.0 + 0.0j

    def interval_coefficients(self, u1, u2, nodes: int = 4):
        return 0.0 + 0.0j, 0.0 + 0.0j

    def interval_coefficients_batch(self, coeffs1, coeffs2, grid, nodes: int = 4):
        B = coeffs1.shape[0]
        return np.zeros(B, dtype=np.complex128), np.zeros(B, dtype=np.complex128)


class LinearModel:
    """F(u) = lam * u; every mode solves a scalar linear ODE exactly."""

    name = "linear"

    def __init__(self, params: ModelParams, lam: complex):
        self.params = params
        self.lam = complex(lam)
        self.dealias = False

    def F(self, u: SpectralField) -> SpectralField:
        return u.grid.field(self.lam * u.coeffs, copy=False)

    def F_context(self, u: SpectralField) -> _ConstantContext:
        return _ConstantContext(u.grid, self.lam)

    def F_prime_apply(self, u, v):
        return v.grid.field(self.lam * v.coeffs, copy=False)

    def interval_context(self, u1, u2, nodes=None):
        return _ConstantContext(u1.grid, self.lam)

    def coefficients(self, u):
        return self.lam, 0.0 + 0.0j

    def interval_coefficients(self, u1, u2, nodes: int = 4):
        return self.lam, 0.0 + 0.0j

    def interval_coefficients_batch(self, coeffs1, coeffs2, grid, nodes: int = 4):
        B = coeffs1.shape[0]
        return (np.full(B, self.lam, dtype=np.complex128),
                np.zeros(B, dtype=np.complex128))

    def exact_state(self, u0: SpectralField, t: float) -> SpectralField:
        """Closed-form solution exp((lam - (1+i omega) A) t) u0."""
        om = self.params.omega
        phase = np.exp((self.lam - (1.0 + 1j * om) * u0.grid.a_eig) * t)
        return u0.grid.field(phase * u0.coeffs, copy=False)
