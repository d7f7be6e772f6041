"""The monotone nonlinearity family beta(r) = |r|^{q-1} r + r and friends.

``PowerLawBeta`` collects everything the solvers need from the constitutive law:
pointwise values, the primitive (potential), the derivative with its infinite-slope
sentinel at r = 0 for q < 1, and the scalar resolvent (I + lam*beta)^{-1} from which
the Yosida approximation beta_lam = (I - (I + lam*beta)^{-1}) / lam is built.

``PiEps`` is the concave perturbation pi_eps(r) = -eps * r whose Lipschitz constant
eps stays below the coercivity modulus 2*c1 = 1 of the potential of beta, which is
what keeps the regularized scheme dissipative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Convergence of the scalar resolvent: |s + lam*beta(s) - r| <= _RESOLVENT_RTOL*(1+|r|).
_RESOLVENT_RTOL = 1.0e-13
_RESOLVENT_MAX_ITERS = 200
#: Slope cap used when a Newton model needs a finite surrogate for beta'(0) = inf.
_SLOPE_CAP = 1.0e12


@dataclass(frozen=True)
class PowerLawBeta:
    """beta(r) = |r|^{q-1} r + r with exponent q > 0.

    The potential is beta_hat(r) = |r|^{q+1}/(q+1) + r^2/2, which dominates
    c1 * r^2 with c1 = 1/2 (the sharp constant, attained as r -> 0). q > 1 is
    porous-medium type (degenerate: beta'(0) = 1 only through the linear part,
    but |r|^{q-1} vanishes), q < 1 is fast-diffusion type (singular:
    beta'(0) = +inf), q = 1 is linear.
    """

    q: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.q) or self.q <= 0.0:
            raise ValueError(f"exponent q must be positive and finite, got {self.q}")

    @property
    def c1(self) -> float:
        """Coercivity modulus: beta_hat(r) >= c1 * r^2 for all r, sharp."""
        return 0.5

    def value(self, r):
        """beta(r) = sign(r)|r|^q + r, elementwise; written to avoid inf*0 at r=0."""
        r = np.asarray(r, dtype=float)
        return np.sign(r) * np.abs(r) ** self.q + r

    def potential(self, r):
        """beta_hat(r) = |r|^{q+1}/(q+1) + r^2/2, the convex primitive with beta_hat(0)=0."""
        r = np.asarray(r, dtype=float)
        return np.abs(r) ** (self.q + 1.0) / (self.q + 1.0) + 0.5 * r * r

    def derivative(self, r):
        """beta'(r) = q|r|^{q-1} + 1; returns +inf at r = 0 when q < 1."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return self.q * np.abs(r) ** (self.q - 1.0) + 1.0

    # -- resolvent and Yosida approximation ---------------------------------------

    def resolvent(self, lam: float, r: float) -> float:
        """The unique s with s + lam * beta(s) = r, for lam > 0.

        Solved by a safeguarded scalar Newton iteration: s is bracketed in
        [min(0, r), max(0, r)] (beta(0) = 0 and beta is strictly increasing, so
        the bracket is guaranteed), Newton steps that leave the bracket fall back
        to bisection, and the slope uses a finite cap in place of beta'(0) = inf.
        The residual of the returned s satisfies
        |s + lam*beta(s) - r| <= 1e-12 * (1 + |r|).
        """
        if not (lam > 0.0 and np.isfinite(lam)):
            raise ValueError(f"resolvent parameter lam must be positive, got {lam}")
        r = float(r)
        if r == 0.0:
            return 0.0
        lo, hi = (0.0, r) if r > 0.0 else (r, 0.0)
        tol = _RESOLVENT_RTOL * (1.0 + abs(r))
        s = r / (1.0 + 2.0 * lam)  # exact for q = 1, a sane start otherwise
        for _ in range(_RESOLVENT_MAX_ITERS):
            g = s + lam * float(self.value(s)) - r
            if abs(g) <= tol:
                return s
            if g > 0.0:
                hi = s
            else:
                lo = s
            slope = 1.0 + lam * min(float(self.derivative(s)), _SLOPE_CAP)
            s_next = s - g / slope
            if not (lo < s_next < hi):
                s_next = 0.5 * (lo + hi)
            if s_next == s:  # bracket has collapsed to FP resolution
                break
            s = s_next
        return s

    def yosida(self, lam: float, r: float) -> float:
        """beta_lam(r) = (r - resolvent(lam, r)) / lam = beta(resolvent(lam, r)).

        Monotone nondecreasing in r, |beta_lam(r)| <= |beta(r)|, and
        beta_lam(r) -> beta(r) monotonically in |.| as lam -> 0.
        """
        return (r - self.resolvent(lam, r)) / lam


@dataclass(frozen=True)
class PiEps:
    """Concave perturbation pi_eps(r) = -eps * r with potential -eps * r^2 / 2."""

    eps: float

    def __post_init__(self) -> None:
        if not (0.0 < self.eps <= 1.0) or not np.isfinite(self.eps):
            raise ValueError(f"perturbation size eps must lie in (0, 1], got {self.eps}")

    @property
    def lipschitz(self) -> float:
        """c2 = eps, the Lipschitz constant of pi_eps."""
        return self.eps

    def value(self, r):
        return -self.eps * np.asarray(r, dtype=float)

    def potential(self, r):
        r = np.asarray(r, dtype=float)
        return -0.5 * self.eps * r * r

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        return np.full_like(r, -self.eps)
