"""Finite-size bounds for gapped ground states and correlated initial states.

A uniformly gapped path of Hamiltonians gives a correlation length
``xi^{-1} = Delta / 2v`` for ``Delta <= v`` and ``W(Delta^2 e / v^2) / 2``
otherwise (``W`` the principal Lambert-W branch).  Ground-state expectation
values then converge as ``C exp(-(L - l) / 2 xi)``.  For initial states with
that decay, the dynamics error splits into a light-cone part and a
Lieb-Robinson tail; both geometric sums are evaluated in closed form.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

XI_SLACK = 0.05


class BoundRegimeError(ValueError):
    pass


@dataclass(frozen=True)
class GapSpec:
    delta: float
    v: float

    def __post_init__(self):
        if not (self.delta > 0 and self.v > 0):
            raise ValueError("gap and velocity must be positive")


@dataclass(frozen=True)
class CorrelatedStateSpec:
    xi: float
    eta: float
    v: float
    C1: float
    C2: float
    L: float

    def __post_init__(self):
        for k in ("xi", "eta", "v", "C1", "C2", "L"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")


def lambert_w(x: float, tol: float = 1e-15, max_iter: int = 100) -> float:
    """Principal branch ``W_0(x)`` for ``x >= -1/e`` by Halley iteration."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("argument must be finite")
    branch = -1.0 / math.e
    if x < branch:
        if x > branch - 1e-15:
            return -1.0
        raise ValueError("lambert_w defined for x >= -1/e")
    if x == 0.0:
        return 0.0
    if x < -0.25:
        p = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    elif x <= math.e:
        w = math.log1p(x) * (1.0 - math.log1p(math.log1p(x)) / (2.0 + math.log1p(x)))
    else:
        l1 = math.log(x)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1
    for _ in range(max_iter):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        if denom == 0.0:
            break
        dw = f / denom
        w -= dw
        if abs(dw) <= tol * (1.0 + abs(w)):
            break
    return w


def xi_from_gap(spec: GapSpec) -> float:
    """Correlation length from a uniform gap ``Delta`` and LR speed ``v``."""
    d, v = spec.delta, spec.v
    if d <= v:
        inv = d / (2.0 * v)
    else:
        inv = 0.5 * lambert_w(d * d * math.e / (v * v))
    return 1.0 / inv


def xi_prime(xi: float, slack: float = XI_SLACK) -> float:
    """Slightly enlarged length absorbing polynomial prefactors (``xi (1 + slack)``)."""
    if slack < 0:
        raise ValueError("slack must be nonnegative")
    return xi * (1.0 + slack)


def ground_state_fse_form(xi: float, C: float, L: float, l: float) -> float:
    """``C exp(-(L - l) / 2 xi)`` for a local observable of size ``l``."""
    if L < l:
        raise ValueError("need L >= l")
    if l < 0 or xi <= 0:
        raise ValueError("need l >= 0 and xi > 0")
    return C * math.exp(-(L - l) / (2.0 * xi))


def correlated_dynamics_bound(spec: CorrelatedStateSpec, t: float) -> float:
    """Closed form of the light-cone and tail sums for ``2 v t < L``.

    ``C1 sum_{l <= 2vt} e^{-(L-l)/2xi}`` is at most
    ``C1 / (1 - e^{-1/2xi}) e^{(vt - L/2)/xi}``.  The tail
    ``C2 sum_{l >= 2vt} (2vt/l)^{eta l/2} e^{-(L-l)/2xi}`` is a geometric sum
    with ratio ``e^{(1/xi - eta)/2}``: for ``eta < 1/xi`` it is dominated by
    ``l = L`` and decays as ``e^{eta(vt - L/2)}``; otherwise by ``l = 2vt``
    and decays as ``e^{(vt - L/2)/xi}``.
    """
    xi, eta, v, L = spec.xi, spec.eta, spec.v, spec.L
    if t < 0:
        raise ValueError("negative time")
    if 2 * v * t >= L:
        raise BoundRegimeError("bound regime exceeded: need 2 v t < L")
    a = 1.0 / xi
    x = v * t - L / 2.0
    first = spec.C1 / (-math.expm1(-a / 2.0)) * math.exp(a * x)
    if eta < a:
        second = spec.C2 / (-math.expm1(-(a - eta) / 2.0)) * math.exp(eta * x)
    elif eta > a:
        warnings.warn("eta > 1/xi: tail decays with the correlation length", stacklevel=2)
        second = spec.C2 / (-math.expm1(-(eta - a) / 2.0)) * math.exp(a * x)
    else:
        warnings.warn("eta == 1/xi: tail sum is not geometric", stacklevel=2)
        n_terms = L - max(1, math.ceil(2 * v * t)) + 1
        second = n_terms * spec.C2 * math.exp(a * x)
    return first + second


def correlated_direct_sum(spec: CorrelatedStateSpec, t: float) -> float:
    """Term-by-term evaluation of the two sums (integer ``L``)."""
    xi, eta, v = spec.xi, spec.eta, spec.v
    L = int(spec.L)
    x = 2 * v * t
    s1 = sum(math.exp(-(L - l) / (2 * xi)) for l in range(0, int(math.floor(x)) + 1))
    s2 = sum((x / l) ** (eta * l / 2) * math.exp(-(L - l) / (2 * xi))
             for l in range(max(1, math.ceil(x)), L + 1))
    return spec.C1 * s1 + spec.C2 * s2
