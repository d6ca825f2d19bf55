"""Connection kernels, derived constants and the analytic connection bound.

Offsets are measured in the l1 norm throughout. A kernel is either the closed
form ``eta(beta, |k|_1, s)`` or a finite table of overrides on top of that
closed form; the closed form always acts as the tail rule, so every kernel is
defined on all of Z^d.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DomainError, ValidationError

ETA = "eta"
TABLE = "table"


def eta(beta, k, s):
    """``1 - exp(-beta * k**-s)``, the canonical long-range kernel.

    Accepts scalars or arrays. ``k`` must be strictly positive.
    """
    k_arr = np.asarray(k, dtype=float)
    if np.any(k_arr <= 0):
        raise DomainError("eta is defined for k > 0 only")
    if np.any(np.asarray(beta) < 0):
        raise DomainError("eta needs beta >= 0")
    out = -np.expm1(-np.asarray(beta, dtype=float) * k_arr ** (-float(s)))
    if np.ndim(out) == 0:
        return float(out)
    return out


def _as_offset(key, d):
    if isinstance(key, (int, np.integer)):
        key = (int(key),)
    key = tuple(int(x) for x in key)
    if len(key) != d:
        raise ValidationError(f"offset {key} does not have dimension {d}")
    if not any(key):
        raise ValidationError("the zero offset carries no probability")
    return key


@dataclass(frozen=True)
class Kernel:
    """Symmetric connection probabilities ``P_k`` on Z^d.

    Parameters
    ----------
    d : int
        Lattice dimension.
    s : float
        Decay exponent, must satisfy ``s > d``.
    beta : float
        Amplitude of the eta tail.
    table : mapping, optional
        Offset -> probability overrides. An offset's mirror image is implied;
        giving both with different values is rejected. In d=1 offsets may be
        plain ints.
    """

    d: int
    s: float
    beta: float
    table: tuple = field(default=())

    def __init__(self, d: int, s: float, beta: float, table: Mapping | None = None):
        object.__setattr__(self, "d", int(d))
        object.__setattr__(self, "s", float(s))
        object.__setattr__(self, "beta", float(beta))
        if self.d < 1:
            raise ValidationError("dimension must be a positive integer")
        if not self.s > self.d:
            raise ValidationError(f"decay exponent s={self.s} must exceed d={self.d}")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValidationError("beta must be finite and >= 0")
        entries = {}
        for key, p in dict(table or {}).items():
            off = _as_offset(key, self.d)
            p = float(p)
            if not 0.0 <= p < 1.0:
                raise ValidationError(f"table entry P{off}={p} outside [0, 1)")
            mirror = tuple(-x for x in off)
            for o in (off, mirror):
                if o in entries and entries[o] != p:
                    raise ValidationError(f"asymmetric table: P{off} != P{mirror}")
                entries[o] = p
        object.__setattr__(self, "table", tuple(sorted(entries.items())))

    @property
    def form(self) -> str:
        return TABLE if self.table else ETA

    @property
    def summable(self) -> bool:
        # The eta tail decays like |k|^-s with s > d; finite tables cannot spoil that.
        return self.s > self.d

    @property
    def table_radius(self) -> int:
        return max((sum(abs(x) for x in k) for k, _ in self.table), default=0)

    def table_dict(self) -> dict:
        return dict(self.table)

    def prob(self, offsets) -> np.ndarray:
        """Vectorized ``P_k`` for an ``(m, d)`` array of nonzero offsets."""
        off = np.atleast_2d(np.asarray(offsets, dtype=np.int64))
        if off.shape[1] != self.d:
            off = off.reshape(-1, self.d)
        norm = np.abs(off).sum(axis=1)
        if np.any(norm == 0):
            raise DomainError("P_0 is undefined")
        p = -np.expm1(-self.beta * norm.astype(float) ** (-self.s))
        if self.table:
            lookup = self.table_dict()
            near = np.nonzero(norm <= self.table_radius)[0]
            for i in near:
                key = tuple(int(x) for x in off[i])
                if key in lookup:
                    p[i] = lookup[key]
        return p

    def prob_at(self, offset) -> float:
        return float(self.prob(np.asarray([_as_offset(offset, self.d)]))[0])

    def to_dict(self) -> dict:
        out = {"form": self.form, "d": self.d, "s": self.s, "beta": self.beta}
        if self.table:
            out["table"] = [[list(k), p] for k, p in self.table]
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "Kernel":
        table = {tuple(k): p for k, p in data.get("table", [])}
        form = data.get("form", TABLE if table else ETA)
        if form == TABLE and not table:
            raise ValidationError("table kernel given without entries")
        if form not in (ETA, TABLE):
            raise ValidationError(f"unknown kernel form {form!r}")
        return cls(data["d"], data["s"], data["beta"], table)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class DerivedConstants:
    """``k0``, ``gamma`` and ``zeta`` for a kernel.

    ``gamma`` doubles as the lambda of the cube renormalization argument; the
    two constants are the same infimum.
    """

    d: int
    s: float
    k0: int
    gamma: float
    zeta: float
    diagnostic: str = ""

    @property
    def liminf_ok(self) -> bool:
        return self.gamma > 0


def zeta_constant(d: int, s: float) -> float:
    return 2.0 ** (-s - 1.0) * float(d) ** (-s)


def derive_constants(kernel: Kernel) -> DerivedConstants:
    """Compute ``(k0, gamma, zeta)``.

    For tabulated kernels gamma is the minimum of the finite-support ratio
    ``-log(1 - P_k) / |k|_1^-s`` over table entries beyond ``k0`` and the tail
    value ``beta``; this is the exact infimum because the ratio is identically
    ``beta`` on the eta part.
    """
    d, s = kernel.d, kernel.s
    zeta = zeta_constant(d, s)
    if kernel.beta == 0:
        return DerivedConstants(d, s, 0, 0.0, zeta,
                                "liminf condition fails: tail amplitude beta is 0")
    k0 = 0
    for off, p in kernel.table:
        if p == 0.0:
            k0 = max(k0, sum(abs(x) for x in off))
    gamma = kernel.beta
    for off, p in kernel.table:
        r = sum(abs(x) for x in off)
        if r > k0:
            gamma = min(gamma, -math.log1p(-p) / r ** (-s))
    diag = "" if gamma > 0 else "liminf condition fails: gamma = 0"
    return DerivedConstants(d, s, k0, gamma, zeta, diag)


def connect_bound(consts: DerivedConstants, rho: float, l: int, s: float | None = None) -> float:
    """Lower bound ``eta(zeta * gamma * rho**2, l)`` on cluster attachment.

    Two clusters of size ``rho * N**(s/2)`` sitting in N-cubes that are ``l``
    cubes apart share an open bond with at least this probability.
    """
    s = consts.s if s is None else float(s)
    threshold = 2.0 * (2.0 * consts.k0) ** consts.d
    if not rho > threshold:
        raise ValidationError(f"rho={rho} must exceed 2(2k0)^d = {threshold}")
    if int(l) < 1:
        raise ValidationError("cube distance l must be >= 1")
    amp = consts.zeta * consts.gamma * rho**2
    return eta(amp, int(l), s)
