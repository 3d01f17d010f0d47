"""Constant-curvature surfaces: flat torus, unit sphere and the Bolza surface.

Points are stored as ``(..., 2)`` float arrays of chart coordinates:

* torus  -- ``(u, v)`` in ``[0, 1)^2``
* sphere -- ``(theta, phi)`` with ``theta`` in ``[0, pi]`` and ``phi`` in ``[0, 2 pi)``
* Bolza  -- ``(Re z, Im z)`` of a point ``z`` of the Poincare disk lying in the
  fundamental octagon.

All distance functions broadcast over leading axes.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class DomainError(ValueError):
    """Coordinates or parameters outside the admissible range."""


class SurfaceKind(str, enum.Enum):
    TORUS = "FlatTorus2D"
    SPHERE = "UnitSphere2D"
    BOLZA = "BolzaSurface"

    @classmethod
    def parse(cls, value: "str | SurfaceKind") -> "SurfaceKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for kind in cls:
            if key in (kind.value.lower(), kind.name.lower()):
                return kind
        raise ValueError(f"unknown surface {value!r}; expected one of torus, sphere, bolza")


# --- Bolza constants -------------------------------------------------------

BOLZA_A = 1.0 + math.sqrt(2.0)
BOLZA_B = math.sqrt(BOLZA_A**2 - 1.0)
#: Poincare radius of the octagon vertices.
BOLZA_R = 2.0 ** -0.25
#: Klein radius of the octagon vertices.
BOLZA_RK = 2.0 ** 1.25 / (1.0 + math.sqrt(2.0))
#: Half the systole; every hyperbolic ball of this radius embeds in the surface.
BOLZA_HALF_SYSTOLE = math.acosh(BOLZA_A)

_OCTAGON_TOL = 1e-12


def bolza_generator(k: int) -> np.ndarray:
    phase = np.exp(1j * k * np.pi / 4)
    return np.array([[BOLZA_A, BOLZA_B * phase], [BOLZA_B / phase, BOLZA_A]], dtype=complex)


@dataclass(frozen=True)
class BolzaGroupTable:
    """Identity plus the 48 group elements mapping the octagon to its neighbours.

    ``elements[0]`` is the identity; ``elements[1 + 6*k + l]`` is
    ``g_k g_{k+3} ... g_{k+3l}`` (indices mod 8).
    """

    elements: np.ndarray  # (49, 2, 2) complex

    @classmethod
    def build(cls) -> "BolzaGroupTable":
        gens = [bolza_generator(k) for k in range(8)]
        mats = [np.eye(2, dtype=complex)]
        for k in range(8):
            prod = np.eye(2, dtype=complex)
            for ell in range(6):
                prod = prod @ gens[(k + 3 * ell) % 8]
                mats.append(prod.copy())
        elements = np.array(mats)
        elements.setflags(write=False)
        return cls(elements)

    @property
    def generators(self) -> list[np.ndarray]:
        return [bolza_generator(k) for k in range(8)]

    def __len__(self) -> int:
        return len(self.elements)

    def images(self, z: np.ndarray) -> np.ndarray:
        """All 49 images of ``z``; the result has a new leading axis of length 49."""
        z = np.asarray(z, dtype=complex)
        m = self.elements.reshape((49, 2, 2) + (1,) * z.ndim)
        return (m[:, 0, 0] * z + m[:, 0, 1]) / (m[:, 1, 0] * z + m[:, 1, 1])


@lru_cache(maxsize=None)
def bolza_group() -> BolzaGroupTable:
    return BolzaGroupTable.build()


def mobius(m: np.ndarray, z):
    """Apply ``(a b; c d)`` as ``z -> (a z + b) / (c z + d)``."""
    return (m[0, 0] * z + m[0, 1]) / (m[1, 0] * z + m[1, 1])


def poincare_distance(z1, z2):
    """Hyperbolic distance between points of the Poincare disk."""
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    ratio = np.abs((z1 - z2) / (1.0 - np.conj(z1) * z2))
    return 2.0 * np.arctanh(np.minimum(ratio, 1.0))


def in_octagon(z) -> np.ndarray | bool:
    """Membership test for the fundamental octagon, done in the Klein model.

    Points within ``1e-12`` (Klein radius) of a side count as inside.
    """
    z = np.asarray(z, dtype=complex)
    r = np.abs(z)
    if np.any(r >= 1.0):
        raise DomainError("in_octagon requires |z| < 1")
    r_klein = 2.0 * r / (1.0 + r * r)
    theta = np.mod(np.angle(z), 2 * np.pi)
    sector = np.mod(np.floor(4.0 / np.pi * (theta - np.pi / 8)), 8)
    phi = np.mod(theta - np.pi / 8 * (1 + 2 * sector), 2 * np.pi)
    r_crit = BOLZA_RK * math.cos(np.pi / 8) / np.cos(np.pi / 8 - phi)
    inside = r_klein < r_crit + _OCTAGON_TOL
    return bool(inside) if inside.ndim == 0 else inside


# --- surfaces ---------------------------------------------------------------


@dataclass(frozen=True)
class Surface:
    """A closed constant-curvature surface with its intrinsic distance."""

    kind: SurfaceKind

    dimension = 2

    @classmethod
    def of(cls, kind: "str | SurfaceKind") -> "Surface":
        return cls(SurfaceKind.parse(kind))

    @property
    def curvature(self) -> float:
        return {SurfaceKind.TORUS: 0.0, SurfaceKind.SPHERE: 1.0, SurfaceKind.BOLZA: -1.0}[self.kind]

    @property
    def volume(self) -> float:
        return 1.0 if self.kind is SurfaceKind.TORUS else 4.0 * math.pi

    @property
    def injectivity_radius(self) -> float:
        """Largest radius for which every geodesic ball embeds."""
        return {
            SurfaceKind.TORUS: 0.5,
            SurfaceKind.SPHERE: math.pi,
            SurfaceKind.BOLZA: BOLZA_HALF_SYSTOLE,
        }[self.kind]

    @property
    def name(self) -> str:
        return {SurfaceKind.TORUS: "torus", SurfaceKind.SPHERE: "sphere", SurfaceKind.BOLZA: "bolza"}[
            self.kind
        ]

    def __str__(self) -> str:
        return self.name

    # validation

    def validate(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1:] != (2,):
            raise DomainError(f"points must have a trailing axis of length 2, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DomainError("non-finite coordinates")
        a, b = pts[..., 0], pts[..., 1]
        if self.kind is SurfaceKind.TORUS:
            ok = (a >= 0) & (a < 1) & (b >= 0) & (b < 1)
        elif self.kind is SurfaceKind.SPHERE:
            ok = (a >= 0) & (a <= np.pi) & (b >= 0) & (b < 2 * np.pi)
        else:
            z = a + 1j * b
            ok = np.abs(z) < 1
            if np.all(ok):
                ok = np.asarray(in_octagon(z))
        if not np.all(ok):
            bad = np.argwhere(~np.atleast_1d(ok))[0]
            raise DomainError(f"{self.name}: point {pts.reshape(-1, 2)[bad[0]]} outside chart")
        return pts

    # distances

    def distance(self, p, q, *, validate: bool = True):
        """Geodesic distance; broadcasts over leading axes."""
        if validate:
            p = self.validate(p)
            q = self.validate(q)
        else:
            p = np.asarray(p, dtype=float)
            q = np.asarray(q, dtype=float)
        if self.kind is SurfaceKind.TORUS:
            return torus_distance(p, q)
        if self.kind is SurfaceKind.SPHERE:
            return sphere_distance(p, q)
        return bolza_distance(p[..., 0] + 1j * p[..., 1], q[..., 0] + 1j * q[..., 1])

    def origin(self) -> np.ndarray:
        if self.kind is SurfaceKind.TORUS:
            return np.array([0.5, 0.5])
        if self.kind is SurfaceKind.SPHERE:
            return np.array([np.pi / 2, 0.0])
        return np.array([0.0, 0.0])

    def max_probe_delta(self) -> float:
        return self.injectivity_radius


def torus_distance(p, q):
    d = np.abs(np.asarray(p) - np.asarray(q))
    d = 0.5 - np.abs(0.5 - d)
    return np.sqrt(d[..., 0] ** 2 + d[..., 1] ** 2)


def sphere_to_cartesian(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    theta, phi = p[..., 0], p[..., 1]
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def sphere_distance(p, q):
    # atan2 form of the great-circle distance; stable for tiny and antipodal separations
    a = sphere_to_cartesian(p)
    b = sphere_to_cartesian(q)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return np.arctan2(cross, dot)


def bolza_distance(z1, z2):
    """Minimum Poincare distance from ``z1`` over the 49 images of ``z2``."""
    z1 = np.asarray(z1, dtype=complex)
    images = bolza_group().images(np.asarray(z2, dtype=complex))
    return poincare_distance(z1, images).min(axis=0)


def distance(surface: Surface, p, q):
    return surface.distance(p, q)


def probe_pair(surface: Surface, delta: float, *, origin=None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(x, y)`` at geodesic distance ``delta``.

    ``x`` is the canonical origin of the chart unless ``origin`` is given;
    ``y`` sits along the canonical direction (``+u`` on the torus, along the
    equator on the sphere, angle 0 on the Bolza surface).
    """
    if not (0.0 < delta < surface.max_probe_delta()):
        raise DomainError(
            f"delta={delta} outside (0, {surface.max_probe_delta():.6g}) for the {surface.name}"
        )
    x = surface.origin() if origin is None else surface.validate(origin).copy()
    if surface.kind is SurfaceKind.TORUS:
        y = np.array([(x[0] + delta) % 1.0, x[1]])
    elif surface.kind is SurfaceKind.SPHERE:
        if origin is not None and not math.isclose(x[0], np.pi / 2):
            raise DomainError("sphere probe origin must lie on the equator")
        y = np.array([x[0], (x[1] + delta) % (2 * np.pi)])
    else:
        if origin is not None:
            raise DomainError("Bolza probe placement supports only the canonical origin")
        y = np.array([math.tanh(delta / 2), 0.0])
    return x, y
