"""Sphere-approximated robots with analytic forward kinematics and Jacobians."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class Sphere:
    link: int
    offset: Tuple[float, float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"sphere radius must be positive, got {self.radius}")


class RobotModel:
    """Base class: subclasses provide ``dof``, ``spheres`` and ``fk_batch``."""

    dof: int
    spheres: Tuple[Sphere, ...]

    @property
    def radii(self) -> np.ndarray:
        return np.array([s.radius for s in self.spheres])

    @property
    def n_spheres(self) -> int:
        return len(self.spheres)

    def fk_batch(self, thetas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Sphere centers ``(M, S, 3)`` and position Jacobians ``(M, S, 3, dof)``."""
        raise NotImplementedError

    def fk(self, theta) -> Tuple[np.ndarray, np.ndarray]:
        centers, jac = self.fk_batch(np.asarray(theta, dtype=float)[None, :])
        return centers[0], jac[0]


class PointRobot(RobotModel):
    """Translating rigid cluster of spheres.

    With ``dim=2`` the configuration is (x, y) and the robot moves in the
    horizontal plane at height ``z``; with ``dim=3`` it is (x, y, z).
    """

    def __init__(self, dim: int = 2, radius: float = 0.1, z: float = 0.0, offsets: Sequence = ((0.0, 0.0, 0.0),),
                 radii: Sequence[float] = None):
        if dim not in (2, 3):
            raise ValueError("point robot dimension must be 2 or 3")
        self.dof = dim
        self.z = float(z)
        radii = [radius] * len(offsets) if radii is None else list(radii)
        self.spheres = tuple(Sphere(0, tuple(map(float, o)), r) for o, r in zip(offsets, radii))
        self._offsets = np.array([s.offset for s in self.spheres])

    def fk_batch(self, thetas):
        thetas = np.asarray(thetas, dtype=float)
        m = len(thetas)
        base = np.zeros((m, 3))
        base[:, : self.dof] = thetas
        if self.dof == 2:
            base[:, 2] = self.z
        centers = base[:, None, :] + self._offsets[None, :, :]
        jac = np.zeros((m, self.n_spheres, 3, self.dof))
        for a in range(self.dof):
            jac[:, :, a, a] = 1.0
        return centers, jac


class PlanarArm(RobotModel):
    """Serial arm of revolute joints about world z, moving in the plane at the base height.

    Sphere offsets are expressed in the frame of their link (x along the link).
    """

    def __init__(self, base, link_lengths: Sequence[float], spheres: Sequence[Sphere]):
        self.base = np.asarray(base, dtype=float)
        self.link_lengths = np.asarray(link_lengths, dtype=float)
        self.dof = len(self.link_lengths)
        self.spheres = tuple(spheres)
        if any(not 0 <= s.link < self.dof for s in self.spheres):
            raise ValueError("sphere attached to a non-existent link")
        self._links = np.array([s.link for s in self.spheres])
        self._offsets = np.array([s.offset for s in self.spheres])

    @classmethod
    def desk_arm(cls, base, link_lengths=(0.45, 0.4, 0.3), radius: float = 0.06, per_link: int = 3):
        spheres = []
        for link, length in enumerate(link_lengths):
            for f in np.linspace(1.0 / per_link, 1.0, per_link):
                spheres.append(Sphere(link, (float(f * length), 0.0, 0.0), radius))
        return cls(base, link_lengths, spheres)

    def joint_positions(self, thetas):
        """Positions of joint axes 0..dof (the last one is the tool tip), shape (M, dof+1, 3)."""
        thetas = np.asarray(thetas, dtype=float)
        phi = np.cumsum(thetas, axis=1)
        steps = np.zeros((len(thetas), self.dof, 3))
        steps[:, :, 0] = self.link_lengths * np.cos(phi)
        steps[:, :, 1] = self.link_lengths * np.sin(phi)
        joints = np.concatenate([np.zeros((len(thetas), 1, 3)), np.cumsum(steps, axis=1)], axis=1)
        return joints + self.base, phi

    def fk_batch(self, thetas):
        thetas = np.asarray(thetas, dtype=float)
        joints, phi = self.joint_positions(thetas)
        c = np.cos(phi[:, self._links])
        s = np.sin(phi[:, self._links])
        ox, oy, oz = self._offsets.T
        centers = joints[:, self._links, :].copy()
        centers[..., 0] += c * ox - s * oy
        centers[..., 1] += s * ox + c * oy
        centers[..., 2] += oz

        m = len(thetas)
        jac = np.zeros((m, self.n_spheres, 3, self.dof))
        for j in range(self.dof):
            rel = centers - joints[:, j, None, :]
            moves = (self._links >= j)[None, :]
            jac[:, :, 0, j] = np.where(moves, -rel[..., 1], 0.0)
            jac[:, :, 1, j] = np.where(moves, rel[..., 0], 0.0)
        return centers, jac
