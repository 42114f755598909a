"""Manufactured Poisson problems and their mesh hierarchies."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import MeshHierarchy, build_cube_bey, build_lshape_coarse, build_structured_square

__all__ = ["Problem", "PROBLEMS", "get_problem", "coarse_mesh", "DOMAINS"]

DOMAINS = ("square", "lshape", "cube")

K = 4.0 * np.pi


@dataclass(frozen=True)
class Problem:
    name: str
    u: Callable
    grad_u: Callable
    f: Callable | None
    g: Callable | None


def _sq_u(x):
    return np.sin(K * x[:, 0]) * np.sin(K * x[:, 1])


def _sq_grad(x):
    sx, sy = np.sin(K * x[:, 0]), np.sin(K * x[:, 1])
    cx, cy = np.cos(K * x[:, 0]), np.cos(K * x[:, 1])
    return K * np.column_stack([cx * sy, sx * cy])


def _sq_f(x):
    return 2 * K**2 * _sq_u(x)


def _cube_u(x):
    return np.sin(K * x[:, 0]) * np.sin(K * x[:, 1]) * np.sin(K * x[:, 2])


def _cube_grad(x):
    s = np.sin(K * x)
    c = np.cos(K * x)
    return K * np.column_stack(
        [c[:, 0] * s[:, 1] * s[:, 2], s[:, 0] * c[:, 1] * s[:, 2], s[:, 0] * s[:, 1] * c[:, 2]]
    )


def _cube_f(x):
    return 3 * K**2 * _cube_u(x)


def _polar(x):
    r = np.hypot(x[:, 0], x[:, 1])
    phi = np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * np.pi)
    return r, phi


def _ls_u(x):
    r, phi = _polar(x)
    return r ** (2 / 3) * np.sin(2 * phi / 3)


def _ls_grad(x):
    r, phi = _polar(x)
    r = np.maximum(r, 1e-300)
    ur = (2 / 3) * r ** (-1 / 3) * np.sin(2 * phi / 3)
    uphi_over_r = (2 / 3) * r ** (-1 / 3) * np.cos(2 * phi / 3)
    c, s = np.cos(phi), np.sin(phi)
    return np.column_stack([ur * c - uphi_over_r * s, ur * s + uphi_over_r * c])


PROBLEMS = {
    "square": Problem("square", _sq_u, _sq_grad, _sq_f, None),
    "lshape": Problem("lshape", _ls_u, _ls_grad, None, _ls_u),
    "cube": Problem("cube", _cube_u, _cube_grad, _cube_f, None),
}


def get_problem(domain: str) -> Problem:
    try:
        return PROBLEMS[domain]
    except KeyError:
        raise ValueError(f"unknown domain {domain!r}; expected one of {DOMAINS}") from None


def coarse_mesh(domain: str):
    """Level-1 mesh of each experiment hierarchy."""
    if domain == "square":
        return build_structured_square(8)
    if domain == "lshape":
        return build_lshape_coarse()
    if domain == "cube":
        return build_cube_bey(2)
    raise ValueError(f"unknown domain {domain!r}")


def hierarchy(domain: str, n_levels: int) -> MeshHierarchy:
    return MeshHierarchy.from_coarse(coarse_mesh(domain), n_levels)
