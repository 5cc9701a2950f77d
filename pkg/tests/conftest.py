import math

import numpy as np
import pytest

import selfdual as sd
from selfdual import fields


def sincos_problem(n: int):
    dom = sd.interval_grid(0.0, math.pi, n)
    fld = sd.sample_field(dom, lambda x: math.sin(x) + x * math.cos(x))
    return dom, fld


def tent_problem(n: int):
    dom = sd.interval_grid(0.0, 1.0, n)
    fld = sd.sample_field(dom, lambda x: 2.0 * x if x <= 0.5 else 3.0 - 2.0 * x)
    return dom, fld


def monotone_problem(n: int):
    dom = sd.interval_grid(0.0, 1.0, n)
    fld = sd.sample_field(dom, lambda x: x)
    return dom, fld


def matrix_problem(side: int, a=None):
    bf = fields.builtin_field("matrix", side * side, {"A": a} if a is not None else {})
    dom = sd.build_grid(bf.domain_spec)
    fld = sd.sample_field(dom, bf.rule)
    return dom, fld, bf


def random_problem(rng, n: int, d: int = 1):
    pts = rng.normal(size=(n, d))
    while len(np.unique(pts, axis=0)) != n:
        pts = rng.normal(size=(n, d))
    dom = sd.DiscreteDomain(pts, 1.0 / n, d, 0.0)
    fld = sd.SampledField(rng.normal(size=(n, d)))
    return dom, fld


def random_involution(rng, n: int) -> sd.Involution:
    perm = rng.permutation(n)
    sigma = np.arange(n)
    npairs = int(rng.integers(0, n // 2 + 1))
    for k in range(npairs):
        a, b = perm[2 * k], perm[2 * k + 1]
        sigma[a], sigma[b] = b, a
    return sd.Involution(sigma)


def random_kernel(rng, n: int, scale: float = 1.0) -> sd.AntiSymmetricKernel:
    return sd.AntiSymmetricKernel(scale * np.triu(rng.normal(size=(n, n)), k=1))


@pytest.fixture(scope="session")
def sincos64():
    return sincos_problem(64)


@pytest.fixture(scope="session")
def sincos64_hreg(sincos64):
    dom, fld = sincos64
    kernel = sd.make_kernel(dom, lambda x, y: x * np.sin(y) - y * np.sin(x))
    ball = sd.ball_radius(dom, fld)
    pset = sd.build_dual_points(dom, fld, ball)
    return sd.regularize(kernel, dom, pset), kernel, ball, pset
