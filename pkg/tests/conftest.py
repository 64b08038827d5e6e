import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from splitflow import (BoxIndicator, CompositeProblem, L1, LogisticRidge,
                       Quadratic)
from oracles import random_spd_matrix


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_quadratic_l1(n=20, m=1.0, L=10.0, lam=0.5, seed=0):
    """Strongly convex quadratic plus l1 with a planted [m, L] spectrum."""
    gen = np.random.default_rng(seed)
    Q = random_spd_matrix(n, m, L, gen)
    q = gen.standard_normal(n)
    return CompositeProblem(Quadratic(Q, q, m=m, L=L), L1(lam))


def make_quadratic_box(n=12, m=1.0, L=10.0, seed=0):
    gen = np.random.default_rng(seed)
    Q = random_spd_matrix(n, m, L, gen)
    q = 3.0 * gen.standard_normal(n)
    return CompositeProblem(Quadratic(Q, q, m=m, L=L),
                            BoxIndicator(-np.ones(n), np.ones(n)))


def make_logistic_l1(s=30, n=15, ridge=0.5, lam=0.3, seed=0):
    gen = np.random.default_rng(seed)
    A = gen.standard_normal((s, n))
    y = (gen.uniform(size=s) < 0.5).astype(float)
    return CompositeProblem(LogisticRidge(A, y, ridge), L1(lam))
