"""Shared fixtures.

The expensive pieces (N=120 proxy runs, the finite-difference
reference) are computed once per session; everything downstream reads
from these.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import pytest

import fptree as fp


def build(model, N, grid=None):
    tg = fp.TimeGrid(T=model.T, N=N)
    return fp.build_lattice(model, tg, fp.trinomial(tg.h), grid)


@pytest.fixture(scope="session")
def exp1_model():
    return fp.experiment1_model()


@pytest.fixture(scope="session")
def exp2_model():
    return fp.experiment2_model()


@pytest.fixture(scope="session")
def exp1_trunc():
    return fp.TruncationConfig(R0=2.0, alpha=0.249)


@pytest.fixture(scope="session")
def exp2_trunc():
    return fp.TruncationConfig(R0=2.5, alpha=0.249)


@dataclass
class TimedRun:
    run: object
    seconds: float


def _timed_backward(cfg, lattice, model, repeats=2):
    best = None
    run = None
    for _ in range(repeats):
        t0 = time.monotonic()
        run = fp.run_backward(cfg, lattice, model)
        dt = time.monotonic() - t0
        best = dt if best is None else min(best, dt)
    return TimedRun(run=run, seconds=best)


@pytest.fixture(scope="session")
def proxy120(exp1_model, exp1_trunc):
    """Timed implicit and FP runs at N=120 on the shared lattice."""
    lattice = build(exp1_model, 120)
    impl = _timed_backward(
        fp.SchemeConfig(kind="implicit_euler"), lattice, exp1_model
    )
    pre = _timed_backward(
        fp.SchemeConfig(kind="full_projection_pre", truncation=exp1_trunc),
        lattice, exp1_model,
    )
    return {"lattice": lattice, "implicit": impl, "fp": pre}


@pytest.fixture(scope="session")
def fd_exp1(exp1_model):
    return fp.fd_solve(exp1_model, dx=0.02)
