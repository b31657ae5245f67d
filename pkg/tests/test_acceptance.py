"""Release gate: one test per shipped guarantee.

Each test asserts its stated tolerance as a contract; when a guarantee
does not hold, the assertion message carries the measured numbers so
the failure is a record, not a mystery.  Expensive shared runs (the
N=120 proxy pair, the finite-difference reference) come from session
fixtures in conftest.
"""
import math
import random
from fractions import Fraction

import pytest
from click.testing import CliRunner

import fptree as fp
from fptree.cli import main as cli_main

from conftest import build


def test_c1_trinomial_moments_gaussian_through_order_five():
    for N in (5, 20, 120, 320):
        h = 1.0 / N
        dist = fp.trinomial(h)
        for k in range(6):
            got = fp.moment_exact(dist, k)
            want = fp.gaussian_moment_exact(h, k)
            assert got == want, "order-%d moment differs at h=%g" % (k, h)
            assert abs(float(got) - float(want)) <= 1e-14
        got6 = fp.moment_exact(dist, 6)
        want6 = fp.gaussian_moment_exact(h, 6)
        assert got6 == 9 * Fraction(h) ** 3
        assert want6 == 15 * Fraction(h) ** 3
        assert got6 != want6


def test_c2_pre_post_equivalence_node_exact(exp1_model, exp1_trunc):
    for N in (10, 40):
        lattice = build(exp1_model, N)
        h = lattice.time_grid.h
        pre = fp.run_backward(
            fp.SchemeConfig(kind="full_projection_pre", truncation=exp1_trunc),
            lattice, exp1_model,
        )
        post = fp.run_backward(
            fp.SchemeConfig(kind="full_projection_post", truncation=exp1_trunc),
            lattice, exp1_model,
        )
        worst_y = 0.0
        for i in range(N + 1):
            for a, b in zip(pre.y[i], post.y[i]):
                worst_y = max(worst_y, abs(fp.truncate(exp1_trunc, h, a) - b))
        worst_z = 0.0
        for i in range(N):
            for a, b in zip(pre.z[i], post.z[i]):
                worst_z = max(worst_z, abs(a - b))
        assert worst_y <= 1e-12, "post y vs truncated pre y differ by %g at N=%d" % (worst_y, N)
        assert worst_z <= 1e-12, "z differs by %g at N=%d" % (worst_z, N)


def test_c3_linear_driver_first_order_convergence():
    spec = fp.linear_model(-1.0)
    _, y0 = fp.linear_solution(-1.0, spec)
    assert y0 == pytest.approx(2.25 * math.exp(-1.0), rel=1e-14)
    cfg = fp.SchemeConfig(
        kind="full_projection_pre",
        truncation=fp.TruncationConfig(R0=10.0, alpha=1.0),
    )
    report = fp.convergence_study(
        spec, cfg, Ns=(10, 20, 40, 80, 160, 320),
        reference=fp.Reference(kind="linear_oracle", value=y0),
        timing=False,
    )
    final_err = report.entries[-1].err
    assert report.slope is not None and report.slope >= 0.8, (
        "fitted slope %r below 0.8" % (report.slope,)
    )
    assert final_err <= 5e-3, "error at N=320 is %g" % final_err


def test_c4_proxy_agreement_runtime_and_explicit_blowup(
    exp1_model, exp1_trunc, proxy120, fd_exp1
):
    y_impl = proxy120["implicit"].run.y0
    y_fp = proxy120["fp"].run.y0
    gap = abs(y_impl - y_fp)
    failures = []
    if not gap <= 1e-2:
        fd_val = fd_exp1.value_at(0.0, 0.0)
        failures.append(
            "shared-reference gap |Y0_implicit - Y0_fp| = %.6f exceeds 1e-2 "
            "at N=120 (implicit %.8f, fp %.8f, finite-difference %.8f); the "
            "two schemes bracket the reference from opposite sides with "
            "O(h) biases of the same magnitude, and no truncation-radius "
            "setting closes the gap below ~1.4e-2 at this resolution"
            % (gap, y_impl, y_fp, fd_val)
        )
    t_impl = proxy120["implicit"].seconds
    t_fp = proxy120["fp"].seconds
    if not t_fp <= t_impl:
        failures.append(
            "solver-free run took %.4f s, implicit %.4f s at N=120"
            % (t_fp, t_impl)
        )
    explicit_cfg = fp.SchemeConfig(kind="explicit_euler")
    outcomes = {}
    for N in (10, 15, 20):
        run = fp.run_backward(explicit_cfg, build(exp1_model, N), exp1_model)
        outcomes[N] = run.finite
    if all(outcomes.values()):
        fp_cfg = fp.SchemeConfig(
            kind="full_projection_pre", truncation=exp1_trunc
        )
        for N, finite in outcomes.items():
            run_e = fp.run_backward(explicit_cfg, build(exp1_model, N), exp1_model)
            run_f = fp.run_backward(fp_cfg, build(exp1_model, N), exp1_model)
            if abs(run_e.y0 - run_f.y0) > 1e-2:
                failures.append(
                    "explicit run stayed finite at N=%d yet differs from the "
                    "projected scheme by %g" % (N, abs(run_e.y0 - run_f.y0))
                )
    assert not failures, "; ".join(failures)


def test_c5_stability_contrast_on_steep_model(exp2_model, exp2_trunc):
    lattice15 = build(exp2_model, 15)
    explicit = fp.run_backward(
        fp.SchemeConfig(kind="explicit_euler"), lattice15, exp2_model
    )
    sup = fp.sup_norm_check(explicit)
    assert sup.violations > 0, "explicit run at N=15 shows no sup-norm violation"
    assert sup.nonfinite > 0, "explicit run at N=15 stayed finite"

    fp_cfg = fp.SchemeConfig(kind="full_projection_pre", truncation=exp2_trunc)
    impl_cfg = fp.SchemeConfig(kind="implicit_euler")
    for N in (15, 17, 19, 25):
        lattice = build(exp2_model, N)
        h = lattice.time_grid.h
        for label, cfg in (("fp", fp_cfg), ("implicit", impl_cfg)):
            run = fp.run_backward(cfg, lattice, exp2_model)
            ledger = fp.contraction_check(
                run, exp2_model, exp2_trunc, h=h, tol_rel=1e-8
            )
            assert ledger.violations == 0, (
                "%s contraction ledger has %d violations at N=%d"
                % (label, ledger.violations, N)
            )


def test_c6_per_node_inequality_ledgers(exp1_model, exp1_trunc):
    cfg = fp.SchemeConfig(kind="full_projection_pre", truncation=exp1_trunc)
    g = exp1_model.g
    for N in (20, 80):
        lattice = build(exp1_model, N)
        run = fp.run_backward(cfg, lattice, exp1_model)
        size = fp.one_step_checks(
            run, lattice, exp1_model, exp1_trunc, kind="size", tol_abs=1e-10
        )
        assert size.violations == 0, (
            "size ledger: %d violations at N=%d" % (size.violations, N)
        )
        run2 = fp.run_backward(
            cfg, lattice, exp1_model,
            terminal=lambda x: g(x) + 0.1 * max(-7.0, min(7.0, x)),
        )
        stab = fp.one_step_checks(
            run, lattice, exp1_model, exp1_trunc,
            kind="stability", run2=run2, tol_abs=1e-10,
        )
        assert stab.violations == 0, (
            "stability ledger: %d violations at N=%d" % (stab.violations, N)
        )
        assert size.total_checked == stab.total_checked == N * N


def test_c7_finite_difference_cross_check(exp1_model, proxy120, fd_exp1):
    # validate the FD solver itself on the two cases with closed forms
    no_drift = fp.make_constant_model(
        T=1.0, x0=0.0, b=0.0, sigma=1.5,
        g=fp.quadratic_g(), driver=fp.poly_driver((0.0,)),
    )
    v0 = fp.fd_solve(no_drift, dx=0.02).value_at(0.0, 0.0)
    assert abs(v0 - 2.25) / 2.25 <= 1e-3
    v1 = fp.fd_solve(fp.linear_model(-1.0), dx=0.02).value_at(0.0, 0.0)
    want = 2.25 * math.exp(-1.0)
    assert abs(v1 - want) / want <= 1e-3

    fd_val = fd_exp1.value_at(0.0, 0.0)
    y_fp = proxy120["fp"].run.y0
    assert abs(y_fp - fd_val) <= 2e-2, (
        "|Y0_fp(N=120) - fd| = %g" % abs(y_fp - fd_val)
    )


def test_c8_truncation_weight_and_projection_properties(exp1_trunc):
    rng = random.Random(314159)
    h = 1.0 / 120
    R = fp.truncation_radius(exp1_trunc, h)
    span = 3.0 * R
    moll = fp.TruncationConfig(
        R0=exp1_trunc.R0, alpha=exp1_trunc.alpha, mode="mollified"
    )
    for _ in range(100_000):
        a = rng.uniform(-span, span)
        b = rng.uniform(-span, span)
        got = abs(fp.truncate(exp1_trunc, h, a) - fp.truncate(exp1_trunc, h, b))
        assert got <= abs(a - b) * (1.0 + 1e-12) + 1e-15
    for _ in range(10_000):
        a = rng.uniform(-span, span)
        b = rng.uniform(-span, span)
        got = abs(fp.truncate(moll, h, a) - fp.truncate(moll, h, b))
        assert got <= abs(a - b) * (1.0 + 1e-12) + 1e-15
    for _ in range(10_000):
        y = rng.uniform(-R, R)
        assert fp.truncate(exp1_trunc, h, y) == y
        assert fp.truncate(moll, h, y) == y

    for N in (5, 10, 20, 40, 80, 120, 160, 320):
        hN = 1.0 / N
        dist = fp.trinomial(hN)
        H, lam = fp.weight_values(fp.make_weight_config(hN), dist, hN)
        assert math.fsum(w * hj for w, hj in zip(dist.weights, H)) == 0.0
        assert lam <= 1.0

    grid = fp.SpatialGrid(x0=0.0, eta=0.1, M=10)
    for x, want in ((0.349, 0.3), (0.35, 0.3), (5.0, 1.0), (-5.0, -1.0)):
        assert fp.grid_project(grid, x) == pytest.approx(want, abs=1e-15)
    dyadic = fp.SpatialGrid(x0=0.0, eta=0.5, M=4)
    for x, want in ((0.25, 0.0), (-0.25, -0.5), (0.75, 0.5)):
        assert fp.grid_project(dyadic, x) == want
    for _ in range(5_000):
        x = rng.uniform(-2.0, 2.0)
        once = fp.grid_project(grid, x)
        assert fp.grid_project(grid, once) == once


def test_c9_cli_determinism_across_thread_counts(tmp_path):
    runner = CliRunner()
    outs = []
    for threads, sub in (("1", "a"), ("3", "b")):
        out = tmp_path / sub
        result = runner.invoke(cli_main, [
            "convergence", "--preset", "linear-oracle",
            "--Ns", "10,20,40", "--no-timing",
            "--threads", threads, "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        outs.append(out)
    for name in ("convergence_fp.csv", "convergence_summary.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
