"""Acceptance checks, one test per criterion.

Each test carries a ``criterion`` marker; ``conftest.py`` prints a PASS/FAIL
line per criterion in the terminal summary. Run alone with::

    pytest tests/test_acceptance.py -v
"""

import json
import time
import warnings

import numpy as np
import pytest

from raman_lambda import cli
from raman_lambda.analysis import (
    LEAKAGE_TOL,
    coarse_vs_fine_report,
    factorization_error,
    lambda_scaling_study,
    population_timeseries,
    truncation_leakage,
)
from raman_lambda.hamiltonian import (
    build_dressed_blocks,
    build_lab_hamiltonian,
    build_rotating_parts,
    build_rotation_generator,
    default_config,
    lab_hamiltonian_factory,
)
from raman_lambda.hilbert import dagger, op_commutator
from raman_lambda.perturbation import (
    closed_form_first_order,
    closed_form_second_order,
    constant_of_motion_residual,
    decompose,
    minimal_solution_residual,
)
from raman_lambda.propagators import (
    converged_reference_propagator,
    lab_propagator,
    linearized_fine_propagator,
    fine_propagator,
    rotation_frame_op,
)

LAMBDAS = [0.02, 0.04, 0.08]
TAU_PROBE = 50.0


@pytest.mark.criterion(1, "closed-form equivalence on 20 random configs")
def test_closed_form_equivalence(random_configs, detail):
    start = time.perf_counter()
    worst = 0.0
    for c in random_configs:
        d = decompose(c, 2)
        c1, z1 = closed_form_first_order(c)
        c2, z2 = closed_form_second_order(c)
        for got, want in zip((*d.scaled_c, *d.scaled_z), (c1, c2, z1, z2)):
            worst = max(worst, float(np.abs(got - want).max()))
    elapsed = time.perf_counter() - start
    detail(f"max dev {worst:.1e}, {elapsed:.2f} s")
    assert worst <= 1e-10
    assert elapsed < 30.0


@pytest.mark.criterion(2, "structural invariants (sign-consistent Z1 relation)")
def test_structural_invariants(random_configs, detail):
    herm = com = minimal = z1rel = 0.0
    for c in random_configs:
        parts = build_rotating_parts(c)
        d = decompose(c, 2)
        for m in (*d.scaled_c, *d.scaled_z):
            herm = max(herm, float(np.abs(m - dagger(m)).max()))
        for m in d.scaled_c:
            com = max(com, constant_of_motion_residual(m, parts.h0))
        for m in d.scaled_z:
            minimal = max(minimal, minimal_solution_residual(m, d.block))
        # i[lam Z1, H0] = -Hud follows from the explicit Z1; the +Hud form
        # is checked (and fails) in test_perturbation.py
        lhs = 1j * op_commutator(d.scaled_z[0], parts.h0)
        z1rel = max(z1rel, float(np.abs(lhs + parts.hud).max()))
    detail(f"herm {herm:.0e}, [H0,C] {com:.0e}, PZP {minimal:.0e}, i[Z1,H0]+Hud {z1rel:.0e}")
    assert herm <= 1e-12
    assert com <= 1e-12
    assert minimal <= 1e-13
    assert z1rel <= 1e-13


@pytest.mark.criterion(3, "frame identity at 10 times")
def test_frame_identity(cfg, detail):
    target = cfg.delta * build_rotating_parts(cfg).total
    a = build_rotation_generator(cfg)
    worst = 0.0
    for t in np.linspace(0.0, 37.0, 10):
        r = rotation_frame_op(cfg, t)
        got = dagger(r) @ (build_lab_hamiltonian(cfg, t) - a) @ r
        worst = max(worst, np.linalg.norm(got - target, 2) / np.linalg.norm(target, 2))
    detail(f"rel dev {worst:.1e}")
    assert worst <= 1e-10


@pytest.mark.criterion(4, "lab propagator vs RK4 oracle at delta*t = 10")
def test_oracle_consistency(cfg, detail):
    start = time.perf_counter()
    t = 10.0 / cfg.delta
    ref = converged_reference_propagator(lab_hamiltonian_factory(cfg), t, tol=1e-8)
    err = float(np.linalg.norm(lab_propagator(cfg, t) - ref.propagator, 2))
    elapsed = time.perf_counter() - start
    detail(f"err {err:.1e}, rk4 est {ref.error_estimate:.1e} at {ref.steps} steps, {elapsed:.1f} s")
    assert ref.error_estimate <= 1e-8
    assert err <= 1e-6
    assert elapsed < 60.0


@pytest.fixture(scope="module")
def scaling_report():
    start = time.perf_counter()
    report = lambda_scaling_study(default_config(), LAMBDAS, TAU_PROBE)
    return report, time.perf_counter() - start


@pytest.mark.criterion(5, "cubic factorization residual, both orderings")
def test_cubic_residual(scaling_report, detail):
    report, elapsed = scaling_report
    notes = []
    for name in ("factored", "mirror"):
        fit = report.fits[name]
        notes.append(f"{name} p={fit.exponent:.2f} ratios={np.round(fit.ratios, 2).tolist()}")
        assert 2.6 <= fit.exponent <= 3.4
        assert np.all((fit.ratios >= 5.5) & (fit.ratios <= 10.5))
    detail("; ".join(notes) + f"; {elapsed:.2f} s")
    assert elapsed < 60.0


@pytest.mark.criterion(6, "coarse-graining gap of T_e alone is linear")
def test_coarse_graining_gap(scaling_report, detail):
    report, _ = scaling_report
    fit = report.fits["effective_envelope"]
    detail(f"envelope p={fit.exponent:.3f}, pointwise p={report.fits['effective_only'].exponent:.2f}")
    assert 0.7 <= fit.exponent <= 1.3
    # the fine factor is what removes the first-order gap
    assert np.all(report.errors["factored"] < report.errors["effective_envelope"])
    assert report.errors["factored"][0] < 0.1 * report.errors["effective_envelope"][0]


@pytest.mark.criterion(7, "decoupling of the dressed blocks")
def test_decoupling(cfg, dec, detail):
    h12, h3 = build_dressed_blocks(cfg)
    comm = float(np.abs(op_commutator(h12, h3)).max())
    total = float(np.abs(h12 + h3 - cfg.delta * dec.effective_generator).max())
    series = population_timeseries(cfg, dec, (1, [0]), np.linspace(0.0, 200.0, 2001), "effective")
    p3 = float(np.abs(series.channels["P3"]).max())
    detail(f"[H12,H3] {comm:.0e}, P3 {p3:.0e}, sum dev {total:.0e}")
    assert comm <= 1e-12
    assert p3 <= 1e-12
    assert total <= 1e-10


@pytest.mark.criterion(8, "fast level-3 oscillation at the detuning")
def test_fine_signature(cfg, dec, detail):
    series = coarse_vs_fine_report(cfg, dec, (1, [0]), np.linspace(0.0, 200.0, 2001))
    freq = series.metadata["p3_peak_frequency"]
    p3max = series.metadata["p3_max"]
    lam = cfg.lam
    detail(f"peak {freq:.4f} (delta=1), max P3 = {p3max / lam**2:.2f} lam^2")
    assert abs(freq - abs(cfg.delta)) <= 0.1 * abs(cfg.delta)
    assert p3max <= 5 * lam**2


@pytest.mark.criterion(9, "linearized fine propagator is time-uniform")
def test_linearized_uniform(cfg, dec, detail):
    tau = np.linspace(0.0, 200.0, 801)
    gaps = np.array([np.linalg.norm(fine_propagator(dec, s) - linearized_fine_propagator(dec, s), 2) for s in tau])
    lam3 = cfg.lam**3
    k20 = gaps[tau <= 20.0].max() / lam3
    k200 = gaps.max() / lam3
    detail(f"K(20)={k20:.2f}, K(200)={k200:.2f}")
    assert k20 > 0.0
    assert 0.5 < k200 / k20 < 2.0


@pytest.mark.criterion(10, "truncation robustness 8 -> 13")
def test_truncation_robustness(detail):
    worst = 0.0
    for lam in LAMBDAS:
        lo = default_config(8).with_lambda(lam)
        hi = default_config(13).with_lambda(lam)
        a = factorization_error(lo, decompose(lo, 2), [TAU_PROBE])
        b = factorization_error(hi, decompose(hi, 2), [TAU_PROBE])
        for name in ("factored", "mirror"):
            worst = max(worst, abs(a.errors[name][0] - b.errors[name][0]))
    cfg = default_config()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        leak = truncation_leakage(cfg, np.linspace(0.0, 200.0, 2001))
    detail(f"norm change {worst:.1e}, leakage {leak:.1e}")
    assert worst < 1e-7
    assert leak < LEAKAGE_TOL


def _run_cli(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.mark.criterion(11, "CLI determinism and exit codes 0-4")
def test_cli_determinism_and_exit_codes(tmp_path, capsys, detail):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        code, _, _ = _run_cli(["simulate", "default", "--out", str(out)], capsys)
        assert code == 0
    for name in ("timeseries.csv", "error_report.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    codes = {0: 0}
    code, _, err = _run_cli(["scaling", "default", "--lambdas", "0.02,0.04"], capsys)
    codes[1] = code
    assert "need >= 3" in err

    doc = json.loads(cli.bundled_scenario_path().read_text())
    doc["lasers"]["delta"] = 0.0
    (tmp_path / "zero.json").write_text(json.dumps(doc))
    codes[2], _, _ = _run_cli(["simulate", str(tmp_path / "zero.json"), "--out", str(tmp_path / "z")], capsys)

    doc = json.loads(cli.bundled_scenario_path().read_text())
    doc["trap"]["axes"] = [4]
    doc["lasers"]["eta13"], doc["lasers"]["eta23"] = [1.5], [-1.5]
    doc["run"]["tau_points"] = 401
    (tmp_path / "leaky.json").write_text(json.dumps(doc))
    codes[3], _, _ = _run_cli(
        ["simulate", str(tmp_path / "leaky.json"), "--out", str(tmp_path / "l"), "--strict-truncation"], capsys
    )

    codes[4], _, _ = _run_cli(
        ["scaling", "default", "--out", str(tmp_path / "s"), "--lambdas", "0.4,0.8,1.6", "--assert-cubic"],
        capsys,
    )
    detail(f"exit codes {codes}")
    assert codes == {0: 0, 1: 1, 2: 2, 3: 3, 4: 4}
