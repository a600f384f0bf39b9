import numpy as np
import pytest

from whrtperf.constraints import parse_constraint
from whrtperf.graph import NodeTracker, build_graph, build_lifted_graph
from whrtperf.lmi import (
    Infeasible,
    LmiError,
    analyze_lifted,
    analyze_nonlifted,
    build_analysis_problem,
    build_lifted_analysis_problem,
    evaluate_lyapunov,
    format_certificate,
    parse_certificate,
    solve_problem_bisection,
    synthesize,
    verify_certificate,
)
from whrtperf.systems import Plant, Strategy, closed_loop, lift

from oracles import oracle_lti_gain


def scalar_plant(a=0.5):
    return Plant(A=[[a]], B=[[0.0]], Bw=[[1.0]], C=[[1.0]], D=[[0.0]], Dw=[[0.0]])


def example_plant():
    return Plant(A=[[0, 1], [1, 1]], B=[[1], [1]], Bw=[[1], [1]],
                 C=[[1, 1]], D=[[1]], Dw=[[1]])


def single_mode_setup():
    p = scalar_plant()
    K = np.zeros((1, 1))
    g = build_graph(parse_constraint("anyhit(1,1)"))
    cls = closed_loop(p, K, Strategy.zero())
    return p, K, g, cls


def test_single_mode_gain_is_h_infinity_norm():
    # x+ = 0.5 x + w, z = x: peak gain 1/(1 - 0.5) = 2 at frequency zero
    _, _, g, cls = single_mode_setup()
    cert = analyze_nonlifted(cls, g)
    assert cert.gamma == pytest.approx(2.0, rel=1e-4)
    assert cert.gamma == pytest.approx(
        oracle_lti_gain(cls.Acl[1], cls.Bw[1], cls.Ccl[1], cls.Dw[1], n_grid=2001),
        rel=1e-3,
    )


def test_unstable_loop_is_infeasible():
    p = scalar_plant(2.0)
    g = build_graph(parse_constraint("anymiss(1,1)"))  # admits every sequence
    cls = closed_loop(p, np.zeros((1, 1)), Strategy.zero())
    with pytest.raises(Infeasible):
        analyze_nonlifted(cls, g)


def test_analysis_requires_loss_alphabet():
    _, K, _, cls = single_mode_setup()
    lg = build_lifted_graph(parse_constraint("anyhit(2,3)"))
    with pytest.raises(LmiError):
        build_analysis_problem(cls, lg)


def test_lifted_needs_all_labels():
    p = example_plant()
    fam = lift(p, Strategy.zero(), [0])  # label 1 missing
    lg = build_lifted_graph(parse_constraint("anyhit(2,3)"))
    with pytest.raises(LmiError):
        build_lifted_analysis_problem(fam, np.zeros((1, 2)), lg)


def test_verify_certificate_accepts_and_rejects():
    _, _, g, cls = single_mode_setup()
    problem = build_analysis_problem(cls, g)
    cert = analyze_nonlifted(cls, g)
    report = verify_certificate(cert, problem)
    assert report.passed and report.min_eigenvalue > 0

    # shrinking gamma below the true gain breaks the inequality
    cheat = dict(cert.values)
    cheat["gamma"] = 1.0
    assert not verify_certificate(cheat, problem).passed

    # a negated storage matrix is rejected even if blocks clear tolerance
    flipped = dict(cert.values)
    name = next(k for k in flipped if k.startswith("S"))
    flipped[name] = -flipped[name]
    assert not verify_certificate(flipped, problem).passed


def test_bisection_agrees_with_direct_solve():
    _, _, g, cls = single_mode_setup()
    problem = build_analysis_problem(cls, g)
    direct = analyze_nonlifted(cls, g)
    values = solve_problem_bisection(problem)
    assert values["gamma"] == pytest.approx(direct.gamma, rel=1e-3)


def test_problem_describe():
    _, _, g, cls = single_mode_setup()
    problem = build_analysis_problem(cls, g)
    text = problem.describe()
    assert "minimize gamma" in text
    assert "psd edge" in text


def test_synthesis_improves_on_given_controller():
    p = example_plant()
    c = parse_constraint("anyhit(2,3)")
    lg = build_lifted_graph(c)
    fam = lift(p, Strategy.zero(), sorted({l for _, _, l in lg.edges}))
    K0 = np.array([[-0.35, -0.85]])
    base = analyze_lifted(fam, K0, lg)
    res = synthesize(fam, lg)
    assert res.gamma < base.gamma
    # designed gain re-certifies at essentially the same level
    recheck = analyze_lifted(fam, res.K, lg)
    assert recheck.gamma == pytest.approx(res.gamma, rel=1e-3)


def test_switched_synthesis_at_least_as_good():
    p = example_plant()
    lg = build_lifted_graph(parse_constraint("anyhit(2,3)"))
    fam = lift(p, Strategy.zero(), sorted({l for _, _, l in lg.edges}))
    common = synthesize(fam, lg)
    switched = synthesize(fam, lg, switched=True)
    assert switched.switched and set(switched.K) == set(lg.nodes)
    assert switched.gamma <= common.gamma * (1 + 1e-6)


def test_certificate_round_trip():
    p = example_plant()
    lg = build_lifted_graph(parse_constraint("anyhit(2,3)"))
    fam = lift(p, Strategy.zero(), sorted({l for _, _, l in lg.edges}))
    cert = analyze_lifted(fam, np.array([[-0.35, -0.85]]), lg)
    back = parse_certificate(format_certificate(cert))
    assert back.gamma == pytest.approx(cert.gamma)
    for name in lg.nodes:
        np.testing.assert_allclose(back.S[name], cert.S[name])

    res = synthesize(fam, lg, switched=True)
    back = parse_certificate(format_certificate(res))
    assert back.switched
    for name in lg.nodes:
        np.testing.assert_allclose(back.K[name], res.K[name])


def test_parse_certificate_rejects_bad_header():
    with pytest.raises(LmiError):
        parse_certificate("something-else\n{}")


def test_lyapunov_decreases_without_disturbance():
    p = example_plant()
    c = parse_constraint("anyhit(2,3)")
    lg = build_lifted_graph(c)
    labels = sorted({l for _, _, l in lg.edges})
    fam = lift(p, Strategy.zero(), labels)
    K = np.array([[-0.35, -0.85]])
    cert = analyze_lifted(fam, K, lg)
    cl = {a: fam.modes[a].A + fam.modes[a].B @ K for a in labels}

    rng = np.random.default_rng(1)
    x = rng.standard_normal(2)
    tracker = NodeTracker(lg, lg.initial_nodes[0])
    v = evaluate_lyapunov(cert, tracker, x)
    assert v > 0
    for a in (0, 1, 0, 0, 1, 0, 0):
        x = cl[a] @ x
        tracker = tracker.step(a)
        v_next = evaluate_lyapunov(cert, tracker, x)
        assert v_next < v + 1e-12
        v = v_next
