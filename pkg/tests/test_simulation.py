import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from pppcausal import StatisticSpec, StudyReliabilityError
from pppcausal import simulation as sim
from pppcausal.simulation import (
    DgpConfig,
    MethodSpec,
    StudyResult,
    generate,
    histogram,
    histogram_svg,
    ks_uniform,
    run_study,
    scenario,
    summarize,
)
from pppcausal.propensity import predict_propensity


def test_constants():
    np.testing.assert_array_equal(sim.REGULAR_THETA, [-1, 0.5, -0.25, -0.1])
    np.testing.assert_array_equal(sim.EXTREME_THETA, [1, -1])
    assert sim.EXTREME_MU == pytest.approx(-1 + 0.1 * math.exp(0.5), abs=1e-15)


@pytest.mark.slow
def test_regular_mean_x_by_monte_carlo():
    s = generate(DgpConfig("regular", n=400_000, seed=3))
    m = s.X.mean(axis=0)
    se = s.X.std(axis=0) / math.sqrt(s.n)
    assert np.all(np.abs(m - sim.REGULAR_MEAN_X) < 4 * se)


def test_extreme_mean_x_by_monte_carlo():
    s = generate(DgpConfig("extreme", n=200_000, seed=3))
    se = s.X.std(axis=0) / math.sqrt(s.n)
    assert np.all(np.abs(s.X.mean(axis=0) - sim.EXTREME_MEAN_X) < 4 * se)


@pytest.mark.parametrize("kind", ["regular", "extreme"])
@pytest.mark.parametrize("shift", [0.0, 0.1])
def test_average_effect(kind, shift):
    s = generate(DgpConfig(kind, n=200_000, tau_shift=shift, seed=4))
    d = s.y1 - s.y0
    assert abs(d.mean() - shift) < 4 * d.std() / math.sqrt(s.n)
    assert s.true_tau == shift


def test_propensity_bands():
    reg = generate(DgpConfig("regular", n=50_000, seed=1))
    e = predict_propensity(np.r_[0.0, sim.REGULAR_THETA], reg.X)
    assert np.mean((e >= 0.02) & (e <= 0.98)) > 0.999
    ext = generate(DgpConfig("extreme", n=50_000, seed=1))
    e = predict_propensity(np.r_[sim.EXTREME_INTERCEPT, sim.EXTREME_THETA], ext.X)
    assert np.mean((e < 0.01) | (e > 0.99)) > 0.05


@pytest.mark.parametrize("kind", ["regular", "extreme"])
def test_flip_and_observed_outcome(kind):
    base = generate(DgpConfig(kind, n=500, seed=7))
    flipped = generate(DgpConfig(kind, n=500, seed=7, flip_treatment=True))
    np.testing.assert_array_equal(flipped.z, 1 - base.z)
    np.testing.assert_array_equal(1 - flipped.z, base.z)
    np.testing.assert_array_equal(flipped.X, base.X)
    for s in (base, flipped):
        np.testing.assert_array_equal(s.y, np.where(s.z == 1, s.y1, s.y0))


def test_determinism_and_validation():
    a = generate(DgpConfig("regular", n=100, seed=2))
    b = generate(DgpConfig("regular", n=100, seed=2))
    np.testing.assert_array_equal(a.y, b.y)
    with pytest.raises(ValueError):
        DgpConfig("regular", n=10)
    with pytest.raises(ValueError):
        DgpConfig("weird")


def test_scenarios():
    s = generate(DgpConfig("regular", n=100))
    assert scenario("regular", "i").ps_subset == ("X1", "X2", "X3", "X4")
    assert scenario("regular", "ii").outcome_subset == ("W2", "W3")
    assert scenario("regular", "iii").ps_subset == ("W2", "W3")
    assert scenario("regular", "iii").outcome_subset == ("X1", "X2", "X3", "X4")
    assert scenario("extreme", "iv").ps_subset == ("W1", "W2")
    ps, out = sim.apply_scenario(s, scenario("regular", "ii"))
    assert s.columns(out).shape == (100, 2)
    with pytest.raises(ValueError):
        scenario("regular", "v")


def test_ks_and_histogram():
    p = (np.arange(1000) + 0.5) / 1000
    assert ks_uniform(p) == pytest.approx(0.0005)
    assert ks_uniform(np.zeros(10)) == 1.0
    dens, edges = histogram(np.random.default_rng(0).random(500))
    assert np.sum(dens * np.diff(edges)) == pytest.approx(1.0)
    assert len(dens) == 20


def test_summarize(tmp_path):
    pv = np.column_stack([np.array([0.005, 0.03, 0.2, 0.6]), np.array([0.5, 0.6, 0.7, 0.8])])
    res = StudyResult(["a", "b"], pv, np.arange(4), 1)
    rows = summarize(res, tmp_path)
    assert rows[0]["reject_0.01"] == 0.25 and rows[0]["reject_0.05"] == 0.5 and rows[0]["reject_0.1"] == 0.5
    assert rows[0]["se_0.05"] == pytest.approx(math.sqrt(0.25 / 4))
    assert rows[1]["reject_0.1"] == 0.0 and rows[1]["n_failed"] == 1
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("method,replications,n_failed,reject_0.01")
    for name in ("a", "b"):
        ET.fromstring((tmp_path / f"hist_{name}.svg").read_text())


def test_histogram_svg_caps_bars():
    svg = histogram_svg(np.r_[10.0, np.ones(19)], "t<1>")
    root = ET.fromstring(svg)
    rects = [el for el in root.iter() if el.tag.endswith("rect")]
    assert len(rects) == 20
    assert min(float(r.get("y")) for r in rects) >= 24 - 1e-9
    assert any(el.get("stroke-dasharray") for el in root.iter())


METHODS = [
    MethodSpec("ppp", "ppp_a", StatisticSpec("dr", studentized=False)),
    MethodSpec("normal", "normal", StatisticSpec("dr")),
]


def test_run_study_determinism():
    kw = dict(replications=3, R=20, burn_in=20, seed=5)
    dgp = DgpConfig("regular", n=100)
    a = run_study(dgp, scenario("regular", "i"), METHODS, **kw)
    b = run_study(dgp, scenario("regular", "i"), METHODS, threads=2, **kw)
    np.testing.assert_array_equal(a.pvalues, b.pvalues)
    assert a.pvalues.shape == (3, 2) and a.methods == ["ppp", "normal"]
    assert a.config["scenario"] == "i"
    np.testing.assert_array_equal(a.column("normal"), a.pvalues[:, 1])


def test_run_study_reliability(monkeypatch):
    def broken(*args, **kwargs):
        raise sim.ModelError("boom")

    monkeypatch.setattr(sim, "normal_pvalue", broken)
    with pytest.raises(StudyReliabilityError):
        run_study(DgpConfig("regular", n=100), scenario("regular", "i"), METHODS[1:], replications=3)
    res = run_study(DgpConfig("regular", n=100), scenario("regular", "i"), METHODS[1:], replications=3,
                    max_failed_fraction=1.0)
    assert res.n_failed == 3 and res.pvalues.shape == (0, 1)


@pytest.mark.slow
def test_propensity_fit_recovers_generating_coefficients():
    from pppcausal import fit_logistic

    s = generate(DgpConfig("regular", n=100_000, seed=9))
    theta = fit_logistic(s.X, s.z).theta
    # The generating model has no intercept.
    np.testing.assert_allclose(theta, np.r_[0.0, sim.REGULAR_THETA], atol=0.05)
