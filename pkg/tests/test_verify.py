import math

import numpy as np
import pytest

from switchsde.model import ModelSpec
from switchsde.registry import registry_get
from switchsde.segment import Segment
from switchsde.sim import SimConfig
from switchsde.verify import (
    MCEstimate,
    ProductFunctional,
    apply_generator,
    coupling_decay,
    dynkin_residual,
    estimate_hitting_time,
    estimate_mode_descent,
    occupation_fractions,
    occupation_stability,
)

QUAD = ProductFunctional(
    f1=lambda x, i: (np.asarray(x, dtype=float) ** 2).sum(axis=-1),
    grad_f1=lambda x, i: 2.0 * np.asarray(x, dtype=float),
    hess_f1=lambda x, i: 2.0 * np.eye(np.asarray(x).shape[-1]),
)


def scalar_spec(
    drift,
    diffusion=None,
    rates=None,
    bound=1.0,
    delay=1.0,
    batch=False,
):
    return ModelSpec(
        dim=1,
        brownian_dim=1,
        drift=drift,
        diffusion=diffusion or (lambda x, i: np.zeros((1, 1))),
        rates_row=rates or (lambda seg, i: {}),
        rate_bound=bound,
        delay=delay,
        zero_diffusion=diffusion is None,
        supports_batch=batch,
        rates_depend_on_path=not batch,
    )


def mode_cost_functional(costs):
    table = dict(costs)

    def level(i):
        return float(table.get(i, 0.0))

    return ProductFunctional(
        f1=lambda x, i: np.full(np.asarray(x).shape[:-1], level(i)),
        grad_f1=lambda x, i: np.zeros_like(np.asarray(x, dtype=float)),
        hess_f1=lambda x, i: np.zeros((np.asarray(x).shape[-1],) * 2),
    )


def test_value_terminal_only():
    seg = Segment.make_constant([1.5], 1.0, 0.25)
    assert QUAD.value(seg, 1) == pytest.approx(2.25)


def test_value_with_time_kernel_is_trapezoid():
    fn = ProductFunctional(
        f1=lambda x, i: 0.0 * np.asarray(x)[..., 0],
        grad_f1=lambda x, i: np.zeros_like(np.asarray(x, dtype=float)),
        hess_f1=lambda x, i: np.zeros((1, 1)),
        f2=lambda x, i: np.asarray(x)[..., 0],
        g=lambda s, i: s + 1.0,
        dg=lambda s, i: 1.0,
    )
    samples = np.linspace(-1.0, 0.0, 5)[:, None]  # phi(s) = s
    seg = Segment(samples, delay=1.0, dt=0.25)
    # trapezoid of (s + 1) * s on the 5-point grid
    s = np.linspace(-1.0, 0.0, 5)
    w = np.array([0.5, 1, 1, 1, 0.5]) * 0.25
    assert fn.value(seg, 1) == pytest.approx(float(w @ ((s + 1) * s)))
    with pytest.raises(ValueError):
        ProductFunctional(
            f1=lambda x, i: 0.0,
            grad_f1=lambda x, i: 0.0,
            hess_f1=lambda x, i: 0.0,
            f2=lambda x, i: 0.0,
        )


def test_generator_pure_diffusion():
    model = scalar_spec(lambda x, i: np.zeros(1), diffusion=lambda x, i: np.array([[1.0]]))
    seg = Segment.make_constant([0.7], 1.0, 0.25)
    assert apply_generator(QUAD, model, seg, 1) == pytest.approx(1.0)


def test_generator_linear_drift():
    model = scalar_spec(lambda x, i: -np.asarray(x, dtype=float))
    seg = Segment.make_constant([1.5], 1.0, 0.25)
    # zero diffusion: only the transport term -2 x^2 remains
    assert apply_generator(QUAD, model, seg, 1) == pytest.approx(-4.5)


def test_generator_switching_part():
    fn = mode_cost_functional({1: 0.0, 2: 5.0})
    model = scalar_spec(lambda x, i: np.zeros(1), rates=lambda seg, i: {2: 0.3} if i == 1 else {1: 1.0}, bound=1.0)
    seg = Segment.make_constant([0.0], 1.0, 0.25)
    assert apply_generator(fn, model, seg, 1) == pytest.approx(0.3 * 5.0)
    assert apply_generator(fn, model, seg, 2) == pytest.approx(-5.0)


def test_generator_time_kernel_part():
    fn = ProductFunctional(
        f1=lambda x, i: 0.0 * np.asarray(x)[..., 0],
        grad_f1=lambda x, i: np.zeros_like(np.asarray(x, dtype=float)),
        hess_f1=lambda x, i: np.zeros((1, 1)),
        f2=lambda x, i: np.asarray(x)[..., 0],
        g=lambda s, i: s + 1.0,
        dg=lambda s, i: 1.0,
    )
    model = scalar_spec(lambda x, i: np.zeros(1))
    seg = Segment(np.linspace(-1.0, 0.0, 5)[:, None], delay=1.0, dt=0.25)
    # g(0) phi(0) - g(-r) phi(-r) - trapz(phi * dg) = 0 - 0 + 0.5
    assert apply_generator(fn, model, seg, 1) == pytest.approx(0.5)


def test_dynkin_engines_agree_on_deterministic_model():
    model = scalar_spec(lambda x, i: -np.asarray(x, dtype=float), batch=True)
    phi0 = Segment.make_constant([1.0], 1.0, 0.01)
    # bernoulli advances on the grid only, so both engines see one trajectory
    cfg = SimConfig(dt=0.01, horizon=1.0, seed=0, scheme="bernoulli")
    a = dynkin_residual(QUAD, model, phi0, 1, 1.0, cfg, 3, engine="paths")
    b = dynkin_residual(QUAD, model, phi0, 1, 1.0, cfg, 3, engine="batch")
    assert a.mean == pytest.approx(b.mean, abs=1e-12)
    # pure Euler bias, first order in dt
    assert abs(a.mean) < 0.01
    assert a.censored_fraction == 0.0


def test_dynkin_time_kernel_engines_agree():
    fn = ProductFunctional(
        f1=lambda x, i: (np.asarray(x, dtype=float) ** 2).sum(axis=-1),
        grad_f1=lambda x, i: 2.0 * np.asarray(x, dtype=float),
        hess_f1=lambda x, i: 2.0 * np.eye(1),
        f2=lambda x, i: (np.asarray(x, dtype=float) ** 2).sum(axis=-1),
        g=lambda s, i: s + 1.0,
        dg=lambda s, i: 1.0,
    )
    model = scalar_spec(lambda x, i: -np.asarray(x, dtype=float), batch=True)
    phi0 = Segment.make_constant([1.0], 1.0, 0.05)
    cfg = SimConfig(dt=0.05, horizon=2.0, seed=0, scheme="bernoulli")
    a = dynkin_residual(fn, model, phi0, 1, 2.0, cfg, 2, engine="paths")
    b = dynkin_residual(fn, model, phi0, 1, 2.0, cfg, 2, engine="batch")
    assert a.mean == pytest.approx(b.mean, abs=1e-10)
    assert abs(a.mean) < 0.2


def test_dynkin_brownian_quadratic_centered():
    model = scalar_spec(
        lambda x, i: np.zeros_like(np.asarray(x, dtype=float)),
        diffusion=lambda x, i: np.array([[1.0]]),
        batch=True,
    )
    phi0 = Segment.make_constant([0.0], 1.0, 0.01)
    cfg = SimConfig(dt=0.01, horizon=1.0, seed=42)
    est = dynkin_residual(QUAD, model, phi0, 1, 0.5, cfg, 500)
    assert est.n_samples == 500
    assert abs(est.mean) < 4.0 * est.std_error + 1e-3


def test_dynkin_switching_functional_centered():
    fn = mode_cost_functional({1: 0.0, 2: 1.0})
    model = scalar_spec(
        lambda x, i: np.zeros_like(np.asarray(x, dtype=float)),
        rates=lambda seg, i: {2: 1.0} if i == 1 else {1: 2.0},
        bound=2.0,
        batch=True,
    )
    phi0 = Segment.make_constant([0.0], 1.0, 0.01)
    cfg = SimConfig(dt=0.01, horizon=1.0, seed=3)
    for engine in ("batch", "paths"):
        est = dynkin_residual(fn, model, phi0, 1, 1.0, cfg, 300, engine=engine)
        assert abs(est.mean) < 4.0 * est.std_error + 0.05


def test_dynkin_engine_flag_validation():
    model = scalar_spec(lambda x, i: np.zeros(1))
    phi0 = Segment.make_constant([0.0], 1.0, 0.1)
    cfg = SimConfig(dt=0.1, horizon=1.0)
    with pytest.raises(ValueError):
        dynkin_residual(QUAD, model, phi0, 1, 1.0, cfg, 2, engine="batch")
    with pytest.raises(ValueError):
        dynkin_residual(QUAD, model, phi0, 1, 1.0, cfg, 2, engine="bogus")
    with pytest.raises(ValueError):
        dynkin_residual(QUAD, model, phi0, 1, 0.001, cfg, 2)


def test_hitting_time_deterministic_decay():
    model = scalar_spec(lambda x, i: -np.asarray(x, dtype=float), delay=0.01)
    phi0 = Segment.make_constant([math.e], 0.01, 0.01)
    cfg = SimConfig(dt=0.01, horizon=10.0, seed=0)
    est = estimate_hitting_time(model, phi0, 1, 1.0, 1, cfg, 2)
    # crossing is detected one window behind the continuous time ln(e) = 1
    assert est.mean == pytest.approx(1.01, abs=1e-9)
    assert est.censored_fraction == 0.0
    assert est.usable


def test_hitting_time_censors_blow_ups():
    model = scalar_spec(lambda x, i: np.asarray(x, dtype=float) ** 3)
    phi0 = Segment.make_constant([5.0], 1.0, 0.1)
    cfg = SimConfig(dt=0.1, horizon=3.0, seed=0)
    est = estimate_hitting_time(model, phi0, 1, 0.5, 1, cfg, 3)
    assert est.censored_fraction == 1.0
    assert not est.usable
    assert math.isnan(est.mean)


def test_mode_descent_exponential_mean():
    spec, _ = registry_get("switched_ou", {"c": 0.0, "sigma": 0.0, "delay": 1.0})
    phi0 = Segment.make_constant([0.0], 1.0, 0.02)
    cfg = SimConfig(dt=0.02, horizon=30.0, seed=17)
    est = estimate_mode_descent(spec, phi0, 5, 2, cfg, 800)
    # two unit-rate routes into the base pair: descent time is Exp(2)
    assert est.censored_fraction == 0.0
    assert abs(est.mean - 0.5) < 0.05


def test_descent_immediate_when_already_low():
    spec, _ = registry_get("switched_ou", {"c": 0.0})
    phi0 = Segment.make_constant([0.0], 1.0, 0.125)
    cfg = SimConfig(dt=0.125, horizon=5.0, seed=0)
    est = estimate_mode_descent(spec, phi0, 1, 2, cfg, 4)
    assert est.mean == 0.0
    assert est.std_error == 0.0


def test_coupling_decay_table():
    spec, lin = registry_get("switched_ou", {"c": 1.0, "sigma": 0.5})
    cfg = SimConfig(dt=1.0 / 16.0, horizon=5.0, seed=23)
    rows = coupling_decay(spec, lin, [5.0, 500.0], cfg, 400)
    assert [r["radius"] for r in rows] == [5.0, 500.0]
    for r in rows:
        assert 0.0 <= r["p_decouple"] <= 1.0
        assert r["ci95"][0] <= r["p_decouple"] <= r["ci95"][1]
        assert r["n_paths"] == 400
    assert rows[0]["p_decouple"] > rows[1]["p_decouple"]
    with pytest.raises(ValueError):
        coupling_decay(spec, lin, [5.0], cfg, 10, floor_frac=1.5)


def test_occupation_fractions_two_mode_balance():
    a, b = 1.0, 3.0
    rates = lambda seg, i: {2: a} if i == 1 else {1: b}
    batched = scalar_spec(lambda x, i: np.zeros_like(np.asarray(x, dtype=float)), rates=rates, bound=a + b, batch=True)
    phi0 = Segment.make_constant([0.0], 1.0, 0.05)
    cfg = SimConfig(dt=0.05, horizon=40.0, seed=4)
    means, ses = occupation_fractions(batched, phi0, 1, cfg, 150, [1, 2], burn_in=5.0)
    assert means[0] + means[1] == pytest.approx(1.0)
    assert abs(means[0] - 0.75) < 5.0 * ses[0] + 0.01

    perpath = scalar_spec(lambda x, i: np.zeros_like(np.asarray(x, dtype=float)), rates=rates, bound=a + b)
    m2, s2 = occupation_fractions(perpath, phi0, 1, cfg, 60, [1, 2], burn_in=5.0)
    gap = abs(means[0] - m2[0])
    assert gap < 4.0 * math.sqrt(ses[0] ** 2 + s2[0] ** 2) + 0.01


def test_occupation_fraction_burn_in_validation():
    model = scalar_spec(lambda x, i: np.zeros(1))
    phi0 = Segment.make_constant([0.0], 1.0, 0.1)
    cfg = SimConfig(dt=0.1, horizon=1.0)
    with pytest.raises(ValueError):
        occupation_fractions(model, phi0, 1, cfg, 2, [1], burn_in=1.0)


def test_occupation_stability_forgets_start():
    spec, _ = registry_get("switched_ou", {"sigma": 0.5, "c": 1.0})
    cfg = SimConfig(dt=1.0 / 16.0, horizon=30.0, seed=9)
    rep = occupation_stability(spec, [[0.5], [3.0]], cfg, 40, burn_in=15.0)
    d = rep["distances"]
    assert d.shape == (2, 2)
    assert d[0, 0] == 0.0 and d[1, 1] == 0.0
    assert d[0, 1] == pytest.approx(d[1, 0])
    # both chains relax to the same law; pooled histograms nearly agree
    assert d[0, 1] < 0.25
    for h in rep["histograms"]:
        assert h.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        occupation_stability(spec, [[0.5]], cfg, 2, burn_in=50.0)


def test_mcestimate_dict_round_trip():
    est = MCEstimate(1.0, 0.1, 10, 0.0)
    doc = est.to_dict()
    assert doc["usable"] is True
    assert doc["n_samples"] == 10
