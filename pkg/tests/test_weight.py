import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radweight import weight as W

BUILTINS = [
    (W.pow_inv(), (0.05, 0.999)),
    (W.exp_inv(), (0.05, 0.95)),
    (W.fock(), (0.1, 50.0)),
    (W.exponential(), (0.1, 30.0)),
    (W.power(2.0, 1.0), (0.1, 10.0)),
]


def test_laplacian_examples():
    assert W.fock().laplacian(3.7) == pytest.approx(1.0, rel=1e-14)
    assert W.power(2.0, 1.0).laplacian(0.5) == pytest.approx(4.0, rel=1e-14)
    # 2/(1-r)^3 + 1/(r (1-r)^2) at r = 0.9
    assert W.pow_inv().laplacian(0.9) == pytest.approx(2111.1111111111, rel=1e-9)


def test_rho_examples():
    w = W.pow_inv()
    assert w.rho(0.9) == pytest.approx(0.021764, rel=1e-4)
    assert w.rho(0.95) == pytest.approx(0.0078036, rel=1e-4)
    assert W.fock().rho(12.0) == pytest.approx(1.0)


@pytest.mark.parametrize("w,rng_", BUILTINS, ids=lambda x: getattr(x, "name", ""))
def test_rho_is_inverse_sqrt_laplacian(w, rng_):
    r = np.random.default_rng(1).uniform(*rng_, 1000)
    np.testing.assert_allclose(w.rho(r), w.laplacian(r) ** -0.5, rtol=1e-15)


@pytest.mark.parametrize("w,rng_", BUILTINS, ids=lambda x: getattr(x, "name", ""))
def test_green_identity(w, rng_):
    assert W.Domain(w.domain) in (W.Domain.DISC, W.Domain.PLANE)
    assert float(w.h(0.0)) == 0.0
    for r in np.linspace(rng_[0], rng_[1], 20):
        assert w.green_check(r) <= 1e-8


def test_validate_classes():
    rep = W.pow_inv().validate(0.5, 0.99)
    assert rep.weight_class == "I" and not rep.violations
    assert W.exp_inv().validate(0.5, 0.95).weight_class == "II"
    assert W.exponential().validate(1.0, 30.0).weight_class == "II"


def test_validate_reports_small_laplacian():
    w = W.power(2.0, 0.1)  # Laplacian 0.4 < 1
    rep = w.validate(0.5, 5.0, 50)
    assert not rep.ok
    assert any(v["check"] == "laplacian>=1" for v in rep.violations)


def test_truncated_weight():
    w = W.power(2.0, 1.0)
    tw = w.truncated(0.5)
    assert tw(0.8) == pytest.approx(0.25 + math.log(1.6) * 0.5, rel=1e-9)
    assert tw(0.5) == pytest.approx(w.h(0.5))
    assert tw(0.3) == pytest.approx(w.h(0.3))
    assert tw(0.6j) == pytest.approx(tw(0.6))


@pytest.mark.parametrize("w,cut", [(W.pow_inv(), 0.9), (W.exp_inv(), 0.8), (W.fock(), 5.0)])
def test_truncated_is_minorant(w, cut):
    tw = w.truncated(cut)
    top = 0.995 if w.domain is W.Domain.DISC else 40.0
    r = np.linspace(cut, top, 200)
    assert np.all(tw(r) <= w.h(r) + 1e-9 * np.maximum(1.0, w.h(r)))


def test_from_config():
    assert W.from_config({"domain": "disc", "kind": "pow_inv"}).rho(0.9) == pytest.approx(W.pow_inv().rho(0.9))
    with pytest.raises(W.WeightError):
        W.from_config({"domain": "disc", "kind": "nope"})
    with pytest.raises(W.WeightError):
        W.from_config({"domain": "plane", "kind": "pow_inv"})


def test_custom_table_weight():
    r = np.linspace(0.0, 0.995, 400)
    cfg = {"domain": "disc", "kind": "custom", "params": {"r": r.tolist(), "h": (1 / (1 - r) - 1).tolist()}}
    w = W.from_config(cfg)
    assert w.rho(0.9) == pytest.approx(W.pow_inv().rho(0.9), rel=5e-3)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 0.995))
def test_finite_difference_laplacian(r):
    ref = W.pow_inv()
    fd = W.from_function(lambda t: 1.0 / (1.0 - np.asarray(t)) - 1.0, "disc")
    assert fd.laplacian(r) == pytest.approx(ref.laplacian(r), rel=1e-5)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.99), st.floats(0.0, 0.99))
def test_h_increasing(a, b):
    w = W.pow_inv()
    lo, hi = min(a, b), max(a, b)
    assert w.h(lo) <= w.h(hi)
