import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teamcontract.production import (
    Primitive,
    ProductionSpec,
    check_separable_condition,
    eval_gradient,
    eval_hessian,
    eval_production,
    invert_reciprocal_derivative,
)

from .conftest import custom_cd, custom_ces


def central_diff(fun, a, i, h):
    up, down = a.copy(), a.copy()
    up[i] += h
    down[i] -= h
    return (fun(up) - fun(down)) / (2 * h)


def models():
    return [
        ProductionSpec.cobb_douglas([1 / 3, 1 / 3], 3.0),
        ProductionSpec.cobb_douglas([0.2, 0.1, 0.3], 2.0),
        ProductionSpec.ces([1, 2], -1.3, 0.2, 4.0),
        ProductionSpec.ces([1, 2, 3], -0.5, 0.7),
        custom_cd([0.25, 0.25]),
        custom_ces([1.0, 3.0], -2.0, 0.5),
        ProductionSpec.custom(Primitive("power", 1.0, 0.5), [Primitive("power", 1.0, 0.5)] * 2),
    ]


class TestEvalProduction:
    def test_cd_unit_input(self, intro):
        assert eval_production(intro, [1, 1]) == pytest.approx(3.0, rel=1e-15)

    def test_intro_equilibrium_output(self, intro):
        assert eval_production(intro, [1 / 8, 1 / 8]) == pytest.approx(0.75, rel=1e-14)

    def test_ces_unit_input(self):
        spec = ProductionSpec.ces([1, 1], -1.0, 0.5)
        assert eval_production(spec, [1, 1]) == pytest.approx(2**-0.5, rel=1e-14)

    def test_ces_zero_effort_is_zero(self):
        spec = ProductionSpec.ces([1, 2], -1.3, 0.2)
        assert eval_production(spec, [0.0, 5.0]) == 0.0

    def test_batch_matches_single(self):
        spec = ProductionSpec.ces([1, 2], -1.3, 0.2, 2.0)
        a = np.array([[0.5, 1.0], [2.0, 0.1]])
        batch = eval_production(spec, a)
        assert batch == pytest.approx([eval_production(spec, row) for row in a], rel=1e-15)

    @pytest.mark.parametrize("a", [[1.0], [1.0, -0.1], [np.nan, 1.0]])
    def test_rejects_bad_input(self, intro, a):
        with pytest.raises(ValueError):
            eval_production(intro, a)

    def test_custom_cd_matches_cd(self):
        a = np.array([0.3, 2.0])
        assert eval_production(custom_cd([0.25, 0.25], 2.0), a) == pytest.approx(
            eval_production(ProductionSpec.cobb_douglas([0.25, 0.25], 2.0), a), rel=1e-14
        )


class TestGradient:
    def test_sqrt(self, sqrt_cd):
        assert eval_gradient(sqrt_cd, [4.0]) == pytest.approx([0.25], rel=1e-15)

    def test_intro_unit(self, intro):
        assert eval_gradient(intro, [1, 1]) == pytest.approx([1, 1], rel=1e-15)

    def test_ces_unit(self):
        spec = ProductionSpec.ces([1, 1], -1.0, 0.5)
        a = np.array([1.0, 1.0])
        fd = [central_diff(lambda z: eval_production(spec, z), a, i, 1e-6) for i in range(2)]
        # frozen from the finite-difference oracle: 0.5 * 2**-1.5
        assert fd == pytest.approx([0.17677670, 0.17677670], rel=1e-7)
        assert eval_gradient(spec, a) == pytest.approx(fd, rel=1e-8)

    def test_requires_positive_effort(self, intro):
        with pytest.raises(ValueError):
            eval_gradient(intro, [0.0, 1.0])

    @pytest.mark.parametrize("spec", models(), ids=lambda s: f"{s.kind}-{s.n}")
    def test_matches_finite_differences(self, spec, rng):
        for _ in range(100):
            a = rng.uniform(0.05, 5.0, spec.n)
            grad = eval_gradient(spec, a)
            for i in range(spec.n):
                h = 1e-6 * max(a[i], 1.0)
                fd = central_diff(lambda z: eval_production(spec, z), a, i, h)
                assert grad[i] == pytest.approx(fd, rel=1e-5)

    @pytest.mark.parametrize("spec", models(), ids=lambda s: f"{s.kind}-{s.n}")
    def test_hessian_matches_gradient_differences(self, spec, rng):
        a = rng.uniform(0.2, 3.0, spec.n)
        hess = eval_hessian(spec, a)
        for i in range(spec.n):
            col = central_diff(lambda z: eval_gradient(spec, z), a, i, 1e-6 * max(a[i], 1.0))
            assert hess[:, i] == pytest.approx(col, rel=1e-5, abs=1e-9)


class TestShapeProperties:
    @pytest.mark.parametrize("spec", models(), ids=lambda s: f"{s.kind}-{s.n}")
    def test_monotone_and_concave(self, spec, rng):
        for _ in range(200):
            a = rng.uniform(0, 4, spec.n)
            b = a + rng.uniform(0, 2, spec.n)
            assert eval_production(spec, b) >= eval_production(spec, a)
            c = rng.uniform(0, 4, spec.n)
            lam = rng.uniform()
            mix = eval_production(spec, lam * a + (1 - lam) * c)
            assert mix >= lam * eval_production(spec, a) + (1 - lam) * eval_production(spec, c) - 1e-9

    @given(
        scale=st.floats(0.01, 100),
        a=st.lists(st.floats(0, 50), min_size=3, max_size=3),
    )
    def test_scale_is_linear(self, scale, a):
        for base in (ProductionSpec.cobb_douglas([0.2, 0.3, 0.1]), ProductionSpec.ces([1, 2, 3], -1.3, 0.2)):
            one = eval_production(base.with_scale(scale), a)
            two = eval_production(base.with_scale(2 * scale), a)
            assert two == 2 * one


class TestSpec:
    @pytest.mark.parametrize(
        "make",
        [
            lambda: ProductionSpec.cobb_douglas([0.5, 0.5]),
            lambda: ProductionSpec.cobb_douglas([0.5, -0.1]),
            lambda: ProductionSpec.cobb_douglas([]),
            lambda: ProductionSpec.ces([1, 2], 0.5, 0.2),
            lambda: ProductionSpec.ces([1, 2], -1.0, 1.0),
            lambda: ProductionSpec.cobb_douglas([0.2], scale=0.0),
            lambda: ProductionSpec("linear", 1.0, (1.0,)),
        ],
    )
    def test_invariants(self, make):
        with pytest.raises(ValueError):
            make()

    @pytest.mark.parametrize("spec", models(), ids=lambda s: f"{s.kind}-{s.n}")
    def test_json_round_trip(self, spec):
        doc = json.loads(json.dumps(spec.to_dict()))
        assert ProductionSpec.from_dict(doc) == spec
        assert set(doc) == {"kind", "scale", "params"}

    def test_unknown_primitive(self):
        with pytest.raises(ValueError):
            Primitive("sin")


class TestSeparableCondition:
    def test_benchmark_ces(self):
        assert check_separable_condition(ProductionSpec.ces([1, 2], -1.3, 0.2)).status == "pass"

    def test_intro_cd(self, intro):
        assert check_separable_condition(intro).passed

    def test_linear_g_fails(self):
        spec = ProductionSpec.custom(Primitive("exp"), [Primitive("power", 1.0, 1.0)] * 2)
        verdict = check_separable_condition(spec)
        assert verdict.status == "fail"
        assert verdict.reason == "inverse not well-defined"
        assert verdict.witness["agent"] == 0

    def test_convex_y_fails(self):
        # g = a^2: 1/g' = 1/(2a) is invertible but y(s) = 1/(4 s^2) is decreasing
        spec = ProductionSpec.custom(Primitive("exp"), [Primitive("power", 1.0, 2.0)])
        assert check_separable_condition(spec).status == "fail"

    def test_decreasing_h_fails(self):
        spec = ProductionSpec.custom(Primitive("exp", 1.0, -1.0), [Primitive("log", 0.3)])
        assert check_separable_condition(spec).reason == "h is not strictly increasing"

    @settings(max_examples=25, deadline=None)
    @given(
        weights=st.lists(st.floats(0.1, 10), min_size=1, max_size=4),
        r=st.floats(-5, -0.05),
        d=st.floats(0.05, 0.95),
    )
    def test_every_ces_passes(self, weights, r, d):
        assert check_separable_condition(ProductionSpec.ces(weights, r, d)).passed

    @settings(max_examples=25, deadline=None)
    @given(weights=st.lists(st.floats(0.01, 0.2), min_size=1, max_size=4))
    def test_every_cd_passes(self, weights):
        assert check_separable_condition(ProductionSpec.cobb_douglas(weights)).passed

    def test_inverse_round_trip(self):
        g = Primitive("power", -2.0, -1.3)
        a = np.geomspace(1e-3, 1e3, 7)
        s = 1.0 / g.d1(a)
        assert invert_reciprocal_derivative(g, s) == pytest.approx(a, rel=1e-12)
