import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import central_diff, rel_close
from transport_pinn.autodiff import (
    AutodiffError,
    Graph,
    NonFiniteError,
    forward_tangent,
    hstack,
    record_tangent_as_graph,
    reverse_gradient,
    sigmoid,
)

# 1 / (1 + exp(-0.1)) and 0.5 * sigma'(0.1), 30-digit mpmath evaluations
SIGMOID_0_1 = 0.524979187478939986
HALF_DSIGMOID_0_1 = 0.124688020096445984


class TestSigmoid:
    def test_zero(self):
        assert sigmoid(0.0) == 0.5

    def test_value(self):
        assert float(sigmoid(0.1)) == pytest.approx(SIGMOID_0_1, rel=1e-15)

    def test_antisymmetry(self):
        assert float(sigmoid(-1.7)) == pytest.approx(1.0 - float(sigmoid(1.7)), abs=1e-16)

    def test_no_overflow(self):
        s = sigmoid(np.array([-800.0, 800.0]))
        assert np.all(np.isfinite(s))
        assert s[0] >= 0.0 and s[1] == 1.0


def scalar_graph(build):
    g = Graph()
    x = g.input("x")
    return g, x, build(x)


class TestReverseGradient:
    def test_square(self):
        g, x, y = scalar_graph(lambda x: x * x)
        grads = reverse_gradient(g.evaluate({"x": 3.0}), y)
        assert float(grads["x"]) == 6.0

    def test_sigmoid_at_zero(self):
        g, x, y = scalar_graph(lambda x: x.sigmoid())
        assert float(reverse_gradient(g.evaluate({"x": 0.0}), y)["x"]) == 0.25

    def test_composite_matches_finite_difference(self):
        g, w, y = scalar_graph(lambda w: (w * (0.1 * w).sigmoid()).square())
        got = float(reverse_gradient(g.evaluate({"x": 0.5}), y)["x"])

        def f(v):
            return (v * float(sigmoid(0.1 * v))) ** 2

        assert rel_close(got, central_diff(f, 0.5, 1e-6), 1e-6)

    def test_unused_root_gets_exact_zero(self):
        g = Graph()
        x = g.input("x")
        g.input("z")
        y = x.exp()
        grads = reverse_gradient(g.evaluate({"x": 0.3, "z": 2.0}), y)
        assert float(grads["z"]) == 0.0

    def test_unevaluated_graph_is_usage_error(self):
        g, x, y = scalar_graph(lambda x: x.square())
        with pytest.raises(AutodiffError):
            reverse_gradient(g, y)

    # one scalar expression per operation kind; c is a fixed second operand
    KINDS = {
        "add": (lambda x, c: x + c * x, lambda x, c: x + c * x),
        "sub": (lambda x, c: c - x * x, lambda x, c: c - x * x),
        "mul": (lambda x, c: x * x * c, lambda x, c: x * x * c),
        "neg": (lambda x, c: -(x * c), lambda x, c: -(x * c)),
        "square": (lambda x, c: (x + c).square(), lambda x, c: (x + c) ** 2),
        "exp": (lambda x, c: (x * 0.5).exp(), lambda x, c: math.exp(0.5 * x)),
        "sigmoid": (lambda x, c: (x * c).sigmoid(), lambda x, c: 1 / (1 + math.exp(-x * c))),
        "tanh": (lambda x, c: (x * c).tanh(), lambda x, c: math.tanh(x * c)),
        "const": (lambda x, c: x * 2.5 + c, lambda x, c: 2.5 * x + c),
    }

    @pytest.mark.parametrize("kind", sorted(KINDS))
    def test_kind_against_central_difference(self, kind, rng):
        build, ref = self.KINDS[kind]
        g = Graph()
        x = g.input("x")
        y = build(x, 0.7)
        for v in rng.uniform(-4, 4, 100):
            got = float(reverse_gradient(g.evaluate({"x": v}), y)["x"])
            h = 1e-5 * max(1.0, abs(v))
            fd = central_diff(lambda u: ref(u, 0.7), v, h)
            assert rel_close(got, fd, 1e-6, atol=1e-9), (kind, v, got, fd)

    def test_array_ops_against_central_difference(self, rng):
        g = Graph()
        a, w, b = g.input("a"), g.input("w"), g.input("b")
        h1 = hstack(a, a.square())
        y = ((h1 @ w.T + b).tanh().sigmoid()).mean() + (a.sum() * 0.1)
        feed = {"a": rng.normal(size=(5, 1)), "w": rng.normal(size=(3, 2)), "b": rng.normal(size=3)}
        grads = reverse_gradient(g.evaluate(feed), y)
        for name in feed:
            base = feed[name]
            for idx in np.ndindex(base.shape):
                def f(v):
                    pert = dict(feed)
                    arr = base.copy()
                    arr[idx] = v
                    pert[name] = arr
                    return float(g.evaluate(pert)[y])

                fd = central_diff(f, base[idx], 1e-5)
                assert rel_close(grads[name][idx], fd, 1e-6, atol=1e-10)

    def test_linearity(self, rng):
        g = Graph()
        x, w = g.input("x"), g.input("w")
        f = (x * w).sigmoid()
        h = (x - w).square()
        combo = f * 2.5 + h * (-0.75)
        feed = {"x": 0.3, "w": -1.1}
        ev = g.evaluate(feed)
        gf, gh, gc = (reverse_gradient(ev, n) for n in (f, h, combo))
        for k in feed:
            assert float(gc[k]) == pytest.approx(2.5 * float(gf[k]) - 0.75 * float(gh[k]), rel=1e-14)

    def test_determinism(self, rng):
        g = Graph()
        w = g.input("w")
        y = ((w @ w.T).sigmoid() * w.sum()).mean()
        feed = {"w": rng.normal(size=(4, 4))}
        g1 = reverse_gradient(g.evaluate(feed), y)["w"]
        g2 = reverse_gradient(g.evaluate(feed), y)["w"]
        assert g1.tobytes() == g2.tobytes()


class TestNonFinite:
    def test_overflow_aborts_naming_node(self):
        g = Graph()
        x = g.input("x")
        e = (x * 1000.0).exp()
        _ = e + 1.0
        with pytest.raises(NonFiniteError) as info:
            g.evaluate({"x": 1.0})
        assert info.value.kind == "exp"
        assert info.value.index == e.index

    def test_nan_input_rejected(self):
        g, x, y = scalar_graph(lambda x: x + 1.0)
        with pytest.raises(NonFiniteError):
            g.evaluate({"x": float("nan")})


class TestForwardTangent:
    def test_sum_along_x(self):
        g = Graph()
        x, t = g.input("x"), g.input("t")
        y = x + t
        duals = forward_tangent(g.evaluate({"x": 0.2, "t": 0.4}), x)
        assert float(duals[y.index].tangent) == 1.0

    def test_sigmoid_chain(self):
        g = Graph()
        x, t = g.input("x"), g.input("t")
        y = (0.5 * x + 0.5 * t).sigmoid()
        duals = forward_tangent(g.evaluate({"x": 0.1, "t": 0.1}), x)
        assert float(duals[y.index].tangent) == pytest.approx(HALF_DSIGMOID_0_1, rel=1e-14)

    def test_independent_direction(self):
        g = Graph()
        x, t = g.input("x"), g.input("t")
        y = 3.0 * x
        duals = forward_tangent(g.evaluate({"x": 0.1, "t": 0.1}), t)
        assert float(duals[y.index].tangent) == 0.0

    def test_constant_and_self_tangent(self):
        g = Graph()
        x = g.input("x")
        c = g.const(4.0)
        duals = forward_tangent(g.evaluate({"x": 1.0}), x)
        assert float(duals[c.index].tangent) == 0.0
        assert float(duals[x.index].tangent) == 1.0

    def test_direction_must_be_root(self):
        g = Graph()
        x = g.input("x")
        y = x.square()
        ev = g.evaluate({"x": 1.0})
        with pytest.raises(AutodiffError):
            forward_tangent(ev, y)
        with pytest.raises(AutodiffError):
            record_tangent_as_graph(g, y, [y])


class TestTangentGraph:
    def test_square_second_derivative(self):
        g = Graph()
        x = g.input("x")
        y = x.square()
        tg, (dy,) = record_tangent_as_graph(g, x, [y])
        ev = tg.evaluate({"x": 3.0})
        assert float(ev[dy]) == 6.0
        assert float(reverse_gradient(ev, dy)["x"]) == 2.0

    def test_mixed_partial_matches_finite_difference(self):
        g = Graph()
        w, x = g.input("w"), g.input("x")
        y = (w * x).sigmoid()
        tg, (dy,) = record_tangent_as_graph(g, x, [y])
        ev = tg.evaluate({"w": 0.5, "x": 0.2})
        s = float(sigmoid(0.1))
        assert float(ev[dy]) == pytest.approx(0.5 * s * (1 - s), rel=1e-14)

        def tangent_at(wv):
            return float(forward_tangent(g.evaluate({"w": wv, "x": 0.2}), "x")[y.index].tangent)

        fd = central_diff(tangent_at, 0.5, 1e-6)
        assert rel_close(float(reverse_gradient(ev, dy)["w"]), fd, 1e-6)

    def test_constant_tangent_is_zero(self):
        g = Graph()
        x = g.input("x")
        c = g.const(2.0) * 3.0
        tg, (dc,) = record_tangent_as_graph(g, x, [c])
        ev = tg.evaluate({"x": 0.7})
        assert float(ev[dc]) == 0.0
        assert float(reverse_gradient(ev, dc)["x"]) == 0.0

    def test_shares_roots_and_original_nodes(self):
        g = Graph()
        x = g.input("x")
        y = x.tanh()
        tg, _ = record_tangent_as_graph(g, x, [y])
        assert tg.roots == g.roots
        assert len(tg) > len(g)
        assert float(tg.evaluate({"x": 0.3})[y.index]) == float(g.evaluate({"x": 0.3})[y])


UNARY = ["neg", "square", "sigmoid", "tanh", "expsig"]
BINARY = ["add", "sub", "mul"]


def build_random(g, roots, program):
    """Fold a program of (op, operand picks) into an expression over ``roots``."""
    pool = list(roots)
    for op, i, j in program:
        a, b = pool[i % len(pool)], pool[j % len(pool)]
        if op == "neg":
            n = -a
        elif op == "square":
            n = a.square()
        elif op == "sigmoid":
            n = a.sigmoid()
        elif op == "tanh":
            n = a.tanh()
        elif op == "expsig":
            n = a.sigmoid().exp()
        elif op == "add":
            n = a + b
        elif op == "sub":
            n = a - b
        else:
            n = a * b
        pool.append(n)
    return pool[-1]


programs = st.lists(
    st.tuples(st.sampled_from(UNARY + BINARY), st.integers(0, 20), st.integers(0, 20)),
    min_size=1,
    max_size=8,
)
coords = st.floats(-1.0, 1.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(programs, coords, coords, coords)
def test_tangent_graph_reverse_equals_fd_of_tangent(program, xv, wv, tv):
    g = Graph()
    roots = [g.input("x"), g.input("w"), g.input("t")]
    y = build_random(g, roots, program)
    feed = {"x": xv, "w": wv, "t": tv}
    tg, (dy,) = record_tangent_as_graph(g, "x", [y])
    ev = tg.evaluate(feed)

    duals = forward_tangent(g.evaluate(feed), "x")
    assert float(ev[dy]) == pytest.approx(float(duals[y.index].tangent), rel=1e-12, abs=1e-14)

    grads = reverse_gradient(ev, dy)
    for name in ("w", "t"):
        def tangent_at(v):
            f = dict(feed)
            f[name] = v
            return float(forward_tangent(g.evaluate(f), "x")[y.index].tangent)

        fd = central_diff(tangent_at, feed[name], 1e-5)
        assert rel_close(float(grads[name]), fd, 1e-5, atol=1e-7)


@settings(max_examples=40, deadline=None)
@given(programs, coords, coords, coords)
def test_reverse_matches_forward_tangent(program, xv, wv, tv):
    # reverse and forward accumulation must agree on every partial
    g = Graph()
    roots = [g.input("x"), g.input("w"), g.input("t")]
    y = build_random(g, roots, program)
    feed = {"x": xv, "w": wv, "t": tv}
    ev = g.evaluate(feed)
    grads = reverse_gradient(ev, y)
    for name in feed:
        tan = float(forward_tangent(ev, name)[y.index].tangent)
        assert float(grads[name]) == pytest.approx(tan, rel=1e-12, abs=1e-14)
