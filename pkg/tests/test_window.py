import math
import random

from hypothesis import given, strategies as st

from sheetstream.values import DIV0_ERROR, WindowRef
from sheetstream.window import WindowSpec, WindowStore


def make_store(span_ms=60_000) -> WindowStore:
    return WindowStore(WindowSpec("trades", "price", span_ms))


def brute(buf):
    vals = [v for _, v in buf]
    n = len(vals)
    return {
        "count": float(n),
        "sum": math.fsum(vals) if n else 0.0,
        "min": min(vals) if n else 0.0,
        "max": max(vals) if n else 0.0,
        "avg": (math.fsum(vals) / n) if n else DIV0_ERROR,
    }


def rel_close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def test_insert_eviction_example():
    st_ = make_store(60_000)
    assert st_.insert(0, 5.0) == 0
    assert st_.insert(30_000, 7.0) == 0
    assert st_.insert(61_000, 1.0) == 1
    assert list(st_.buf) == [(30_000, 7.0), (61_000, 1.0)]
    assert st_.w_sum() == 8.0


def test_first_insert():
    st_ = make_store()
    assert st_.insert(123, 9.0) == 0
    assert st_.count == 1


def test_identical_timestamps_both_retained():
    # eviction uses strict inequality: keep ts > newest - span
    st_ = make_store(100)
    st_.insert(50, 1.0)
    st_.insert(50, 2.0)
    assert st_.count == 2
    st_.insert(150, 3.0)  # 50 <= 150-100 evicts both
    assert list(st_.buf) == [(150, 3.0)]


def test_boundary_is_half_open():
    st_ = make_store(100)
    st_.insert(0, 1.0)
    st_.insert(100, 2.0)  # 0 <= 100-100 -> first evicted
    assert list(st_.buf) == [(100, 2.0)]
    st_ = make_store(100)
    st_.insert(1, 1.0)
    st_.insert(100, 2.0)  # 1 > 0 -> survives
    assert st_.count == 2


def test_empty_store_defaults():
    st_ = make_store()
    assert st_.w_sum() == 0.0
    assert st_.w_count() == 0.0
    assert st_.w_min() == 0.0
    assert st_.w_max() == 0.0
    assert st_.w_avg() == DIV0_ERROR
    assert st_.summary() == WindowRef(0, 0.0, 0.0, 0.0)


def test_two_values():
    st_ = make_store()
    st_.insert(0, 10.0)
    st_.insert(1, 20.0)
    assert st_.w_avg() == 15.0
    assert st_.w_min() == 10.0
    assert st_.w_max() == 20.0


def test_ten_thousand_inserts_match_brute_force():
    rng = random.Random(7)
    st_ = make_store(span_ms=5_000)
    ts = 0
    for _ in range(10_000):
        ts += rng.randint(0, 500)
        st_.insert(ts, rng.uniform(-1000, 1000))
        want = brute(st_.buf)
        assert st_.w_count() == want["count"]
        assert st_.w_min() == want["min"]
        assert st_.w_max() == want["max"]
        assert rel_close(st_.w_sum(), want["sum"])
        if want["count"]:
            assert rel_close(st_.w_avg(), want["avg"])


def test_eviction_keeps_exactly_the_half_open_window():
    rng = random.Random(21)
    span = 700
    st_ = make_store(span)
    history = []
    ts = 0
    for _ in range(2_000):
        ts += rng.randint(0, 300)
        v = rng.uniform(0, 10)
        history.append((ts, v))
        st_.insert(ts, v)
        expect = [(t, x) for t, x in history if t > ts - span]
        assert list(st_.buf) == expect


def test_state_is_pure_function_of_insert_sequence():
    rng = random.Random(3)
    seq = []
    ts = 0
    for _ in range(500):
        ts += rng.randint(0, 100)
        seq.append((ts, rng.uniform(-5, 5)))
    a, b = make_store(1_000), make_store(1_000)
    summaries_a = [(a.insert(t, v), a.summary()) for t, v in seq]
    summaries_b = [(b.insert(t, v), b.summary()) for t, v in seq]
    assert summaries_a == summaries_b
    assert list(a.buf) == list(b.buf)


def test_amortized_wedge_cost_bound():
    rng = random.Random(11)
    st_ = make_store(2_000)
    n = 20_000
    ts = 0
    for _ in range(n):
        ts += rng.randint(0, 50)
        st_.insert(ts, rng.uniform(0, 100))
    assert st_.wedge_ops <= 4 * n


@given(
    st.lists(
        st.tuples(st.integers(0, 200), st.floats(-1e6, 1e6, allow_nan=False)),
        min_size=1,
        max_size=60,
    ),
    st.integers(1, 500),
)
def test_window_invariants(steps, span):
    st_ = WindowStore(WindowSpec("s", "a", span))
    history = []
    ts = 0
    for dt, v in steps:
        ts += dt
        history.append((ts, v))
        st_.insert(ts, v)
        live = [(t, x) for t, x in history if t > ts - span]
        assert list(st_.buf) == live
        assert st_.count == len(live)
        want = brute(st_.buf)
        assert st_.w_min() == want["min"] and st_.w_max() == want["max"]
        assert rel_close(st_.w_sum(), want["sum"])
