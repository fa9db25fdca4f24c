import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ksgrain import dynamics as d
from ksgrain.entropy import (
    EntropySeries,
    KsEstimate,
    bound_report,
    default_window,
    entropy_series,
    ks_estimate,
    partition_entropy,
    saturation_depth,
    spreading_series,
)
from ksgrain.errors import NoSaturationError, NonNormalizedError, ValidationError, WindowTooShortError
from ksgrain.measure import sample_joint
from ksgrain.phase_space import make_partition, unit_square

U = unit_square()
LOG2 = math.log(2)


def synthetic(H, stride=1, M=1024):
    n = len(H)
    return EntropySeries(
        stride, list(range(n)), list(H), [(k + 1) * math.log(M) for k in range(n)],
        [1] * n, [0.0] * n, [0.0] * n, [False] * n, 10**6, M,
    )


def test_partition_entropy_examples():
    assert partition_entropy([0.25] * 4) == pytest.approx(math.log(4))
    assert partition_entropy([1, 0, 0, 0]) == 0
    assert partition_entropy([0.5, 0.5]) == pytest.approx(LOG2)
    with pytest.raises(NonNormalizedError):
        partition_entropy([0.5, 0.6])
    with pytest.raises(NonNormalizedError):
        partition_entropy([1.5, -0.5])


def test_partition_entropy_of_distribution():
    jd = sample_joint(d.rotation(0.0), make_partition(U, 2, 2), 1, n_samples=10_000)
    assert partition_entropy(jd) == pytest.approx(math.log(4), abs=1e-3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=50).filter(lambda w: sum(w) > 1e-3))
def test_partition_entropy_properties(w):
    w = np.array(w) / sum(w)
    H = partition_entropy(w)
    assert -1e-12 <= H <= math.log(len(w)) + 1e-12
    assert partition_entropy(w[::-1]) == pytest.approx(H, abs=1e-12)


def test_series_examples():
    s = entropy_series(d.rotation(0.0), make_partition(U, 2, 2), 5, n_samples=100_000)
    assert all(h == pytest.approx(math.log(4), abs=1e-3) for h in s.H)
    assert saturation_depth(s) == 0
    s = entropy_series(d.baker(), make_partition(U, 2, 2), 3, stride=2, n_samples=1_000_000, rng_seed=1)
    for n, h in enumerate(s.H):
        assert h == pytest.approx((n + 1) * math.log(4), rel=0.01)
    s = entropy_series(d.doubling(), make_partition(U, 2, 1), 6, n_samples=1_000_000, rng_seed=2)
    for n, h in enumerate(s.H):
        assert h == pytest.approx((n + 1) * LOG2, rel=0.01)


def test_baker_stride_one_structure(exact_measures):
    """On the 2x2 grid the baker map adds one bit per step: 2^(n+2) cells of measure 2^-(n+2)."""
    exact = exact_measures("baker", 2, 2, 3, bits_q=5, bits_p=1)
    assert len(exact) == 2**5 and set(exact.values()) == {1 / 32}
    s = entropy_series(d.baker(), make_partition(U, 2, 2), 4, n_samples=1_000_000, rng_seed=3)
    for n in range(5):
        assert s.distinct[n] == 2 ** (n + 2)
        assert s.H[n] == pytest.approx((n + 2) * LOG2, abs=3 * s.sigma[n] + 1e-3)


@pytest.mark.parametrize("spec", ["baker", "cat", "standard:K=0.97", "doubling"])
def test_series_invariants(spec):
    m = d.parse_map_spec(spec)
    part = make_partition(U, 16, 1) if m.dimension == 1 else make_partition(U, 8, 8)
    N = 50_000
    s = entropy_series(m, part, 8, n_samples=N, rng_seed=4)
    for n in range(len(s.H)):
        assert s.H[n] <= math.log(min(part.M ** (n + 1), N)) + 1e-9
        assert s.H[n] <= s.bound[n] + s.eps_mc[n]
        if n:
            assert s.H[n] >= s.H[n - 1] - s.eps_mc[n]
        assert s.flagged[n] == (s.distinct[n] > 0.1 * N)
    assert s.H[0] <= math.log(part.M) + 1e-12


def test_shards_are_deterministic():
    part = make_partition(U, 4, 4)
    a = entropy_series(d.cat(), part, 4, n_samples=20_000, rng_seed=5, shards=3)
    b = entropy_series(d.cat(), part, 4, n_samples=20_000, rng_seed=5, shards=3)
    assert a.H == b.H


def test_miller_madow():
    part = make_partition(U, 4, 4)
    raw = entropy_series(d.cat(), part, 3, n_samples=5000, rng_seed=6)
    mm = entropy_series(d.cat(), part, 3, n_samples=5000, rng_seed=6, bias_correction="miller-madow")
    for h0, h1, k in zip(raw.H, mm.H, raw.distinct):
        assert h1 - h0 == pytest.approx((k - 1) / (2 * 5000))
    with pytest.raises(ValidationError):
        entropy_series(d.cat(), part, 3, n_samples=10, bias_correction="jackknife")


def test_ks_estimate_exact_series():
    H = [(n + 1) * LOG2 for n in range(8)]
    e = ks_estimate(synthetic(H))
    assert e.h_ks == pytest.approx(LOG2) and e.h_ks_tau == pytest.approx(LOG2)
    e2 = ks_estimate(synthetic(H, stride=2))
    assert e2.h_ks_tau == pytest.approx(LOG2) and e2.h_ks == pytest.approx(LOG2 / 2)
    assert e2.h_ks * e2.stride == e2.h_ks_tau
    e3 = ks_estimate(synthetic(H), method="slope-fit", fit_window=(1, 6))
    assert e3.h_ks == pytest.approx(LOG2) and e3.fit_window == (1, 6)
    with pytest.raises(WindowTooShortError):
        ks_estimate(synthetic(H), fit_window=(2, 3))
    with pytest.raises(ValidationError):
        ks_estimate(synthetic(H), method="median")


def test_flagged_window_warns():
    s = synthetic([(n + 1) * LOG2 for n in range(8)])
    s.flagged[6] = True
    with pytest.warns(RuntimeWarning, match="sample-exhausted"):
        ks_estimate(s, fit_window=(4, 7))
    lo, hi = default_window(s)
    assert hi <= 5
    s.flagged[:] = [True] * 8
    with pytest.raises(WindowTooShortError):
        default_window(s)


def test_default_window_prefers_latest_flat_run():
    # conditional entropies falling towards 1.0 from above
    inc = [2.0, 1.5, 1.2, 1.05, 1.02, 1.01, 1.0]
    H = np.concatenate([[0.0], np.cumsum(inc)])
    assert default_window(synthetic(H)) == (4, 7)


def test_baker_large_grid_fixed_window():
    s = entropy_series(d.baker(), make_partition(U, 32, 32), 5, n_samples=1_000_000, rng_seed=7)
    e = ks_estimate(s, fit_window=(1, 5))
    assert abs(e.h_ks - LOG2) <= 0.05 * LOG2


def test_saturation_depth_examples():
    M = 2**10
    H = [min((n + 1) * LOG2, math.log(M)) for n in range(16)]
    assert saturation_depth(synthetic(H), rate=LOG2) in (9, 10)
    assert saturation_depth(synthetic([1.0] * 6), rate=0.0) == 0
    with pytest.raises(NoSaturationError):
        saturation_depth(synthetic([(n + 1) * LOG2 for n in range(6)]), rate=LOG2)


def test_cat_saturation_depth_at_4096_cells():
    s = spreading_series(d.cat(), make_partition(U, 64, 64), 14, n_samples=1_000_000, rng_seed=0)
    e = ks_estimate(s)
    assert e.saturation_depth in (8, 9)
    assert e.h_ks == pytest.approx(math.log((3 + math.sqrt(5)) / 2), rel=0.05)


def test_bound_report_examples():
    part = make_partition(U, 32, 32)
    est = KsEstimate(LOG2, LOG2, 1, "increment-average", (1, 5), 0.001)
    r = bound_report(est, part)
    assert r.satisfied and not r.non_chaotic
    assert r.bound_value == pytest.approx(math.log(1024))
    assert r.log_timescale == pytest.approx(10.0)
    assert r.slack == pytest.approx(math.log(1024) - LOG2)
    assert r.summary().startswith("h_KS=0.693 bound=6.93 satisfied=true tau_log=10")
    r0 = bound_report(KsEstimate(0.0, 0.0, 1, "increment-average", (0, 3), 0.0), part)
    assert r0.satisfied and r0.non_chaotic and math.isinf(r0.log_timescale)
    assert r0.to_dict()["log_timescale"] is None
    bad = bound_report(KsEstimate(8.0, 8.0, 1, "increment-average", (0, 3), 0.01), part)
    assert not bad.satisfied
    # stride rescales both the bound and the estimate
    r2 = bound_report(KsEstimate(2 * LOG2, LOG2, 2, "increment-average", (0, 3), 0.0), part)
    assert r2.bound_value == pytest.approx(math.log(1024) / 2)
    assert r2.h_ks == pytest.approx(LOG2)


def test_series_csv(tmp_path):
    s = entropy_series(d.cat(), make_partition(U, 4, 4), 3, n_samples=2000, rng_seed=1)
    s.write_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().split("\n")
    assert lines[0] == "n,H,bound,increment"
    assert lines[1].endswith(",")
    n, H, b, inc = lines[2].split(",")
    assert float(inc) == pytest.approx(s.H[1] - s.H[0])
    s.write_plot(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().startswith("n,H\n0,")
