import math

import numpy as np
import pytest

from seqdiff.schedule import (KINDS, ScheduleValidityError, alpha_bar,
                              build_schedule, dump_schedule_csv, posterior,
                              schedule_rows)


def test_truncated_linear_hand_values():
    sch = build_schedule("truncated-linear", t=4, a=0.08, b=0.02, tau=1.0)
    expected = [0.02 * s + 0.02 / s for s in (1, 2, 3, 4)]
    assert np.allclose(sch.betas, expected, atol=1e-15)
    assert np.allclose(sch.betas, [0.04, 0.05, 0.0666667, 0.085], atol=1e-4)


def test_truncation_replaces_large_beta_with_tenth():
    sch = build_schedule("truncated-linear", t=4, a=5.0, b=0.0, tau=1.0)
    raw = [1.25 * s for s in (1, 2, 3, 4)]
    assert np.allclose(sch.betas, [r / 10 for r in raw])
    assert sch.betas[3] == pytest.approx(0.5)


def test_truncation_bound_property():
    rng = np.random.default_rng(0)
    for _ in range(50):
        t = int(rng.integers(2, 40))
        a = float(rng.uniform(0.01, 6.0))
        b = float(rng.uniform(0.0, 0.5))
        try:
            sch = build_schedule("truncated-linear", t=t, a=a, b=b, tau=1.0)
        except ScheduleValidityError:
            continue
        s = np.arange(1, t + 1)
        raw = (a / t) * s + b / s
        assert np.all(sch.betas <= np.maximum(1.0, raw / 10) + 1e-15)
        assert np.all(sch.betas[raw <= 1.0] <= 1.0)
        assert np.all(sch.betas[raw > 1.0] == raw[raw > 1.0] / 10)


def test_constant_offset_variant():
    sch = build_schedule("truncated-linear", t=4, a=0.08, b=0.02, tau=1.0,
                         b_constant=True)
    assert np.allclose(sch.betas, [0.02 * s + 0.02 for s in (1, 2, 3, 4)])


@pytest.mark.parametrize("kind", KINDS)
def test_alpha_bar_strictly_decreasing_from_one(kind):
    sch = build_schedule(kind, t=32)
    assert np.all(sch.betas > 0) and np.all(sch.betas < 1)
    assert alpha_bar(sch, 0) == 1.0
    bars = np.concatenate([[1.0], sch.alpha_bars])
    assert np.all(np.diff(bars) < 0)
    assert np.all(np.diff(1.0 - bars) > 0)


@pytest.mark.parametrize("kind", KINDS)
def test_internal_consistency(kind):
    sch = build_schedule(kind, t=32)
    assert np.array_equal(sch.alphas, 1.0 - sch.betas)
    running = 1.0
    for s in range(1, 33):
        running *= sch.alphas[s - 1]
        assert sch.alpha_bars[s - 1] == pytest.approx(running, rel=1e-15)


def test_alpha_bar_two_term_product():
    sch = _schedule_from_betas([0.1, 0.2])
    assert alpha_bar(sch, 2) == pytest.approx(0.72, rel=1e-15)
    assert alpha_bar(sch, 0) == 1.0


def _schedule_from_betas(betas):
    """Build any-kind schedule object carrying exactly these betas."""
    from seqdiff.schedule import NoiseSchedule
    betas = np.asarray(betas, dtype=float)
    alphas = 1.0 - betas
    return NoiseSchedule(kind="truncated-linear", t=len(betas), a=0.0, b=0.0,
                         tau=1.0, betas=betas, alphas=alphas,
                         alpha_bars=np.cumprod(alphas))


def test_alpha_bar_constant_beta_closed_form():
    beta = 0.05
    sch = _schedule_from_betas([beta] * 10)
    for s in range(11):
        assert alpha_bar(sch, s) == pytest.approx((1 - beta) ** s, rel=1e-12)


def test_alpha_bar_range_check():
    sch = _schedule_from_betas([0.1, 0.2])
    with pytest.raises(ValueError):
        alpha_bar(sch, 3)
    with pytest.raises(ValueError):
        alpha_bar(sch, -1)


def test_posterior_degenerates_at_step_one():
    for kind in KINDS:
        post = posterior(build_schedule(kind, t=32), 1)
        assert (post.coef_x0, post.coef_xs, post.beta_tilde) == (1.0, 0.0, 0.0)


def test_posterior_hand_values():
    sch = _schedule_from_betas([0.1, 0.2])
    post = posterior(sch, 2)
    assert post.coef_x0 == pytest.approx(math.sqrt(0.9) * 0.2 / 0.28, rel=1e-12)
    assert post.coef_xs == pytest.approx(math.sqrt(0.8) * 0.1 / 0.28, rel=1e-12)
    assert post.beta_tilde == pytest.approx(0.1 / 0.28 * 0.2, rel=1e-12)
    assert post.coef_x0 == pytest.approx(0.6776, abs=1e-4)
    assert post.coef_xs == pytest.approx(0.3194, abs=1e-4)
    assert post.beta_tilde == pytest.approx(0.07143, abs=1e-5)


def test_posterior_linearity_on_equal_inputs():
    sch = build_schedule("truncated-linear", t=12)
    v = 1.7
    for s in range(1, 13):
        post = posterior(sch, s)
        mean = post.coef_x0 * v + post.coef_xs * v
        assert mean == pytest.approx((post.coef_x0 + post.coef_xs) * v, rel=1e-15)
        assert post.beta_tilde >= 0.0


def test_posterior_step_range():
    sch = build_schedule("truncated-linear", t=4)
    with pytest.raises(ValueError):
        posterior(sch, 0)
    with pytest.raises(ValueError):
        posterior(sch, 5)


def test_invalid_beta_reports_offending_step():
    with pytest.raises(ScheduleValidityError) as err:
        build_schedule("truncated-linear", t=4, a=0.0, b=0.0, tau=1.0)
    assert "beta_1" in str(err.value)


def test_linear_schedule_can_overflow_at_tiny_horizons():
    # the rescaled endpoints exceed 1 below t=20; the validity check owns that
    with pytest.raises(ScheduleValidityError):
        build_schedule("linear", t=8)
    build_schedule("linear", t=32)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        build_schedule("quadratic", t=8)


def test_schedule_dump_round_trips_through_csv(tmp_path):
    sch = build_schedule("truncated-linear", t=6)
    path = tmp_path / "schedule.csv"
    dump_schedule_csv(sch, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "s,beta,alpha,alpha_bar,coef_x0,coef_xs,beta_tilde"
    assert len(lines) == 7
    rows = schedule_rows(sch)
    for line, row in zip(lines[1:], rows):
        fields = line.split(",")
        assert int(fields[0]) == row["s"]
        assert float(fields[1]) == pytest.approx(row["beta"], rel=1e-11)
        assert float(fields[4]) == pytest.approx(row["coef_x0"], rel=1e-11)


def test_schedule_shapes_match_reference_ordering():
    """sqrt noisiest at the start; truncated-linear drops hardest mid-process."""
    t = 32
    schedules = {kind: build_schedule(kind, t=t) for kind in KINDS}
    first_bars = {kind: alpha_bar(s, 1) for kind, s in schedules.items()}
    assert min(first_bars, key=first_bars.get) == "sqrt"
    bars = np.concatenate([[1.0], schedules["truncated-linear"].alpha_bars])
    drop_step = int(np.argmax(bars[:-1] - bars[1:])) + 1
    assert t // 3 < drop_step <= (2 * t) // 3
