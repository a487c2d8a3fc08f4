import math
import warnings

import numpy as np
import pytest
from scipy import stats

from photongen.distributions import LevelTable, bose_einstein_pmf
from photongen.inversion import invert_statistics
from photongen.modsim import (
    AliasTable,
    ClickStream,
    CountHistogram,
    CountMoments,
    DetectorParams,
    ExponentialDelay,
    HistogramDelay,
    StreamingRequired,
    TimelineConfig,
    TimingHierarchyWarning,
    apply_detector,
    count_windows,
    g2_estimate,
    generate_level_sequence,
    run_simulation,
    simulate_arrivals,
    split_balanced,
    triangular_g2,
    window_counts,
)
from photongen.modsim import io, sampling
from photongen.modsim.timeline import make_rng

IDEAL = DetectorParams.ideal()


def poisson_chi2_pvalue(counts: np.ndarray, mean: float) -> float:
    """Chi-square goodness of fit of integer counts to Poisson(mean), sparse bins pooled."""
    n = counts.size
    k_max = int(stats.poisson.ppf(1 - 1e-9, mean)) + 1
    observed = np.bincount(np.minimum(counts, k_max), minlength=k_max + 1).astype(float)
    expected = stats.poisson.pmf(np.arange(k_max + 1), mean) * n
    expected[-1] += stats.poisson.sf(k_max, mean) * n
    # pool bins with fewer than 5 expected counts into their neighbours
    obs_b, exp_b, acc_o, acc_e = [], [], 0.0, 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= 5:
            obs_b.append(acc_o)
            exp_b.append(acc_e)
            acc_o = acc_e = 0.0
    obs_b[-1] += acc_o
    exp_b[-1] += acc_e
    exp_b = np.array(exp_b) * (n / sum(exp_b))
    return float(stats.chisquare(obs_b, exp_b).pvalue)


class TestTimeline:
    def test_defaults_and_counts(self):
        cfg = TimelineConfig(total_time=2.5)
        assert cfg.windows_per_period == 100
        assert cfg.n_periods == 2500
        assert cfg.n_windows == 250_000
        assert cfg.duration == pytest.approx(2.5)

    def test_partial_period_dropped(self):
        assert TimelineConfig(total_time=0.0025).n_periods == 2

    def test_period_must_be_multiple_of_window(self):
        with pytest.raises(ValueError):
            TimelineConfig(total_time=1.0, window_tau=3e-6, mod_period=1e-5)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            TimelineConfig(total_time=1.0, window_tau=0.0)
        with pytest.raises(ValueError):
            TimelineConfig(total_time=-1.0)

    def test_hierarchy_warning(self):
        cfg = TimelineConfig(total_time=1.0, window_tau=1e-7, mod_period=1e-6)
        with pytest.warns(TimingHierarchyWarning):
            problems = cfg.check_hierarchy(23e-9)
        assert len(problems) == 1

    def test_default_hierarchy_is_clean(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert TimelineConfig(total_time=10.0).check_hierarchy(23e-9) == []

    def test_rng_streams_are_independent_and_reproducible(self):
        a = make_rng(1, 0, 5).random(4)
        np.testing.assert_array_equal(a, make_rng(1, 0, 5).random(4))
        assert not np.array_equal(a, make_rng(1, 0, 6).random(4))
        assert not np.array_equal(a, make_rng(2, 0, 5).random(4))


class TestDetectorParams:
    def test_defaults(self):
        p = DetectorParams()
        assert p.dead_time == 23e-9 and p.afterpulse_prob == 0.0235
        assert p.twilight_constant == 2e-9 and p.dark_rate == 0.0
        assert isinstance(p.afterpulse_delay, ExponentialDelay)
        assert p.afterpulse_delay.mean == 100e-9
        assert not p.is_ideal and IDEAL.is_ideal

    @pytest.mark.parametrize("kw", [{"dead_time": -1.0}, {"afterpulse_prob": 1.0}, {"dark_rate": -2.0}])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            DetectorParams(**kw)


class TestHistogramDelay:
    def test_from_file_and_sampling(self, tmp_path):
        path = tmp_path / "delay.csv"
        path.write_text("# afterpulse delays\nlo,hi,weight\n0,1e-7,3\n1e-7,3e-7,1\n")
        h = HistogramDelay.from_file(path)
        assert h.edges == (0.0, 1e-7, 3e-7)
        x = h.sample(np.random.default_rng(0), 200_000)
        assert x.min() >= 0 and x.max() < 3e-7
        assert np.mean(x < 1e-7) == pytest.approx(0.75, abs=0.005)

    def test_validation(self):
        with pytest.raises(ValueError):
            HistogramDelay((0.0, 1.0), (1.0, 2.0))
        with pytest.raises(ValueError):
            HistogramDelay((0.0, 1.0), (0.0,))


class TestLevelSequence:
    def test_single_level(self):
        t = LevelTable.single(3.0, 0)
        assert np.all(generate_level_sequence(t, 1000, 7) == 0)

    def test_uniform_within_multinomial_bands(self):
        t = LevelTable(3.0, np.full(128, 1 / 128))
        n = 10**6
        seq = generate_level_sequence(t, n, 11)
        freq = np.bincount(seq, minlength=128)
        sigma = math.sqrt(n * (1 / 128) * (127 / 128))
        assert np.all(np.abs(freq - n / 128) < 4 * sigma)

    def test_two_level_program(self):
        p = np.zeros(128)
        p[0], p[127] = 6.6e-4, 1 - 6.6e-4
        seq = generate_level_sequence(LevelTable(60.0, p), 10**6, 3)
        assert set(np.unique(seq)) <= {0, 127}
        hits = int(np.sum(seq == 0))
        assert abs(hits - 660) < 4 * math.sqrt(660)

    def test_alias_table_matches_weights(self):
        w = np.array([0.5, 0.0, 0.2, 0.3])
        x = AliasTable(w).sample(np.random.default_rng(5), 400_000)
        freq = np.bincount(x, minlength=4) / x.size
        assert freq[1] == 0.0
        np.testing.assert_allclose(freq, w, atol=4 * math.sqrt(0.25 / x.size))

    def test_alias_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            AliasTable([0.0, 0.0])
        with pytest.raises(ValueError):
            AliasTable([-1.0, 2.0])

    def test_needs_a_period(self):
        with pytest.raises(ValueError):
            generate_level_sequence(LevelTable.single(1.0), 0, 1)


class TestArrivals:
    def test_constant_level_is_poisson(self):
        cfg = TimelineConfig(total_time=2.0)
        t = LevelTable.single(1.0)
        seq = generate_level_sequence(t, cfg.n_periods, 1)
        ev = simulate_arrivals(seq, t, cfg, 1)
        assert np.all(np.diff(ev) >= 0)
        counts = window_counts(ev, cfg)
        assert counts.size == 200_000
        assert poisson_chi2_pvalue(counts, 1.0) > 0.001

    def test_mean_count_of_a_mixture(self):
        res = invert_statistics(bose_einstein_pmf(1.0, 10), 15.0)
        t = res.table
        cfg = TimelineConfig(total_time=20.0)
        seq = generate_level_sequence(t, cfg.n_periods, 2)
        ev = simulate_arrivals(seq, t, cfg, 2)
        wpp = cfg.windows_per_period
        # period totals are mixed Poisson with mean wpp*W
        var_period = wpp * t.mean() + wpp**2 * t.variance()
        sigma = math.sqrt(cfg.n_periods * var_period)
        assert abs(ev.size - t.mean() * cfg.n_windows) < 4 * sigma

    def test_events_stay_in_their_period(self):
        p = np.zeros(128)
        p[0], p[127] = 0.5, 0.5
        t = LevelTable(20.0, p)
        cfg = TimelineConfig(total_time=0.3)
        seq = generate_level_sequence(t, cfg.n_periods, 4)
        ev = simulate_arrivals(seq, t, cfg, 4)
        per_period = np.bincount((ev / cfg.mod_period).astype(int), minlength=cfg.n_periods)
        high = per_period[seq == 0]
        low = per_period[seq == 127]
        assert high.mean() > 1000 and low.mean() < 5

    def test_memory_cap(self, monkeypatch):
        monkeypatch.setattr(sampling, "MAX_EVENTS_IN_MEMORY", 10)
        cfg = TimelineConfig(total_time=0.01)
        t = LevelTable.single(1.0)
        with pytest.raises(StreamingRequired):
            simulate_arrivals(generate_level_sequence(t, cfg.n_periods, 1), t, cfg, 1)


def poisson_events(rate, duration, seed):
    rng = np.random.default_rng(seed)
    return np.sort(rng.random(rng.poisson(rate * duration)) * duration)


class TestDetector:
    def test_transparent(self):
        ev = poisson_events(1e6, 0.01, 0)
        clicks = apply_detector(ev, IDEAL, 0.01, seed=1)
        np.testing.assert_array_equal(clicks.timestamps, ev)

    def test_dead_time_gap_invariant(self):
        ev = poisson_events(5e6, 0.02, 1)
        clicks = apply_detector(ev, DetectorParams(), 0.02, seed=2)
        gaps = np.diff(clicks.timestamps)
        # twilight pulses sit exactly at t + dead; the subtraction rounds
        assert gaps.min() >= 23e-9 - 1e-15

    @pytest.mark.parametrize("rate", [5e4, 1.5e6])
    def test_non_paralyzable_rate(self, rate):
        T = 4e5 / rate
        ev = poisson_events(rate, T, 3)
        p = DetectorParams(dead_time=23e-9, afterpulse_prob=0.0, twilight_constant=0.0)
        n = len(apply_detector(ev, p, T, seed=4))
        expected = ev.size / (1 + ev.size / T * 23e-9)
        assert abs(n - expected) < 3 * math.sqrt(expected)

    def test_afterpulses_add_clicks(self):
        T = 4.0
        ev = poisson_events(5e4, T, 5)
        base = DetectorParams(afterpulse_prob=0.0, twilight_constant=0.0)
        with_ap = DetectorParams(afterpulse_prob=0.2, twilight_constant=0.0)
        n0 = len(apply_detector(ev, base, T, seed=6))
        n1 = len(apply_detector(ev, with_ap, T, seed=6))
        # geometric cascade 1/(1-p) minus the few cancelled by photon clicks
        assert n1 / n0 == pytest.approx(1 / 0.8, rel=0.01)

    def test_afterpulse_delay_follows_histogram(self):
        T = 2.0
        ev = poisson_events(1e3, T, 8)
        h = HistogramDelay((200e-9, 300e-9), (1.0,))
        p = DetectorParams(dead_time=20e-9, afterpulse_prob=0.5, afterpulse_delay=h, twilight_constant=0.0)
        clicks = apply_detector(ev, p, T, seed=9).timestamps
        gaps = np.diff(clicks)
        # with p = 1/2 half of all clicks are afterpulses, each following its parent
        in_band = (gaps >= 220e-9 - 1e-15) & (gaps <= 320e-9 + 1e-15)
        assert in_band.mean() == pytest.approx(0.5, abs=0.03)
        # photons at 1 kcps almost never land within 220 ns of a click
        assert np.sum(gaps < 220e-9) <= 3

    def test_twilight_pulses_follow_dead_time(self):
        T = 0.05
        ev = poisson_events(2e6, T, 10)
        p = DetectorParams(dead_time=23e-9, afterpulse_prob=0.0, twilight_constant=1e-8)
        clicks = apply_detector(ev, p, T, seed=11).timestamps
        gaps = np.diff(clicks)
        at_dead = np.isclose(gaps, 23e-9, rtol=0, atol=1e-15)
        # twilight probability q feeds the rate it depends on: q (1 - q) = c * r0
        r0 = ev.size / T / (1 + ev.size / T * 23e-9)
        q = (1 - math.sqrt(1 - 4e-8 * r0)) / 2
        assert at_dead.mean() == pytest.approx(q, abs=0.003)

    def test_runaway_twilight_rejected(self):
        with pytest.raises(ValueError, match="twilight"):
            DetectorParams(dead_time=23e-9, twilight_constant=2e-7)

    def test_dark_counts(self):
        T = 10.0
        p = DetectorParams(dead_time=23e-9, afterpulse_prob=0.0, twilight_constant=0.0, dark_rate=1000.0)
        n = len(apply_detector(np.zeros(0), p, T, seed=12))
        assert abs(n - 10_000) < 4 * 100

    def test_unsorted_events_rejected(self):
        with pytest.raises(ValueError):
            apply_detector(np.array([2e-3, 1e-3]), IDEAL, 1.0, seed=1)

    def test_seeded(self):
        ev = poisson_events(1e6, 0.01, 13)
        a = apply_detector(ev, DetectorParams(), 0.01, seed=5).timestamps
        b = apply_detector(ev, DetectorParams(), 0.01, seed=5).timestamps
        np.testing.assert_array_equal(a, b)


class TestCounting:
    def test_clickstream_validation(self):
        with pytest.raises(ValueError):
            ClickStream(np.array([1e-3, 1e-3 + 1e-9]), 1.0, dead_time=23e-9)
        with pytest.raises(ValueError):
            ClickStream(np.array([2.0]), 1.0)

    def test_empty_stream(self):
        cfg = TimelineConfig(total_time=1e-3)
        h = count_windows(ClickStream(np.zeros(0), 1e-3), cfg)
        assert h.as_dict() == {0: 100}

    def test_one_click_per_window(self):
        cfg = TimelineConfig(total_time=1e-3)
        t = (np.arange(100) + 0.5) * 1e-5
        assert count_windows(ClickStream(t, 1e-3), cfg).as_dict() == {1: 100}

    def test_histogram_merge(self):
        a = CountHistogram.from_window_counts(np.array([0, 1, 1]))
        b = CountHistogram.from_window_counts(np.array([3]))
        c = CountHistogram.from_window_counts(np.array([0, 0]))
        assert ((a + b) + c).as_dict() == (a + (b + c)).as_dict() == {0: 3, 1: 2, 3: 1}
        assert (a + b).window_count == 4
        with pytest.raises(ValueError):
            CountHistogram(np.array([1, 2]), 4)

    def test_histogram_pmf(self):
        p = CountHistogram(np.array([1, 3]), 4).to_pmf()
        np.testing.assert_allclose(p.probs, [0.25, 0.75])

    def test_split_conserves_events(self):
        ev = poisson_events(1e5, 1.0, 14)
        a, b = split_balanced(ev, seed=3)
        assert a.size + b.size == ev.size
        np.testing.assert_array_equal(np.sort(np.concatenate((a, b))), ev)

    def test_split_stream_type(self):
        s = ClickStream(np.array([0.1, 0.2, 0.3]), 1.0)
        a, b = split_balanced(s, seed=1)
        assert isinstance(a, ClickStream) and len(a) + len(b) == 3

    def test_split_thins_poisson(self):
        cfg = TimelineConfig(total_time=2.0)
        t = LevelTable.single(2.0)
        ev = simulate_arrivals(generate_level_sequence(t, cfg.n_periods, 5), t, cfg, 5)
        a, _ = split_balanced(ev, seed=5)
        assert poisson_chi2_pvalue(window_counts(a, cfg), 1.0) > 0.001

    def test_moments_exact_merge(self):
        rng = np.random.default_rng(0)
        ca, cb = rng.poisson(3, 1000), rng.poisson(3, 1000)
        whole = CountMoments()
        whole.add(ca, cb)
        parts = CountMoments()
        parts.add(ca[:300], cb[:300])
        parts.add(ca[300:], cb[300:])
        assert whole == parts
        assert whole.correlation() == pytest.approx(np.corrcoef(ca, cb)[0, 1], abs=1e-12)

    def test_moments_degenerate(self):
        m = CountMoments()
        assert math.isnan(m.correlation())
        m.add(np.ones(5, int), np.arange(5))
        assert math.isnan(m.correlation())


def brute_force_coincidences(a, b, lo, hi):
    d = b[None, :] - a[:, None]
    return int(np.sum((d >= lo) & (d < hi)))


class TestG2Estimate:
    def test_coincidences_match_brute_force(self):
        rng = np.random.default_rng(1)
        a = np.sort(rng.random(400) * 1e-3)
        b = np.sort(rng.random(400) * 1e-3)
        cfg = TimelineConfig(total_time=1e-3, window_tau=1e-5, mod_period=1e-4, coincidence_window=2e-6)
        delays = np.array([-5e-6, 0.0, 3e-6])
        tr = g2_estimate(ClickStream(a, 1e-3), ClickStream(b, 1e-3), cfg, delays)
        for d, c in zip(delays, tr.coincidences):
            assert c == brute_force_coincidences(a, b, d - 1e-6, d + 1e-6)

    def test_poisson_source_is_flat(self):
        cfg = TimelineConfig(total_time=20.0, coincidence_window=1e-6)
        res = run_simulation(LevelTable.single(1.0), cfg, IDEAL, 3, split=True, keep_clicks=True)
        delays = np.linspace(-2e-3, 2e-3, 9)
        tr = g2_estimate(res.clicks, res.clicks_b, cfg, delays)
        assert np.all(np.abs(tr.g2 - 1) < 4 * tr.stderr)

    def test_matches_sequence_moments(self):
        # given the realised levels, only Poisson counting noise remains
        res_inv = invert_statistics(bose_einstein_pmf(1.0, 10), 15.0)
        cfg = TimelineConfig(total_time=20.0, coincidence_window=1e-6)
        res = run_simulation(res_inv.table, cfg, IDEAL, 4, split=True, keep_clicks=True)
        w = res_inv.table.levels[res.sequence]
        g2_seq = w.size * np.sum(w**2) / np.sum(w) ** 2
        tr = g2_estimate(res.clicks, res.clicks_b, cfg, [0.0])
        assert abs(tr.g2[0] - g2_seq) < 3 * tr.stderr[0]
        # and the realised moments sit near the table's own 1 + var/mean^2
        table_g2 = 1 + res_inv.table.variance() / res_inv.table.mean() ** 2
        assert g2_seq == pytest.approx(table_g2, abs=0.1)

    def test_triangular_model(self):
        d = np.array([-2e-3, -1e-3, -5e-4, 0.0, 5e-4, 1e-3])
        np.testing.assert_allclose(triangular_g2(d, 3.0, 1e-3), [1, 1, 2, 3, 2, 1])

    def test_needs_equal_durations(self):
        cfg = TimelineConfig(total_time=1.0)
        with pytest.raises(ValueError):
            g2_estimate(ClickStream(np.zeros(0), 1.0), ClickStream(np.zeros(0), 2.0), cfg, [0.0])


class TestPipeline:
    def test_thread_count_does_not_matter(self):
        res = invert_statistics(bose_einstein_pmf(2.0, 10), 15.0)
        cfg = TimelineConfig(total_time=1.2)
        det = DetectorParams(dark_rate=500.0)
        r1 = run_simulation(res.table, cfg, det, 99, split=True, keep_clicks=True, threads=1)
        r4 = run_simulation(res.table, cfg, det, 99, split=True, keep_clicks=True, threads=4)
        np.testing.assert_array_equal(r1.clicks.timestamps, r4.clicks.timestamps)
        np.testing.assert_array_equal(r1.clicks_b.timestamps, r4.clicks_b.timestamps)
        np.testing.assert_array_equal(r1.histogram.counts_per_n, r4.histogram.counts_per_n)
        assert r1.moments == r4.moments

    def test_seed_changes_result(self):
        cfg = TimelineConfig(total_time=0.5)
        t = LevelTable.single(1.0)
        a = run_simulation(t, cfg, IDEAL, 1).histogram.counts_per_n
        b = run_simulation(t, cfg, IDEAL, 2).histogram.counts_per_n
        assert not np.array_equal(a, b)

    def test_window_total(self):
        cfg = TimelineConfig(total_time=0.77)
        r = run_simulation(LevelTable.single(1.0), cfg, DetectorParams(), 1)
        assert r.histogram.window_count == cfg.n_windows == 77_000

    def test_clicks_match_histogram(self):
        cfg = TimelineConfig(total_time=0.3)
        r = run_simulation(LevelTable.single(2.0), cfg, DetectorParams(), 5, keep_clicks=True)
        assert count_windows(r.clicks, cfg).as_dict() == r.histogram.as_dict()
        n = np.arange(r.histogram.counts_per_n.size)
        assert int(np.dot(n, r.histogram.counts_per_n)) == len(r.clicks)

    def test_zero_periods(self):
        r = run_simulation(LevelTable.single(1.0), TimelineConfig(total_time=0.0), IDEAL, 1, split=True)
        assert r.histogram.window_count == 0 and r.histogram_b.window_count == 0


class TestClickIO:
    def test_round_trip(self, tmp_path):
        cfg = TimelineConfig(total_time=0.2)
        r = run_simulation(LevelTable.single(2.0), cfg, DetectorParams(), 7, keep_clicks=True)
        path = tmp_path / "a.bin"
        io.write_clicks(path, r.clicks)
        raw = path.read_bytes()
        assert raw[:8] == io.CLICK_MAGIC
        assert len(raw) == 16 + 8 * len(r.clicks)
        back = io.read_clicks(path)
        assert back.duration == pytest.approx(0.2, abs=1e-12)
        np.testing.assert_allclose(back.timestamps, r.clicks.timestamps, rtol=0, atol=0.5e-12)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"NOTCLICK" + bytes(8))
        with pytest.raises(ValueError):
            io.read_clicks(path)

    def test_csv_writers(self, tmp_path):
        h = CountHistogram(np.array([1, 3]), 4)
        io.write_histogram_csv(tmp_path / "h.csv", h)
        assert (tmp_path / "h.csv").read_text() == "n,count,probability\n0,1,0.25\n1,3,0.75\n"
        assert io.fmt(0.1) == "0.10000000000000001"
