import itertools

import numpy as np
import pytest
from scipy.special import logsumexp

from rfstrack.components import (
    BernoulliTrack,
    Origin,
    PoissonIntensity,
    detection_log_weights,
    init_bernoulli_from_measurement,
    update_bernoulli_detection,
    update_bernoulli_misdetection,
)
from rfstrack.exceptions import ConfigurationError
from rfstrack.filters import (
    FilterConfig,
    FilterModels,
    PmbmDensity,
    Track,
    Variant,
    _scan_outcomes,
    estimate,
    predict,
    reduce_to_pmb,
    run_filter,
    update,
)
from rfstrack.gaussian_models import (
    GaussianDensity,
    MeasurementModel,
    NoClutter,
    UniformClutter,
    constant_velocity,
    kalman_predict,
    kalman_update,
    position_sensor,
)
from rfstrack.simulation import preset, simulate


def _two_track_density(sensor_dim=2):
    t0 = BernoulliTrack(0.9, GaussianDensity([0.0, 0.0], np.eye(2)), 0)
    t1 = BernoulliTrack(0.6, GaussianDensity([2.0, 1.0], 2 * np.eye(2)), 1)
    ppp = PoissonIntensity([0.5], [[1.0, 0.0]], [4 * np.eye(2)])
    return PmbmDensity(
        ppp, (Track(0, (t0,)), Track(1, (t1,))), np.zeros(1), np.zeros((1, 2), dtype=int), None, 2
    )


def _sensor():
    return MeasurementModel(np.eye(2), 0.5 * np.eye(2), 0.8, UniformClutter(2.0, (-10, -10), (10, 10)))


def _models(sensor):
    return FilterModels(constant_velocity(), sensor, lambda k: PoissonIntensity.empty(2))


def test_variant_parsing():
    assert Variant.parse("a-mb") is Variant.A_MB and Variant.A_MB.adaptive and Variant.A_MB.multi_bernoulli
    assert not Variant.PMBM.adaptive and not Variant.PMBM.multi_bernoulli
    with pytest.raises(ConfigurationError):
        Variant.parse("GLMB")
    with pytest.raises(ConfigurationError):
        FilterConfig(estimator_threshold=1.0)


def test_update_matches_exhaustive_hypothesis_enumeration():
    d = _two_track_density()
    sensor = _sensor()
    Z = np.array([[0.3, -0.2], [1.5, 1.2]])
    cfg = FilterConfig(Variant.PMBM, gate_gamma=1e6, n_h_max=1000)
    out = update(d, Z, cfg, _models(sensor), k=1)

    tracks = [t.hypotheses[0] for t in d.tracks]
    new = [init_bernoulli_from_measurement(d.ppp, z, sensor)[1] for z in Z]
    expected = []
    # Each measurement goes to track 0, track 1 or "new"; tracks take at most one.
    for choice in itertools.product([0, 1, None], repeat=len(Z)):
        used = [c for c in choice if c is not None]
        if len(used) != len(set(used)):
            continue
        lw = 0.0
        for j, c in enumerate(choice):
            lw += new[j] if c is None else update_bernoulli_detection(tracks[c], Z[j], sensor)[1]
        for t_idx, b in enumerate(tracks):
            if t_idx not in used:
                lw += update_bernoulli_misdetection(b, sensor)[1]
        expected.append(lw)
    expected = np.sort(np.array(expected) - logsumexp(expected))
    assert np.allclose(np.sort(out.log_weights), expected, atol=1e-10)
    assert logsumexp(out.log_weights) == pytest.approx(0.0, abs=1e-12)


def test_batched_outcomes_match_component_functions():
    rng = np.random.default_rng(4)
    sensor = position_sensor(np.eye(2), 0.85, UniformClutter(5.0, (0, 0), (100, 100)))
    bs = []
    for _ in range(6):
        A = rng.standard_normal((4, 4))
        bs.append(BernoulliTrack(float(rng.uniform(0.05, 1.0)), GaussianDensity(rng.uniform(0, 10, 4), A @ A.T + np.eye(4))))
    Z = rng.uniform(0, 10, size=(5, 2))
    scan = _scan_outcomes(bs, Z, sensor, gamma=1e9)
    for l, b in enumerate(bs):
        missed, miss_logw = update_bernoulli_misdetection(b, sensor)
        assert scan.miss_logw[l] == pytest.approx(miss_logw, abs=1e-12)
        assert scan.missed(b, l).r == pytest.approx(missed.r, abs=1e-14)
        det = detection_log_weights(b, Z, sensor)
        assert np.allclose(-scan.costs[:, l], det - miss_logw, atol=1e-9)
        for j, z in enumerate(Z):
            post, _ = update_bernoulli_detection(b, z, sensor)
            got = scan.detected(b, l, j)
            assert np.allclose(got.density.mean, post.density.mean) and np.allclose(got.density.cov, post.density.cov)


def test_single_target_reduces_to_kalman_filter():
    motion = constant_velocity(ps=1.0)
    sensor = position_sensor(np.eye(2), 1.0, NoClutter())
    prior = GaussianDensity([10.0, 1.0, 20.0, -1.0], np.diag([25.0, 1.0, 25.0, 1.0]))
    birth = lambda k: PoissonIntensity([1.0], [prior.mean], [prior.cov]) if k == 1 else PoissonIntensity.empty(4)
    models = FilterModels(motion, sensor, birth)
    rng = np.random.default_rng(0)
    x = np.array([11.0, 1.0, 19.0, -1.0])
    scans = []
    for _ in range(15):
        scans.append((x[[0, 2]] + rng.standard_normal(2))[None])
        x = motion.F @ x
    estimates, diag = run_filter(FilterConfig(Variant.PMBM), models, scans)
    kf = prior
    for k, Z in enumerate(scans, start=1):
        if k > 1:
            kf = kalman_predict(kf, motion)
        kf, _ = kalman_update(kf, Z[0], sensor)
        assert len(estimates[k - 1]) == 1
        assert np.allclose(estimates[k - 1][0][1], kf.mean, atol=1e-8)
    assert max(diag.hypothesis_counts) == 1


def _benchmark_run(variant, steps=12, n_h_max=200, seed=3):
    cfg = preset("paper_sim")
    data = simulate(cfg, seed)
    fc = FilterConfig(variant, adaptive=cfg.adaptive, n_h_max=n_h_max)
    models = cfg.filter_models()
    d = PmbmDensity.empty(4)
    prev = None
    states = []
    for k, Z in enumerate(data.measurements[:steps], start=1):
        d = predict(d, fc, models, k, prev)
        d = update(d, Z, fc, models, k)
        if fc.variant.multi_bernoulli:
            d = reduce_to_pmb(d, fc.prune_bernoulli)
        states.append(d)
        prev = Z
    return data, fc, states


@pytest.mark.parametrize("variant", ["PMBM", "A-MBM"])
def test_hypotheses_normalised_and_capped(variant):
    _, fc, states = _benchmark_run(variant, n_h_max=20)
    for d in states:
        assert logsumexp(d.log_weights) == pytest.approx(0.0, abs=1e-9)
        assert 1 <= d.n_hypotheses <= 20
        assert d.selectors.shape == (d.n_hypotheses, len(d.tracks))
        for t, col in zip(d.tracks, d.selectors.T):
            assert col.max() < len(t.hypotheses)
            assert all(0 <= b.r <= 1 for b in t.hypotheses)
        # Unique selector rows after duplicate merging.
        assert len({tuple(r) for r in d.selectors}) == d.n_hypotheses


def test_pmb_reduction_preserves_existence_mass():
    _, fc, states = _benchmark_run("PMBM", steps=6)
    d = states[-1]
    w = np.exp(d.log_weights)
    reduced = reduce_to_pmb(d)
    assert reduced.n_hypotheses == 1
    kept = {t.track_id: t.hypotheses[0].r for t in reduced.tracks}
    for t_idx, t in enumerate(d.tracks):
        col = d.selectors[:, t_idx]
        r = sum(wh * t.hypotheses[a].r for wh, a in zip(w, col) if a >= 0)
        if t.track_id in kept:
            assert kept[t.track_id] == pytest.approx(min(r, 1.0), abs=1e-12)
        else:
            assert r < 1e-5


def test_adaptive_variants_never_use_the_ppp():
    _, _, states = _benchmark_run("A-MBM", steps=8)
    for d in states:
        assert len(d.ppp) == 0
        for t in d.tracks:
            assert all(b.origin is Origin.ADAPTIVE_BIRTH for b in t.hypotheses)


def test_adaptive_births_match_rule():
    data, fc, states = _benchmark_run("A-MB", steps=3)
    models = preset("paper_sim").filter_models()
    d = states[1]
    Z = data.measurements[1]
    pred = predict(d, fc, models, 3, Z)
    born = [t.hypotheses[0] for t in pred.tracks[len(d.tracks):]]
    free = 1.0 - d.assoc_prob
    expected = np.minimum(0.1, free / free.sum() * 0.1)
    assert len(born) == int((expected >= fc.prune_bernoulli).sum())
    got = {b.origin_measurement: b.r for b in born}
    for j, r in got.items():
        assert r == pytest.approx(expected[j], abs=1e-15)
        assert born[0].birth_time == 3


def test_measurement_order_does_not_matter():
    cfg = preset("paper_sim")
    data = simulate(cfg, 11)
    rng = np.random.default_rng(0)
    shuffled = [Z[rng.permutation(len(Z))] for Z in data.measurements[:10]]
    for variant in ("PMB", "A-MB"):
        fc = FilterConfig(variant, adaptive=cfg.adaptive)
        a, _ = run_filter(fc, cfg.filter_models(), data.measurements[:10])
        b, _ = run_filter(fc, cfg.filter_models(), shuffled)
        for ea, eb in zip(a, b):
            sa = np.array(sorted(tuple(m) for _, m in ea))
            sb = np.array(sorted(tuple(m) for _, m in eb))
            assert sa.shape == sb.shape and np.allclose(sa, sb, atol=1e-7)


def test_adaptive_variant_needs_config():
    models = preset("paper_sim").filter_models()
    with pytest.raises(ConfigurationError):
        run_filter(FilterConfig("A-MB"), models, [np.zeros((0, 2))])


def test_empty_scans_give_empty_estimates():
    cfg = preset("paper_sim")
    est, diag = run_filter(FilterConfig("PMBM"), cfg.filter_models(), [np.zeros((0, 2))] * 3)
    assert est == [[], [], []] and len(diag.step_seconds) == 3


def test_estimator_uses_threshold():
    b = BernoulliTrack(0.5, GaussianDensity(np.zeros(4), np.eye(4)), 7)
    d = PmbmDensity(PoissonIntensity.empty(4), (Track(7, (b,)),), np.zeros(1), np.zeros((1, 1), dtype=int))
    assert [i for i, _ in estimate(d, FilterConfig())] == [7]
    assert estimate(d, FilterConfig(estimator_threshold=0.6)) == []
