import json
import math

import numpy as np
import pytest

from bgfd.errors import ConfigError, DivergenceError, ShapeError, UsageError
from bgfd.harness.config import ModelConfig, config_from_dict, load_config
from bgfd.harness.model import build_model
from bgfd.harness.train import batch_order, evaluate, evaluate_counts, train
from bgfd.metrics import ConfusionCounts, compute_metrics, confusion

ALL_OFF = dict(dfc=False, gndd=False, fdf=False)


def short(iterations=3, **toggles):
    cfg = ModelConfig()
    if toggles:
        cfg = cfg.with_toggles(**toggles)
    cfg.optim.iterations = iterations
    cfg.optim.batch_size = 2
    return cfg


class TestModel:
    def test_scales_and_logits(self, tiny_dataset):
        m = build_model(ModelConfig())
        out = m.forward(tiny_dataset.images_a[:2], tiny_dataset.images_b[:2])
        assert [f.shape[2] for f in out.features_a] == [16, 8, 4, 2]
        assert [f.shape[1] for f in out.features_b] == [16, 32, 64, 128]
        assert out.logits.shape == (2, 2, 64, 64)
        assert out.mi is None

    def test_baseline_has_no_optional_modules(self):
        m = build_model(ModelConfig().with_toggles(**ALL_OFF))
        assert m.gam == [] and m.dfc == []
        names = {n.split(".")[0] for n, _ in m.named_parameters()}
        assert names == {"encoder", "fuse", "lateral", "head1", "head2", "classifier"}

    @pytest.mark.parametrize("seed", range(20))
    def test_finite_logits(self, seed):
        rng = np.random.default_rng(seed)
        m = build_model(ModelConfig(seed=seed))
        x = rng.standard_normal((2, 3, 64, 64))
        out = m.forward(x, x + 0.1 * rng.standard_normal(x.shape), training=seed % 2 == 0)
        assert np.isfinite(out.logits.data).all()

    def test_difference_stack_channels(self, rng):
        m = build_model(ModelConfig())
        for s, c in enumerate(m.cfg.channels):
            fa = rng.standard_normal((1, c, 4, 4))
            from bgfd.core import Tensor
            assert m.difference_stack(Tensor(fa), Tensor(fa), s).shape == (1, 3 * c, 4, 4)

    def test_eval_idempotent_and_noise_free(self, tiny_dataset):
        m = build_model(ModelConfig())
        m.schedule.f_t = 10**6  # full noise weight if it were applied
        xa, xb = tiny_dataset.images_a[:2], tiny_dataset.images_b[:2]
        a = m.forward(xa, xb).logits.data
        b = m.forward(xa, xb).logits.data
        assert a.tobytes() == b.tobytes()
        assert m.schedule.f_t == 10**6

    def test_rejects_bad_input(self, rng):
        m = build_model(ModelConfig())
        with pytest.raises(ShapeError):
            m.forward(rng.standard_normal((1, 3, 48, 48)), rng.standard_normal((1, 3, 48, 48)))
        with pytest.raises(ShapeError):
            m.forward(rng.standard_normal((1, 3, 64, 64)), rng.standard_normal((2, 3, 64, 64)))

    def test_inconsistent_channels(self):
        with pytest.raises(ConfigError):
            build_model(config_from_dict({"channels": [16, 32, 64]}))
        with pytest.raises(ConfigError):
            build_model(config_from_dict({"fdf.gam.r": 5}))


class TestTrain:
    def test_initial_loss_near_ln2(self, tiny_dataset):
        r = train(short(1), tiny_dataset)
        assert abs(r.report.seg_loss[0] - math.log(2)) <= 0.15

    def test_report_shape(self, tiny_dataset):
        r = train(short(3), tiny_dataset)
        rep = r.report
        assert len(rep.seg_loss) == len(rep.mi_loss) == len(rep.total_loss) == 3
        assert rep.forward_passes == 3 == r.model.schedule.f_t
        assert rep.counts.total == 4 * 64 * 64
        d = rep.to_dict()
        assert "wall_time" not in d and "wall_time" in rep.to_dict(include_timing=True)
        json.dumps(d)

    def test_mi_only_with_gndd_and_fdf(self, tiny_dataset):
        on = train(short(2), tiny_dataset).report
        assert on.total_loss[0] == pytest.approx(on.seg_loss[0] + on.mi_loss[0], abs=1e-12)
        off = train(short(2, dfc=True, gndd=False, fdf=True), tiny_dataset).report
        assert off.mi_loss == [0.0, 0.0]

    def test_deterministic(self, tiny_dataset):
        a = train(short(3), tiny_dataset).report.to_dict()
        b = train(short(3), tiny_dataset).report.to_dict()
        assert json.dumps(a) == json.dumps(b)

    def test_gndd_off_consumes_no_noise(self, tiny_dataset):
        r = train(short(3, dfc=True, gndd=False, fdf=True), tiny_dataset)
        fresh = np.random.default_rng(r.model.cfg.gndd.seed)
        assert r.model.noise_rng.bit_generator.state == fresh.bit_generator.state

    def test_empty_dataset(self, tiny_dataset):
        with pytest.raises(UsageError):
            train(short(1), tiny_dataset.subset([]))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_iteration(self, tiny_dataset):
        bad = tiny_dataset.subset([0, 1])
        cfg = short(2, **ALL_OFF)
        cfg.optim.lr = 1e300
        with pytest.raises(DivergenceError) as info:
            train(cfg, bad)
        assert info.value.iteration == 1

    def test_batch_order_covers_epochs(self):
        batches = list(batch_order(5, 2, 5, np.random.default_rng(0)))
        flat = np.concatenate(batches)
        assert all(len(b) == 2 for b in batches)
        assert sorted(flat[:5]) == list(range(5)) and sorted(flat[5:10]) == list(range(5))


class TestEvaluate:
    def test_micro_average(self, tiny_dataset):
        m = build_model(short(1))
        counts = evaluate_counts(m, tiny_dataset, batch_size=3)
        pred = m.predict(tiny_dataset.images_a, tiny_dataset.images_b)
        manual = sum((confusion(p, g) for p, g in zip(pred, tiny_dataset.labels)), ConfusionCounts())
        assert counts == manual
        assert evaluate(m, tiny_dataset) == compute_metrics(manual)

    def test_all_negative(self, tiny_dataset, monkeypatch):
        m = build_model(short(1))
        monkeypatch.setattr(m, "predict", lambda a, b: np.zeros((len(a), 64, 64), np.uint8))
        neg = tiny_dataset.subset([0])
        neg.labels = np.zeros_like(neg.labels)
        assert evaluate(m, neg).oa == 1.0

    def test_size_mismatch(self, tiny_dataset):
        from bgfd.data import Dataset, SynthConfig, generate_dataset
        small = Dataset.from_pairs(generate_dataset(SynthConfig(count=1, image_size=40)))
        with pytest.raises(ShapeError):
            evaluate(build_model(short(1)), small)


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg.gndd.lam == 1.0 and cfg.fdf.bins == 32 and cfg.fdf.mi_channels == 128
        assert cfg.optim.lr == 1e-3 and cfg.optim.weight_decay == 0.01 and cfg.optim.method == "adamw"

    def test_yaml_dotted_and_nested(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("gndd.lambda: 0.5\nfdf:\n  gam: {raw_gates: true}\noptim.iterations: 7\nsynth:\n  count: 3\n  test: {gain: [1.5, 2.0]}\n")
        cfg = load_config(path)
        assert cfg.gndd.lam == 0.5 and cfg.fdf.gam.raw_gates and cfg.optim.iterations == 7
        assert cfg.synth == {"count": 3} and cfg.synth_test == {"gain": [1.5, 2.0]}
        assert cfg.to_dict()["gndd"]["lambda"] == 0.5

    def test_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seed": 4, "dfc": {"enabled": False}}))
        cfg = load_config(path)
        assert cfg.seed == 4 and not cfg.dfc.enabled

    @pytest.mark.parametrize("raw", [{"bogus": 1}, {"gndd": {"sigma": 1}}, {"optim.method": "sgd"},
                                     {"gndd.lambda": -1}, {"synth": {"gain": [2, 1]}}, {"optim": 3}])
    def test_errors(self, raw):
        with pytest.raises(ConfigError):
            config_from_dict(raw)

    def test_unparseable(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("a: [1, 2\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_fingerprint(self):
        a = ModelConfig()
        assert a.fingerprint() == ModelConfig().fingerprint()
        assert a.fingerprint() != a.with_toggles(dfc=False, gndd=True, fdf=True).fingerprint()
