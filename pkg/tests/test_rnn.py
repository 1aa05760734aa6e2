"""GRU autoregressive model: forward, BPTT, training, sampling, estimation."""

import math

import numpy as np
import pytest

from mcxeb import rnn
from mcxeb.circuit import sample_circuit
from mcxeb.errors import TrainingDivergenceError
from mcxeb.trajectory import InitialState, MeasurementRecord, batch_sample
from mcxeb.xeb import enumerate_record_probabilities


def zero_model(n_hidden=3, record_length=4):
    model = rnn.init_model(n_hidden, record_length, 0.0, seed=0)
    for name in rnn.PARAM_NAMES:
        getattr(model.params, name)[:] = 0.0
    return model


def small_model(n_hidden=3, record_length=4, seed=5):
    return rnn.init_model(n_hidden, record_length, 0.0, seed=seed)


class TestForward:
    def test_zero_parameters_give_uniform(self):
        model = zero_model()
        h = np.zeros(3)
        for x in ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)):
            _, y = rnn.forward_step(model, h, np.array(x))
            np.testing.assert_allclose(y, [0.5, 0.5], atol=1e-15)

    def test_deterministic(self):
        model = small_model()
        h = np.full(3, 0.3)
        x = np.array([1.0, 0.0])
        h1, y1 = rnn.forward_step(model, h, x)
        h2, y2 = rnn.forward_step(model, h, x)
        assert np.array_equal(h1, h2) and np.array_equal(y1, y2)

    def test_output_is_distribution(self):
        model = small_model()
        _, y = rnn.forward_step(model, np.zeros(3), np.array([0.0, 0.0]))
        assert np.all(y >= 0.0)
        assert abs(float(np.sum(y)) - 1.0) < 1e-12

    def test_hand_computed_cell(self):
        # independent scalar evaluation of the gate equations for Nh=1
        model = rnn.init_model(1, 1, 0.0, seed=9)
        p = model.params
        h0, x0 = 0.25, (1.0, 0.0)
        z = 1.0 / (1.0 + math.exp(-(p.w_iz[0, 0] * x0[0] + p.w_iz[0, 1] * x0[1]
                                    + p.w_hz[0, 0] * h0 + p.b_z[0])))
        r = 1.0 / (1.0 + math.exp(-(p.w_ir[0, 0] * x0[0] + p.w_ir[0, 1] * x0[1]
                                    + p.w_hr[0, 0] * h0 + p.b_r[0])))
        cand = math.tanh(p.w_in[0, 0] * x0[0] + p.w_in[0, 1] * x0[1]
                         + r * (p.w_hn[0, 0] * h0) + p.b_n[0])
        h_expected = (1.0 - z) * cand + z * h0
        logits = [p.w_out[0, 0] * h_expected + p.b_out[0],
                  p.w_out[1, 0] * h_expected + p.b_out[1]]
        shift = max(logits)
        exps = [math.exp(v - shift) for v in logits]
        y_expected = [e / sum(exps) for e in exps]
        h_got, y_got = rnn.forward_step(model, np.array([h0]), np.array(x0))
        assert h_got[0] == pytest.approx(h_expected, rel=1e-12)
        np.testing.assert_allclose(y_got, y_expected, rtol=1e-12)

    def test_nonfinite_hidden_rejected(self):
        model = small_model()
        with pytest.raises(TrainingDivergenceError):
            rnn.forward_step(model, np.array([np.nan, 0.0, 0.0]), np.array([0.0, 0.0]))


class TestLogProb:
    def test_normalization(self):
        model = small_model(record_length=6)
        probs = rnn.enumerate_model_distribution(model)
        assert abs(float(np.sum(probs)) - 1.0) < 1e-10

    def test_single_site_record(self):
        model = small_model(record_length=1)
        _, y = rnn.forward_step(model, np.zeros(3), np.array([0.0, 0.0]))
        for bit in (0, 1):
            lp = rnn.sequence_log_prob(model, MeasurementRecord((bit,)))
            assert lp == pytest.approx(math.log(y[bit]), rel=1e-12)

    def test_chain_rule_by_stepping(self):
        # oracle: replicate the autoregressive chain with forward_step
        model = small_model(record_length=3)
        bits = (1, 0, 1)
        h = np.zeros(3)
        x = np.array([0.0, 0.0])
        total = 0.0
        for bit in bits:
            h, y = rnn.forward_step(model, h, x)
            total += math.log(y[bit])
            x = np.array([1.0, 0.0]) if bit == 0 else np.array([0.0, 1.0])
        assert rnn.sequence_log_prob(model, MeasurementRecord(bits)) == pytest.approx(total, rel=1e-12)

    def test_length_checked(self):
        model = small_model(record_length=3)
        with pytest.raises(ValueError):
            rnn.sequence_log_prob(model, MeasurementRecord((0, 1)))


class TestGradients:
    def test_zero_model_gradcheck(self, rng):
        model = zero_model(n_hidden=2, record_length=3)
        batch = rng.integers(0, 2, size=(3, 3))
        assert rnn.gradient_check(model, batch) < 1e-6

    def test_random_model_gradcheck(self, rng):
        model = small_model(n_hidden=3, record_length=4)
        batch = rng.integers(0, 2, size=(4, 4))
        assert rnn.gradient_check(model, batch, epsilon_fd=1e-5) < 1e-4

    def test_gradient_step_decreases_loss(self, rng):
        model = small_model(n_hidden=4, record_length=4, seed=3)
        batch = rng.integers(0, 2, size=(8, 4))
        loss0, grads = rnn._forward_backward(model.params, batch, 0.0, None)
        for name, g in zip(rnn.PARAM_NAMES, grads):
            getattr(model.params, name)[...] -= 1e-3 * g
        loss1, _ = rnn._forward_backward(model.params, batch, 0.0, None)
        assert loss1 < loss0


class TestTraining:
    def config(self, m, **kw):
        base = dict(dataset_size=m, batch_size=8, validation_size=8, n_hidden=4,
                    dropout_rate=0.0, n_epochs=60, seed=1)
        base.update(kw)
        return rnn.TrainingConfig(**base)

    def test_degenerate_dataset_learns_certainty(self):
        dataset = [MeasurementRecord((0, 1, 1, 0))] * 64
        model, report = rnn.train(dataset, self.config(64, n_epochs=400))
        assert report.val_loss[report.best_epoch] < 0.01
        assert len(report.train_loss) == 400
        assert len(report.val_loss) == 400

    def test_deterministic_bit_for_bit(self):
        rng = np.random.default_rng(7)
        dataset = [MeasurementRecord(tuple(row)) for row in rng.integers(0, 2, size=(40, 3))]
        m1, r1 = rnn.train(dataset, self.config(40, n_epochs=20))
        m2, r2 = rnn.train(dataset, self.config(40, n_epochs=20))
        for name in rnn.PARAM_NAMES:
            assert np.array_equal(getattr(m1.params, name), getattr(m2.params, name))
        assert r1.train_loss == r2.train_loss
        assert r1.best_epoch == r2.best_epoch

    def test_learns_two_site_distribution(self):
        # DERIVED target: enumerated record distribution of a small circuit
        c = sample_circuit(4, 0.03, seed=172)
        assert c.num_measurements == 2
        target = enumerate_record_probabilities(c, InitialState.ZERO)
        records, _ = batch_sample(c, InitialState.ZERO, 4000, seed=5)
        cfg = self.config(4000, batch_size=200, validation_size=400, n_hidden=6,
                          n_epochs=200)
        model, _ = rnn.train(records, cfg)
        learned = rnn.enumerate_model_distribution(model)
        tv = 0.5 * float(np.sum(np.abs(learned - target)))
        assert tv < 0.02

    def test_dataset_size_validated(self):
        dataset = [MeasurementRecord((0, 1))] * 10
        with pytest.raises(ValueError):
            rnn.train(dataset, self.config(11))
        with pytest.raises(ValueError):
            rnn.train(dataset, self.config(10, batch_size=8, validation_size=8))


class TestSampling:
    def test_forced_deterministic_output(self):
        model = zero_model(record_length=5)
        model.params.b_out[:] = (50.0, -50.0)  # y ~ (1, 0) at every site
        records = rnn.sample(model, 20, seed=3)
        assert all(rec.bits == (0,) * 5 for rec in records)

    def test_record_length(self):
        model = small_model(record_length=7)
        records = rnn.sample(model, 10, seed=3)
        assert all(len(rec) == 7 for rec in records)

    def test_deterministic_given_seed(self):
        model = small_model(record_length=4)
        assert rnn.sample(model, 10, seed=3) == rnn.sample(model, 10, seed=3)

    def test_sampler_matches_evaluator_chisquare(self):
        from scipy import stats

        model = small_model(n_hidden=3, record_length=4, seed=11)
        probs = rnn.enumerate_model_distribution(model)
        n_samples = 100_000
        records = rnn.sample(model, n_samples, seed=17)
        counts = np.zeros(16)
        for rec in records:
            idx = 0
            for b in rec.bits:
                idx = (idx << 1) | b
            counts[idx] += 1
        result = stats.chisquare(counts, probs * n_samples)
        assert result.pvalue > 1e-4


class TestChiRnn:
    def test_identical_models_exact_mode(self):
        model = small_model(record_length=5)
        est = rnn.chi_rnn(model, model, n_sample=None)
        assert est.chi == 1.0
        assert est.estimator == "rnn"

    def test_finite_mode_approaches_exact_mode(self):
        rho = small_model(record_length=4, seed=1)
        sigma = small_model(record_length=4, seed=2)
        exact = rnn.chi_rnn(rho, sigma, n_sample=None).chi
        finite = rnn.chi_rnn(rho, sigma, n_sample=20000, seed=3).chi
        assert abs(finite - exact) < 0.05

    def test_record_length_mismatch(self):
        with pytest.raises(ValueError):
            rnn.chi_rnn(small_model(record_length=3), small_model(record_length=4), None)


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path):
        model = small_model(n_hidden=5, record_length=6, seed=21)
        path = tmp_path / "model.json"
        rnn.save_model(path, model, seed=21, extra={"best_epoch": 3})
        back = rnn.load_model(path)
        for name in rnn.PARAM_NAMES:
            assert np.array_equal(getattr(back.params, name), getattr(model.params, name))
        assert back.record_length == 6
        assert back.dropout_rate == model.dropout_rate
        assert back.mode == "eval"

    def test_bad_format_rejected(self, tmp_path):
        from mcxeb.errors import FormatError

        path = tmp_path / "bad.json"
        path.write_text('{"format": "other"}')
        with pytest.raises(FormatError):
            rnn.load_model(path)

    def test_training_csv(self, tmp_path):
        report = rnn.LossReport(train_loss=[0.5, 0.4], val_loss=[0.6, 0.55], best_epoch=1)
        path = tmp_path / "training.csv"
        rnn.write_training_csv(path, report)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,train_nll,val_nll"
        assert lines[2].startswith("1,0.4,")
