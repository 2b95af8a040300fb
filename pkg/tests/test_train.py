import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import fedfuse.train as train_mod
from conftest import TINY, toy_dataset
from fedfuse.data.corpus import NOT, OFF, LabeledInstance
from fedfuse.errors import EmptyDataset
from fedfuse.evaluation import macro_f1
from fedfuse.model import init_base, predict_proba, tokenize
from fedfuse.train import (
    AdamState, EarlyStopping, TrainingConfig, TrainLog, adam_step, finetune_fused, finetune_subsample,
    lr_at_step, train_local, warmup_steps,
)

CFG = TrainingConfig(learning_rate=1e-2, epochs=3, batch_size=8)


def test_lr_vectors():
    cfg = TrainingConfig(learning_rate=1.0)
    assert warmup_steps(100, cfg) == 10
    assert lr_at_step(10, 100, cfg) == 1.0
    assert lr_at_step(5, 100, cfg) == 0.5
    assert lr_at_step(3, 100, cfg) == pytest.approx(0.3, abs=1e-15)
    assert lr_at_step(80, 100, cfg) == 1.0
    assert warmup_steps(30, cfg) == 3
    assert warmup_steps(1, cfg) == 1


def test_linear_decay_option():
    cfg = TrainingConfig(learning_rate=1.0, lr_decay="linear")
    assert lr_at_step(10, 100, cfg) == 1.0
    assert lr_at_step(55, 100, cfg) == pytest.approx(0.5)
    assert lr_at_step(100, 100, cfg) == 0.0


@given(st.integers(1, 5000), st.floats(0.01, 0.99))
def test_lr_never_exceeds_base(total, frac):
    cfg = TrainingConfig(learning_rate=2.0, warmup_fraction=frac)
    w = warmup_steps(total, cfg)
    rates = [lr_at_step(s, total, cfg) for s in (1, w, total)]
    assert all(0 < r <= 2.0 for r in rates) and rates[1] == 2.0


def test_config_validation():
    for bad in (dict(warmup_fraction=0), dict(patience=0), dict(eval_split_fraction=1.0),
                dict(finetune_fraction=0), dict(lr_decay="cosine"), dict(eval_every=0)):
        with pytest.raises(ValueError):
            TrainingConfig(**bad)


def test_early_stopping_sequence():
    stopper = EarlyStopping(3)
    out = [stopper.update(x) for x in [1.0, 1.1, 1.2, 1.3]]
    assert out == [(True, False), (False, False), (False, False), (False, True)]
    stopper = EarlyStopping(2)
    # equal loss is not an improvement; a later improvement resets the count
    assert [stopper.update(x)[1] for x in [1.0, 1.0, 0.9, 0.95, 0.9]] == [False, False, False, False, True]


def test_adam_first_step_is_lr_sign():
    params = {"w": np.array([1.0, -1.0, 0.0], dtype=np.float32)}
    state = AdamState.zeros_like(params)
    adam_step(params, {"w": np.array([0.5, -2.0, 0.0])}, state, lr=0.1)
    np.testing.assert_allclose(params["w"], [0.9, -0.9, 0.0], atol=1e-6)
    assert params["w"].dtype == np.float32


def test_zero_epochs_returns_base():
    base = init_base(TINY, 0)
    out, log = train_local(base, toy_dataset(), TrainingConfig(epochs=0))
    assert out is base and log.stop_reason == "completed_epochs" and not log.records


def test_empty_dataset():
    with pytest.raises(EmptyDataset):
        train_local(init_base(TINY, 0), [], CFG)


def test_training_learns_and_is_deterministic():
    ds = toy_dataset(n_train=300, n_test=60)
    base = init_base(TINY, 0)
    a, log_a = train_local(base, ds, CFG.with_seed(5))
    b, log_b = train_local(base, ds, CFG.with_seed(5))
    assert a.params.equals(b.params) and log_a.to_jsonl() == log_b.to_jsonl()
    assert a.params.base_id == base.params.base_id
    probs = predict_proba(a, [tokenize(x.text, TINY) for x in ds.test])
    assert macro_f1([x.label for x in ds.test], probs.argmax(axis=1)) > 0.9
    c, _ = train_local(base, ds, CFG.with_seed(6))
    assert not c.params.equals(a.params)


def test_early_stop_restores_best(monkeypatch):
    scripted = iter([1.0, 0.5, 0.9, 0.8, 0.7, 0.1, 0.1])
    snapshots = []

    def fake_eval(params, arch, seqs, labels, batch_size=256):
        snapshots.append({k: v.copy() for k, v in params.items()})
        return next(scripted)

    monkeypatch.setattr(train_mod, "evaluate_loss", fake_eval)
    out, log = train_local(init_base(TINY, 0), toy_dataset(), TrainingConfig(epochs=3, eval_every=1, patience=3))
    assert log.stop_reason == "early_stopped"
    assert len(log.records) == 5 and log.best_step == 2 and log.best_eval_loss == 0.5
    for name, arr in snapshots[1].items():
        assert out.params[name].tobytes() == arr.tobytes()


def test_trainlog_roundtrip(tmp_path):
    log = TrainLog([{"step": 1, "eval_loss": 0.5}], "early_stopped", 0.5, 1)
    path = log.write(tmp_path / "t.jsonl")
    back = TrainLog.read(path)
    assert back == log
    assert path.read_text().splitlines()[-1].startswith('{"best_eval_loss"')


def _rows(n_off, n_not):
    return [LabeledInstance(f"r{i}", f"text {i}", OFF if i < n_off else NOT, "x") for i in range(n_off + n_not)]


def test_finetune_subsample():
    rows = _rows(200, 800)
    sub = finetune_subsample(rows, TrainingConfig(seed=3))
    assert len(sub) == 200 and sum(x.label for x in sub) == 40
    assert [x.id for x in sub] == [x.id for x in finetune_subsample(rows, TrainingConfig(seed=3))]
    assert {x.id for x in finetune_subsample(rows, TrainingConfig(finetune_fraction=1.0))} == {x.id for x in rows}


def test_finetune_fused_trains_on_subsample():
    ds = toy_dataset(n_train=100)
    out, log = finetune_fused(init_base(TINY, 0), ds, CFG.with_seed(1))
    assert log.records and out.params.all_finite()
    steps_per_epoch = math.ceil(16 / CFG.batch_size)  # 20 rows minus the eval split
    assert log.records[0]["step"] == steps_per_epoch
