import numpy as np
import pytest
from hypothesis import given, strategies as st

from parity_distill.boolean_fourier import CapacityError, parity
from parity_distill.parity_data import ParityTask, enumerate_all, sample_batch, spawn_streams


def test_task_defaults_and_validation():
    t = ParityTask(10, 3)
    assert t.support == (1, 2, 3)
    assert t.index.tolist() == [0, 1, 2]
    assert ParityTask(10, 2, (7, 3)).support == (3, 7)
    for bad in [dict(d=5, k=5), dict(d=5, k=2, support=(1, 1)), dict(d=5, k=2, support=(0, 2)),
                dict(d=5, k=2, support=(1, 6)), dict(d=5, k=2, support=(1, 2, 3))]:
        with pytest.raises(ValueError):
            ParityTask(**bad)


def test_from_config():
    t = ParityTask.from_config({"d": 12, "k": 2, "support": [4, 9]})
    assert t.support == (4, 9) and t.d == 12


def test_single_sample_deterministic():
    t = ParityTask(8, 3)
    a = sample_batch(t, 1, np.random.default_rng(5))
    b = sample_batch(t, 1, np.random.default_rng(5))
    assert np.array_equal(a.x, b.x) and a.y[0] == parity(a.x[0], t.support)


def test_label_mean_near_zero():
    t = ParityTask(10, 2)
    B = 10_000
    y = sample_batch(t, B, np.random.default_rng(0)).y
    assert abs(y.mean()) < 3 / np.sqrt(B)


def test_disjoint_streams_differ():
    # collision chance for two independent 4x10 batches is 2^-40
    a, b = spawn_streams(7, 2)
    t = ParityTask(10, 2)
    assert not np.array_equal(sample_batch(t, 4, a).x, sample_batch(t, 4, b).x)


def test_batch_size_must_be_positive():
    with pytest.raises(ValueError):
        sample_batch(ParityTask(4, 2), 0, np.random.default_rng(0))


def test_enumerate_small():
    xs = np.concatenate([b.x for b in enumerate_all(ParityTask(2, 1))])
    assert xs.tolist() == [[-1, -1], [1, -1], [-1, 1], [1, 1]]


def test_enumerate_label_balance_and_length():
    ys = np.concatenate([b.y for b in enumerate_all(ParityTask(4, 3, (1, 2, 3)))])
    assert ys.size == 16 and (ys == 1).sum() == 8
    # a full-cube support is excluded by k < d; k = 2 on d = 3 splits the cube the same way
    assert (np.concatenate([b.y for b in enumerate_all(ParityTask(3, 2))]) == 1).sum() == 4
    assert sum(len(b.y) for b in enumerate_all(ParityTask(16, 4))) == 65536


def test_enumerate_capacity():
    with pytest.raises(CapacityError):
        next(enumerate_all(ParityTask(25, 2)))


@given(st.integers(2, 30), st.data())
def test_labels_always_correct(d, data):
    k = data.draw(st.integers(1, d - 1))
    S = tuple(data.draw(st.permutations(range(1, d + 1)))[:k])
    t = ParityTask(d, k, S)
    seed = data.draw(st.integers(0, 2**31 - 1))
    batch = sample_batch(t, 25, np.random.default_rng(seed))
    assert set(np.unique(batch.x)) <= {-1.0, 1.0}
    assert np.array_equal(batch.y, np.prod(batch.x[:, [s - 1 for s in S]], axis=1))


@given(st.integers(0, 2**31 - 1))
def test_seed_determinism_bytes(seed):
    t = ParityTask(12, 3)
    a = sample_batch(t, 50, np.random.default_rng(seed))
    b = sample_batch(t, 50, np.random.default_rng(seed))
    assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()
