import csv
import os

import numpy as np
import pytest

from eye_purify import constants, exceptions
from eye_purify.autodiff import Tensor, square_sum
from eye_purify.loss_network import LossConfig, PurificationObjective
from eye_purify.masks import disc_mask
from eye_purify.optimizers import (
    Adam, Sample, TrainConfig, adam_step, init_state, load_corpus, projected_lbfgs, smooth_curve,
    train_transform, white_noise_image,
)
from eye_purify.optimizers.training import BatchStream
from eye_purify.transform_net import build_transform_net, load_model

from eye_purify.test.conftest import synthetic_eye, write_pair


def quadratic(target):
    target = Tensor(np.asarray(target, dtype=np.float64))
    return lambda t: square_sum(t - target)


# -- projected L-BFGS --

def test_lbfgs_solves_box_constrained_quadratic():
    target = np.array([[[-40.0, 12.5, 300.0], [200.0, 0.0, 255.0]]])
    image, reports = projected_lbfgs(quadratic(target), np.full(target.shape, 100.0), max_iter=50,
                                     dtype=np.float64)
    assert np.allclose(image, np.clip(target, 0, 255), atol=1e-4)
    assert reports[0].iteration == 0
    assert len(reports) < 50


def test_lbfgs_objective_never_increases():
    rng = np.random.default_rng(0)
    scales = Tensor(rng.uniform(0.1, 10.0, (6, 6, 3)))
    target = Tensor(rng.uniform(-50, 300, (6, 6, 3)))
    objective = lambda t: square_sum((t - target) * scales)  # noqa: E731
    image, reports = projected_lbfgs(objective, white_noise_image(6, 6, seed=1), max_iter=30, dtype=np.float64)
    values = [r.objective for r in reports]
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert image.min() >= 0 and image.max() <= 255


def test_lbfgs_zero_iterations_returns_clipped_init():
    init = np.array([[[-5.0, 20.0, 400.0]]], dtype=np.float32)
    image, reports = projected_lbfgs(quadratic(np.zeros((1, 1, 3))), init, max_iter=0)
    assert np.array_equal(image, [[[0.0, 20.0, 255.0]]])
    assert len(reports) == 1


def test_lbfgs_reports_last_good_iterate_on_nan():
    calls = []

    def objective(t):
        calls.append(1)
        loss = square_sum(t)
        return loss if len(calls) == 1 else loss * float('nan')

    init = np.full((2, 2, 3), 7.0)
    with pytest.raises(exceptions.NumericalError) as info:
        projected_lbfgs(objective, init, max_iter=5, dtype=np.float64)
    assert info.value.exit_code == constants.EXIT_NUMERIC
    assert np.array_equal(info.value.last_iterate, init)


def test_lbfgs_rejects_bad_memory():
    with pytest.raises(exceptions.ConfigurationError):
        projected_lbfgs(quadratic(np.zeros((1, 1, 3))), np.zeros((1, 1, 3)), memory=0)


def test_lbfgs_on_purification_objective(loss_net, eye_image, style_image, eye_mask):
    objective = PurificationObjective(loss_net, LossConfig(), style_image, eye_mask, eye_image, eye_mask)
    image, reports = projected_lbfgs(objective, white_noise_image(32, 32, seed=0), max_iter=8)
    assert image.shape == eye_image.shape
    assert reports[-1].objective < reports[0].objective
    row = reports[-1].as_row()
    assert len(row) == len(constants.LOSS_CURVE_HEADER)
    assert np.isclose(row[1], row[2] + row[3] + row[4], rtol=1e-4)


def test_white_noise_is_seeded_and_in_range():
    a, b = white_noise_image(5, 4, seed=3), white_noise_image(5, 4, seed=3)
    assert np.array_equal(a, b)
    assert a.shape == (5, 4, 3) and a.min() >= 0 and a.max() <= 255


# -- Adam --

def test_adam_first_step_moves_by_learning_rate():
    params, state = [np.array([1.0, -1.0])], init_state([np.zeros(2)])
    new, state = adam_step(params, [np.array([0.5, -2.0])], state, lr=0.1)
    assert np.allclose(new[0], [0.9, -0.9])
    assert state['t'] == 1
    assert np.array_equal(params[0], [1.0, -1.0])


def test_adam_minimizes_quadratic():
    p = Tensor(np.array([10.0, -4.0]), requires_grad=True)
    optimizer = Adam([p], lr=0.1)
    for _ in range(500):
        optimizer.zero_grad()
        square_sum(p - 3.0).backward()
        optimizer.step()
    assert np.allclose(p.data, 3.0, atol=0.05)


def test_adam_rejects_bad_learning_rate():
    with pytest.raises(exceptions.ConfigurationError):
        Adam([], lr=0)


# -- training --

def test_train_config_validation():
    with pytest.raises(exceptions.ConfigurationError):
        TrainConfig(batch_size=0)
    with pytest.raises(exceptions.ConfigurationError):
        TrainConfig(image_size=8)
    with pytest.raises(exceptions.ConfigurationError):
        TrainConfig(learning_rate=-1)


def test_smooth_curve_trailing_mean():
    assert np.allclose(smooth_curve([1, 2, 3, 4], 2), [1, 1.5, 2.5, 3.5])
    assert np.allclose(smooth_curve([5, 1], 1), [5, 1])


def test_batch_stream_covers_every_sample_each_epoch():
    stream = BatchStream(list(range(5)), 5, seed=0)
    assert sorted(stream.next()) == list(range(5))
    assert sorted(stream.next()) == list(range(5))


def test_load_corpus_lists_all_unpaired_images(tmp_path):
    write_pair(tmp_path, 'a', synthetic_eye(seed=0), disc_mask(32, 32))
    from eye_purify.image_io import write_image
    write_image(synthetic_eye(seed=1), str(tmp_path / 'b.png'))
    write_image(synthetic_eye(seed=2), str(tmp_path / 'c.png'))
    with pytest.raises(exceptions.MaskError) as info:
        load_corpus(str(tmp_path), 32)
    assert 'b.png' in info.value.message and 'c.png' in info.value.message


def test_load_corpus_repairs_and_resizes(tmp_path):
    write_pair(tmp_path, 'a', synthetic_eye(40), disc_mask(40, 40, pupil_radius=0))
    samples = load_corpus(str(tmp_path), 32)
    assert [s.name for s in samples] == ['a.png']
    assert samples[0].image.shape == (32, 32, 3)
    assert samples[0].mask.shape == (32, 32)
    assert samples[0].mask.pupil.max() > 0


def test_train_transform_writes_model_and_curve(tmp_path, loss_net):
    corpus = [Sample('a', synthetic_eye(seed=0), disc_mask(32, 32)),
              Sample('b', synthetic_eye(seed=1), disc_mask(32, 32, center=(15.0, 14.0)))]
    cfg = TrainConfig(batch_size=2, iterations=3, learning_rate=1e-3, image_size=32, log_every=1)
    net = build_transform_net(cfg.preset, widths=(4, 8, 8), num_blocks=1)
    model_path, curve_path = str(tmp_path / 'net.epnn'), str(tmp_path / 'curve.csv')
    _, curve = train_transform(corpus, synthetic_eye(seed=5), disc_mask(32, 32), cfg, loss_net,
                               out=model_path, curve_path=curve_path, net=net)
    assert [row[0] for row in curve] == [0, 1, 2]
    with open(curve_path) as fp:
        rows = list(csv.reader(fp))
    assert tuple(rows[0]) == constants.LOSS_CURVE_HEADER
    assert len(rows) == 4
    loaded = load_model(model_path)
    assert loaded.widths == (4, 8, 8)


def test_train_transform_nothing_written_on_bad_corpus(tmp_path, loss_net):
    (tmp_path / 'corpus').mkdir()
    from eye_purify.image_io import write_image
    write_image(synthetic_eye(), str(tmp_path / 'corpus' / 'x.png'))
    cfg = TrainConfig(iterations=1, image_size=32)
    with pytest.raises(exceptions.MaskError):
        train_transform(str(tmp_path / 'corpus'), synthetic_eye(), disc_mask(32, 32), cfg, loss_net,
                        out=str(tmp_path / 'net.epnn'))
    assert not os.path.exists(str(tmp_path / 'net.epnn'))


@pytest.mark.slow
def test_training_reduces_loss(loss_net):
    corpus = [Sample('a', synthetic_eye(seed=0), disc_mask(32, 32))]
    cfg = TrainConfig(batch_size=1, iterations=40, learning_rate=1e-2, image_size=32, log_every=1)
    net = build_transform_net(cfg.preset, widths=(4, 8, 8), num_blocks=1, dropout_p=0.0)
    _, curve = train_transform(corpus, synthetic_eye(seed=5), disc_mask(32, 32), cfg, loss_net, net=net)
    totals = smooth_curve([row[1] for row in curve], 5)
    assert totals[-1] < totals[4]


def test_adam_first_step_ignores_gradient_scale():
    params, grads = [np.array([1.0, -2.0, 0.5])], [np.array([0.3, -1.5, 4.0])]
    small, _ = adam_step(params, grads, init_state(params), lr=0.01)
    large, _ = adam_step(params, [grads[0] * 1e3], init_state(params), lr=0.01)
    assert np.allclose(small[0] - params[0], large[0] - params[0], rtol=0, atol=1e-9)
    assert np.allclose(np.abs(small[0] - params[0]), 0.01, atol=1e-9)


def test_training_runs_one_forward_per_update(loss_net):
    corpus = [Sample('a', synthetic_eye(seed=0), disc_mask(32, 32))]
    style = synthetic_eye(seed=5)
    cfg = TrainConfig(batch_size=1, iterations=0, image_size=32)
    fresh = build_transform_net(cfg.preset, widths=(4, 8, 8), num_blocks=1, seed=2)
    net = build_transform_net(cfg.preset, widths=(4, 8, 8), num_blocks=1, seed=2)
    _, curve = train_transform(corpus, style, disc_mask(32, 32), cfg, loss_net, net=net)
    assert curve == []
    for name, stats in net.running.items():
        assert np.array_equal(stats.mean, fresh.running[name].mean)
        assert np.array_equal(stats.var, fresh.running[name].var)

    calls = []
    forward = net.forward

    def counting_forward(*args, **kwargs):
        calls.append(kwargs.get('training'))
        return forward(*args, **kwargs)

    net.forward = counting_forward
    cfg = TrainConfig(batch_size=1, iterations=3, image_size=32, log_every=2)
    _, curve = train_transform(corpus, style, disc_mask(32, 32), cfg, loss_net, net=net)
    assert calls == [True, True, True]
    assert [row[0] for row in curve] == [0, 2]


def test_training_is_deterministic_for_a_seed(tmp_path, loss_net):
    corpus = [Sample('a', synthetic_eye(seed=0), disc_mask(32, 32)),
              Sample('b', synthetic_eye(seed=1), disc_mask(32, 32)),
              Sample('c', synthetic_eye(seed=2), disc_mask(32, 32))]
    cfg = TrainConfig(batch_size=2, iterations=3, learning_rate=1e-3, image_size=32, seed=7)
    contents = []
    for run in range(2):
        path = str(tmp_path / 'net{}.epnn'.format(run))
        net = build_transform_net(cfg.preset, widths=(4, 8, 8), num_blocks=1, seed=cfg.seed)
        train_transform(corpus, synthetic_eye(seed=5), disc_mask(32, 32), cfg, loss_net, out=path, net=net)
        with open(path, 'rb') as fp:
            contents.append(fp.read())
    assert contents[0] == contents[1]


@pytest.mark.slow
def test_lbfgs_500_iterations_is_monotone(loss_net):
    content, style = synthetic_eye(64, seed=0), synthetic_eye(64, seed=1)
    mask = disc_mask(64, 64)
    objective = PurificationObjective(loss_net, LossConfig(), style, mask, content, mask)
    image, reports = projected_lbfgs(objective, white_noise_image(64, 64, seed=0), max_iter=500)
    values = [r.objective for r in reports]
    assert len(values) > 1
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert [r.iteration for r in reports] == sorted(set(r.iteration for r in reports))
    assert image.min() >= 0 and image.max() <= 255


@pytest.mark.slow
def test_training_halves_smoothed_loss_on_toy_corpus(loss_net):
    corpus = [Sample('eye{}'.format(i), synthetic_eye(64, seed=i),
                     disc_mask(64, 64, center=(31.5 + (i % 4) - 1.5, 31.5 + (i // 4) - 1.5)))
              for i in range(16)]
    cfg = TrainConfig(batch_size=4, iterations=200, learning_rate=1e-4, image_size=64, log_every=1, seed=0)
    _, curve = train_transform(corpus, synthetic_eye(64, seed=99), disc_mask(64, 64), cfg, loss_net)
    totals = [row[1] for row in curve]
    assert len(totals) == 200
    assert smooth_curve(totals, 10)[-1] <= 0.5 * totals[0]
