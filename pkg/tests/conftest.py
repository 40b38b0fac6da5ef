import numpy as np
import pytest

from seqdiff.config import TrainConfig


def finite_diff_grad(loss_fn, tensor, h=1e-5):
    """Central-difference gradient of a scalar loss w.r.t. one tensor.

    `loss_fn` must re-run the forward pass (reading tensor.data) and return
    a float; the tensor is restored element by element.
    """
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    gflat = grad.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + h
        f_plus = loss_fn()
        flat[j] = orig - h
        f_minus = loss_fn()
        flat[j] = orig
        gflat[j] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_rel_error(analytic, numeric):
    """Largest deviation, relative to the gradient scale of the tensor."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def desk_config(**overrides) -> TrainConfig:
    """Small-model profile used throughout the tests."""
    base = dict(dim=32, blocks=2, heads=2, t=8, batch_size=128, epochs=50,
                max_len=50, delta=0.001, eval_every=5, patience=3)
    base.update(overrides)
    return TrainConfig(**base).validate()


@pytest.fixture
def rng_seed():
    return 12345


def pytest_configure(config):
    np.seterr(over="raise", invalid="raise")
