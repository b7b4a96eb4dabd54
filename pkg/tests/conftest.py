import numpy as np
import pytest

from matchgraph.descriptors import Collection, DescriptorSet
from matchgraph.gmm import GmmModel


def make_collection(n_images=4, dim=3, counts=None, seed=0):
    rng = np.random.default_rng(seed)
    counts = counts or [5] * n_images
    images = [
        DescriptorSet(
            image_id=i,
            dim=dim,
            rows=rng.normal(size=(counts[i], dim)).astype(np.float32),
        )
        for i in range(n_images)
    ]
    return Collection(images)


@pytest.fixture
def collection():
    return make_collection()


@pytest.fixture
def unit_gmm():
    """Single standard-normal component in 1-D."""
    return GmmModel(weights=np.array([1.0]), means=np.array([[0.0]]), variances=np.array([[1.0]]))


def random_gmm(rng, k=2, dim=2):
    w = rng.random(k) + 0.5
    w /= w.sum()
    return GmmModel(
        weights=w,
        means=rng.normal(0.0, 2.0, (k, dim)),
        variances=rng.random((k, dim)) + 0.5,
    )
