import numpy as np
import pytest

from noduleforge.dataset import ImagePatch


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_patches(n, label, seed, provenance="real"):
    rng = np.random.default_rng(seed)
    return [
        ImagePatch(np.clip(rng.normal(0.0, 0.3, (56, 56)), -1, 1),
                   provenance=provenance,
                   source_id=f"{provenance[:1]}-{label or 'x'}-{seed}-{i:04d}",
                   label=label)
        for i in range(n)
    ]


@pytest.fixture
def small_real_pool():
    return (random_patches(120, "benign", 10)
            + random_patches(120, "malignant", 11))


@pytest.fixture
def generated_pools():
    return {
        "benign": random_patches(120, "benign", 20, provenance="generated"),
        "malignant": random_patches(120, "malignant", 21, provenance="generated"),
        "mixed": random_patches(120, None, 22, provenance="generated"),
    }
