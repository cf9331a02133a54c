"""Build a throwaway study store for the frontend integration test.

Usage: python3 make_study.py <store_dir>
"""

import sys

import numpy as np

from noduleforge.dataset import ImagePatch
from noduleforge.service import StudyStore
from noduleforge.study import compose_study

rng = np.random.default_rng(7)


def pool(n, label, provenance):
    return [
        ImagePatch(np.clip(rng.normal(0, 0.3, (56, 56)), -1, 1), provenance,
                   f"{provenance[:1]}{(label or 'x')[:1]}{i:04d}", label=label)
        for i in range(n)
    ]


real = pool(150, "benign", "real") + pool(150, "malignant", "real")
generated = {
    "benign": pool(120, "benign", "generated"),
    "malignant": pool(120, "malignant", "generated"),
    "mixed": pool(120, None, "generated"),
}
plan, patches = compose_study(real, generated, seed=1)
StudyStore.initialize(sys.argv[1], "s1", plan, patches, owner_token="tok")
print("ok")
