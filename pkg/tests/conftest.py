import numpy as np
import pytest

from archprint import (
    LabelSpace,
    ZooConfig,
    build_templates,
    collect_cube,
    generate_zoo,
    group_by_architecture,
)


@pytest.fixture(scope="session")
def small_config():
    return ZooConfig(
        n_architectures=4,
        profiling_variants=3,
        holdout_variants=2,
        n_probes=20,
        label_space=LabelSpace.of_size(8),
        seed=1234,
    )


@pytest.fixture(scope="session")
def small_zoo(small_config):
    return generate_zoo(small_config)


@pytest.fixture(scope="session")
def small_cube(small_config, small_zoo):
    profiling, _ = small_zoo
    return collect_cube(
        group_by_architecture(profiling),
        probes=range(small_config.n_probes),
        top_n=small_config.top_n,
        label_space=small_config.label_space,
    )


@pytest.fixture(scope="session")
def small_template(small_cube):
    return build_templates(small_cube)


def random_cube_values(rng, n_probes, n_archs, variants, n_labels):
    """Random valid cube contents: sparse response-like vectors."""
    values = np.zeros((n_probes, n_archs, variants, n_labels))
    for i in range(n_probes):
        for j in range(n_archs):
            for p in range(variants):
                support = rng.choice(
                    n_labels, size=min(5, n_labels), replace=False
                )
                probs = rng.random(len(support))
                probs /= probs.sum() * rng.uniform(1.0, 2.0)
                values[i, j, p, support] = probs
    return values
