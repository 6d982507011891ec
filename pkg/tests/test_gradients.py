import pytest

from helpers import LAYER_CHECKS

SEEDS = range(20)


@pytest.mark.parametrize("layer", sorted(LAYER_CHECKS))
def test_layer_matches_central_differences(layer):
    worst = max(LAYER_CHECKS[layer](seed) for seed in SEEDS)
    assert worst < 1e-3, f"{layer}: worst relative error {worst:.3g}"
