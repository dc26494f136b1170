import numpy as np

from hashvpr.experiments import AblationConfig, label_recall, run_hashing_ablation, two_stage_vs_float
from hashvpr.synthetic import clustered_places


def test_label_recall():
    ranked = [np.array([1, 2, 3]), np.array([3, 2, 1]), np.array([4, 4, 4])]
    assert label_recall(ranked, [1, 1, 1], ns=(1, 3)) == {1: 1 / 3, 3: 2 / 3}


def test_two_stage_with_all_candidates_equals_float():
    places = clustered_places(n_places=5, per_place=10, float_dim=64, code_dim=32, seed=1)
    rep = two_stage_vs_float(places, k=1000, per_place_queries=2)
    assert rep.two_stage_recall == rep.float_recall


def test_ablation_is_seeded():
    cfg = AblationConfig(steps=5)
    assert run_hashing_ablation(0, cfg, ("direct",)) == run_hashing_ablation(0, cfg, ("direct",))
