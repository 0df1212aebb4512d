import json

import numpy as np
import pytest

import stratclone


def test_nuclear_norm_of_diagonal():
    assert stratclone.nuclear_norm(np.diag([3.0, 4.0])) == pytest.approx(7.0, abs=1e-12)


def test_singular_values_match_numpy():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(7, 4))
    np.testing.assert_allclose(stratclone.singular_values(a), np.linalg.svd(a, compute_uv=False), rtol=1e-10)


def test_nuclear_norm_grad_is_u_vt():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(6, 3))
    u, _, vt = np.linalg.svd(a, full_matrices=False)
    np.testing.assert_allclose(stratclone.nuclear_norm_grad(a), u @ vt, atol=1e-10)


def test_aer_loss_is_negative_nuclear_norm():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(8, 3))
    loss, grad = stratclone.aer_loss_continuous(a)
    assert loss == pytest.approx(-np.linalg.norm(a, "nuc"))
    assert grad.shape == a.shape


def test_selection_rule():
    assert stratclone.select_from_distances([0.5, 0.1], [0.2, 0.2], 2) == {
        "pre_cap": 2,
        "final": 2,
        "fallback": False,
    }
    out = stratclone.select_from_distances([0.5, 0.4], [0.2, 0.2], 1)
    assert out == {"pre_cap": 2, "final": 1, "fallback": True}


def test_kmeans_is_deterministic():
    rng = np.random.default_rng(3)
    pts = np.vstack([rng.normal(size=(20, 2)), rng.normal(size=(20, 2)) + 10.0])
    c1, a1, _ = stratclone.kmeans(pts, 2, 5)
    c2, a2, _ = stratclone.kmeans(pts, 2, 5)
    np.testing.assert_array_equal(c1, c2)
    assert a1 == a2
    assert len(set(a1[:20])) == 1 and len(set(a1[20:])) == 1


def test_return_gap_boundaries():
    assert stratclone.mean_return_gap(1.0) == 1.0
    assert stratclone.mean_return_gap(0.0) == 8.0


def test_pipeline(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(
        json.dumps(
            {
                "sim": {"n_users": 200},
                "train": {"epochs": 1, "batch_size": 32, "hidden": 8, "predictor_hidden": 8},
                "select": {"clusters_per_level": 4},
                "eval": {"episodes": 20},
            }
        )
    )
    data = tmp_path / "data"
    stratclone.gen_data(str(cfg), str(data))
    assert json.loads((data / "summary.json").read_text())["n_users"] == 200
    levels = stratclone.stratify_levels(str(data / "trajectories.jsonl"), 3)
    assert len(levels) == 200
    assert {v for v in levels.values() if v is not None} == {1, 2, 3}

    stratclone.train(str(cfg), str(tmp_path / "train"), trajectories=str(data / "trajectories.jsonl"))
    stratclone.build_centroids(str(cfg), str(tmp_path / "bank"), checkpoint=str(tmp_path / "train" / "policy.json"))
    stratclone.evaluate(
        str(cfg),
        str(tmp_path / "eval"),
        checkpoint=str(tmp_path / "train" / "policy.json"),
        bank=str(tmp_path / "bank" / "centroids.json"),
    )
    rows = (tmp_path / "eval" / "eval.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 4


def test_errors_map_to_exceptions(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"nope": 1}')
    with pytest.raises(stratclone.ConfigError):
        stratclone.validate_config(str(bad))
    with pytest.raises(stratclone.ConfigError):
        stratclone.gen_data(str(bad), str(tmp_path / "out"))
