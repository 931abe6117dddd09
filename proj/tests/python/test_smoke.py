import json
import math
import random

import pytest

import vetta


def test_fourier_round_trip():
    rng = random.Random(3)
    for _ in range(200):
        x = rng.uniform(-0.49, 0.49)
        feats = vetta.lift_fourier([x])
        assert len(feats) == 12
        (back,) = vetta.invert_fourier(feats)
        assert abs(back - x) <= 0.0005 + 1e-12


def test_linear_sum_assignment_small():
    rows, cols = vetta.linear_sum_assignment([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
    assert rows == [0, 1, 2]
    assert cols == [1, 0, 2]


def test_top_k_invariants():
    rng = random.Random(5)
    cost = [[rng.random() for _ in range(2)] for _ in range(10)]
    L, R = vetta.top_k_matching(cost, [True, True], 3)
    assert all(sum(row) == 1 for row in L)
    assert sum(sum(row) for row in R) == 6


def test_synthetic_tree_and_metrics():
    a = vetta.synthetic_tree(7)
    ok, reason = vetta.validate_tree(a)
    assert ok, reason
    same = vetta.compare_trees(a, a)
    assert same["chd"] == 0.0 and same["cf1"] == 1.0
    b = vetta.synthetic_tree(8)
    assert vetta.compare_trees(b, a)["acd"] > 0.0
    broken = json.loads(json.dumps(a))
    broken["edges"].append(dict(broken["edges"][0]))
    assert not vetta.validate_tree(broken)[0]


def test_cli_round_trip(tmp_path):
    data = tmp_path / "data"
    assert vetta.run_cli(["gen-data", "--out", str(data), "--count", "4", "--seed", "2"]) == 0
    cfg = tmp_path / "tree.json"
    cfg.write_text(json.dumps({
        "mode": "tree",
        "dataset": "data",
        "seed": 1,
        "model": {"dims": 2, "heads": 2, "head_dim": 8, "encoder_layers": 1, "partial_layers": 1,
                  "decoder_layers": 1, "edge_hidden": 16, "pool_hidden": 16, "predictor_hidden": 16,
                  "z_dim": 8},
        "schedule": {"steps": 5, "batch": 2, "log_interval": 1, "checkpoint_interval": 5},
    }))
    run = tmp_path / "run"
    assert vetta.run_cli(["train-tree", "--config", str(cfg), "--out", str(run), "--quiet"]) == 0
    model = vetta.TreeModel(str(run / "final.vtac"))
    assert model.dims == 2 and model.z_dim == 8 and not model.variational
    tree = (data / "tree_00000.json").read_text()
    z = model.encode(tree)
    assert len(z) == 8 and all(math.isfinite(v) for v in z)
    out = model.decode(z)
    assert vetta.validate_tree(out)[0]
    assert model.reconstruct(tree) == out
    # An autoencoder checkpoint cannot interpolate: configuration error.
    code = vetta.run_cli(["interpolate", "--ckpt", str(run / "final.vtac"), "--a", str(data / "tree_00000.json"),
                          "--b", str(data / "tree_00001.json"), "--out", str(tmp_path / "ip")])
    assert code == 2


def test_bad_input():
    ok, reason = vetta.validate_tree("{not json")
    assert not ok and reason
    with pytest.raises(ValueError):
        vetta.compare_trees("{not json", vetta.synthetic_tree(1))
