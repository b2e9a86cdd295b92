# Copyright (c) 2026 the doge-lab authors
# SPDX-License-Identifier: Apache-2.0
"""Smoke tests for the Python bindings."""
import json
import math

import pytest

import dogelab


def test_tokenize_roundtrip():
    text = "doge weights -> simplex"
    ids = dogelab.tokenize(text)
    assert ids == [ord(c) for c in text]
    assert dogelab.detokenize(ids) == text
    # special ids are dropped on the way back out
    assert dogelab.detokenize([256] + ids + [258]) == text


def test_update_domain_weights_stays_on_simplex():
    alpha = dogelab.update_domain_weights([0.25, 0.25, 0.5], [1.0, -1.0, 0.0], 0.1, 1.0)
    assert len(alpha) == 3
    assert abs(sum(alpha) - 1.0) < 1e-12
    assert all(a >= 0.0 for a in alpha)
    # higher score must gain relative mass against an equal-prior peer
    assert alpha[0] > alpha[1]


def test_update_domain_weights_zero_scores_identity():
    prev = [0.125, 0.375, 0.5]
    alpha = dogelab.update_domain_weights(prev, [0.0, 0.0, 0.0], 0.1, 1.0)
    assert alpha == pytest.approx(prev, abs=1e-15)


def test_cosine_lr_shape():
    peak = dogelab.cosine_lr(5, 100, 5e-4, 1e-4)
    assert peak == pytest.approx(5e-4)
    assert dogelab.cosine_lr(0, 100, 5e-4, 1e-4) < peak
    assert dogelab.cosine_lr(99, 100, 5e-4, 1e-4) == pytest.approx(1e-4, rel=1e-2)


def test_weights_json_roundtrip():
    names = ["arxiv", "web", "wiki"]
    weights = [0.2, 0.5, 0.3]
    text = dogelab.weights_to_json(names, weights)
    parsed = json.loads(text)
    assert list(parsed["weights"]) == names
    back_names, back_weights = dogelab.weights_from_json(text)
    assert back_names == names
    assert back_weights == pytest.approx(weights, abs=0)


def test_run_config_file_end_to_end(tmp_path):
    out_dir = tmp_path / "run"
    config = {
        "mode": "proxy-universal",
        "seed": 7,
        "out": str(out_dir),
        "corpus": {
            "kind": "synthetic",
            "synthetic": {
                "domains": [
                    {"name": "a", "symbol_lo": 0, "symbol_hi": 8},
                    {"name": "b", "symbol_lo": 8, "symbol_hi": 16},
                ],
                "sequences_per_domain": 32,
            },
        },
        "proxy_model": {
            "layers": 1,
            "heads": 2,
            "embed_dim": 16,
            "hidden_dim": 32,
            "context": 16,
        },
        "doge": {"steps": 3, "batch_per_domain": 2},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    assert dogelab.run_config_file(str(path)) == 0
    weights = json.loads((out_dir / "weights.json").read_text())["weights"]
    assert set(weights) == {"a", "b"}
    assert sum(weights.values()) == pytest.approx(1.0, abs=1e-9)


def test_config_errors_surface_as_exceptions(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"mode": "proxy-universal"}')  # missing seed
    with pytest.raises(dogelab.ConfigError):
        dogelab.run_config_file(str(path))
