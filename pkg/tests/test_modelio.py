"""JSON interchange round-trips and validation."""

import json

import numpy as np
import pytest

import hankelid as hk
from hankelid import modelio


class TestModelRoundTrip:
    def test_roundtrip_with_theta(self, tmp_path):
        param, theta = hk.compartmental_instance(3, seed=40)
        path = tmp_path / "model.json"
        modelio.save_model(path, param, theta_true=theta)
        loaded, theta_loaded = modelio.load_model(path)
        assert loaded.dims == param.dims
        assert loaded.q == param.q
        np.testing.assert_array_equal(loaded.offset_a, param.offset_a)
        np.testing.assert_array_equal(theta_loaded, theta)
        for a, b in zip(loaded.coeffs_a, param.coeffs_a):
            np.testing.assert_array_equal(a, b)

    def test_roundtrip_without_theta(self, tmp_path):
        param, _ = hk.random_structured_instance(hk.Dims(2, 2, 1), 3, seed=41)
        path = tmp_path / "model.json"
        modelio.save_model(path, param)
        loaded, theta_loaded = modelio.load_model(path)
        assert theta_loaded is None
        np.testing.assert_array_equal(loaded.offset_b, param.offset_b)

    def test_row_major_layout(self):
        param, _ = hk.random_structured_instance(hk.Dims(2, 1, 1), 2, seed=42)
        doc = modelio.model_to_dict(param)
        assert doc["offsetA"][0][1] == param.offset_a[0, 1]
        assert doc["q"] == 2 and len(doc["coeffs"]) == 2

    def test_q_mismatch_rejected(self):
        param, _ = hk.compartmental_instance(2, seed=43)
        doc = modelio.model_to_dict(param)
        doc["q"] = 5
        with pytest.raises(ValueError):
            modelio.model_from_dict(doc)

    def test_theta_length_validated(self):
        param, _ = hk.compartmental_instance(2, seed=44)
        doc = modelio.model_to_dict(param, theta_true=[1.0, 2.0])
        doc["theta_true"] = [1.0]
        with pytest.raises(ValueError):
            modelio.model_from_dict(doc)


class TestMarkovRoundTrip:
    def test_roundtrip(self, tmp_path):
        blocks = np.random.default_rng(45).standard_normal((6, 2, 3))
        path = tmp_path / "markov.json"
        modelio.save_markov(path, blocks)
        loaded = modelio.load_markov(path)
        np.testing.assert_array_equal(loaded, blocks)
        doc = json.loads(path.read_text())
        assert doc["p"] == 2 and doc["m"] == 3

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            modelio.markov_from_dict({"p": 2, "m": 2, "blocks": [[[1.0]]]})
