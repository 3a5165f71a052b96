"""JSON interchange for parameterizations, Markov sequences and solve audits.

Model files carry the affine parameterization as row-major nested arrays:

    {"n": ..., "m": ..., "p": ..., "q": ...,
     "offsetA": [[...]], "offsetB": [[...]], "offsetC": [[...]],
     "coeffs": [{"A": [[...]], "B": [[...]], "C": [[...]]}, ...],
     "theta_true": [...]}            # optional

Markov files: {"p": ..., "m": ..., "blocks": [[[...]], ...]}.
"""

from __future__ import annotations

import json

import numpy as np

from .model import AffineParameterization, Dims


def model_to_dict(param: AffineParameterization, theta_true=None) -> dict:
    doc = {
        "n": param.dims.n,
        "m": param.dims.m,
        "p": param.dims.p,
        "q": param.q,
        "offsetA": param.offset_a.tolist(),
        "offsetB": param.offset_b.tolist(),
        "offsetC": param.offset_c.tolist(),
        "coeffs": [
            {"A": a.tolist(), "B": b.tolist(), "C": c.tolist()}
            for a, b, c in zip(param.coeffs_a, param.coeffs_b, param.coeffs_c)
        ],
    }
    if theta_true is not None:
        doc["theta_true"] = np.asarray(theta_true, dtype=float).tolist()
    return doc


def model_from_dict(doc: dict):
    """Returns (AffineParameterization, theta_true or None)."""
    dims = Dims(int(doc["n"]), int(doc["m"]), int(doc["p"]))
    coeffs = doc.get("coeffs", [])
    if "q" in doc and int(doc["q"]) != len(coeffs):
        raise ValueError(f"q = {doc['q']} does not match {len(coeffs)} coefficient entries")
    param = AffineParameterization(
        dims=dims,
        offset_a=np.asarray(doc["offsetA"], dtype=float),
        offset_b=np.asarray(doc["offsetB"], dtype=float),
        offset_c=np.asarray(doc["offsetC"], dtype=float),
        coeffs_a=tuple(np.asarray(entry["A"], dtype=float) for entry in coeffs),
        coeffs_b=tuple(np.asarray(entry["B"], dtype=float) for entry in coeffs),
        coeffs_c=tuple(np.asarray(entry["C"], dtype=float) for entry in coeffs))
    theta_true = doc.get("theta_true")
    if theta_true is not None:
        theta_true = param.check_theta(theta_true)
    return param, theta_true


def save_model(path, param: AffineParameterization, theta_true=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(param, theta_true), fh, indent=2)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def markov_to_dict(markov: np.ndarray) -> dict:
    markov = np.asarray(markov, dtype=float)
    if markov.ndim != 3:
        raise ValueError("markov must have shape (count, p, m)")
    return {"p": markov.shape[1], "m": markov.shape[2],
            "blocks": [block.tolist() for block in markov]}


def markov_from_dict(doc: dict) -> np.ndarray:
    blocks = np.asarray(doc["blocks"], dtype=float)
    p, m = int(doc["p"]), int(doc["m"])
    if blocks.ndim != 3 or blocks.shape[1:] != (p, m):
        raise ValueError(f"blocks must have shape (count, {p}, {m}), got {blocks.shape}")
    return blocks


def save_markov(path, markov) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(markov_to_dict(markov), fh, indent=2)
        fh.write("\n")


def load_markov(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return markov_from_dict(json.load(fh))
