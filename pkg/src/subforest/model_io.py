"""Versioned JSON persistence for fitted forests.

The writer emits deterministic bytes (sorted keys, fixed separators, no
timestamps); floats serialize via Python's shortest round-trip repr, so a
reloaded model reproduces predictions bit-exactly. Loading refuses files
whose format version does not match.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from . import __version__
from .dataset import TrainingSet
from .forest import ForestConfig, ForestModel
from .sampling import HonestyPartition, SubsampleDraw
from .tree import TreeConfig, TreeModel

FORMAT_VERSION = 1


def dataset_fingerprint(ts: TrainingSet) -> str:
    """Content hash of a training set (shape plus raw float64 bytes)."""
    h = hashlib.sha256()
    h.update(f"{ts.n},{ts.d};".encode())
    h.update(np.ascontiguousarray(ts.x).tobytes())
    h.update(np.ascontiguousarray(ts.y).tobytes())
    return h.hexdigest()


def _tree_record(t: TreeModel) -> dict:
    rec = {
        "feature": t.feature.tolist(),
        "threshold": t.threshold.tolist(),
        "left": t.left.tolist(),
        "right": t.right.tolist(),
        "value": t.value.tolist(),
        "pred_index": t.pred_index.tolist(),
        "from_random": [int(v) for v in t.from_random],
        "subsample": t.subsample.indices.tolist(),
    }
    if t.partition is not None:
        rec["structure"] = t.partition.structure.tolist()
        rec["prediction"] = t.partition.prediction.tolist()
    return rec


def _config_record(cfg: ForestConfig) -> dict:
    return {
        "s": cfg.s,
        "b": cfg.b,
        "s_exponent": cfg.s_exponent,
        "seed": cfg.seed,
        "tree": {
            "gamma": cfg.tree.gamma,
            "delta": cfg.tree.delta,
            "mode": cfg.tree.mode,
            "max_leaf_size": cfg.tree.max_leaf_size,
        },
    }


def model_to_json(forest: ForestModel, fingerprint: str, feature_names=None) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "tool": f"subforest {__version__}",
        "config": _config_record(forest.config),
        "n": forest.n,
        "d": forest.d,
        "s": forest.s,
        "b": forest.b,
        "mode": forest.config.tree.mode,
        "dataset_sha256": fingerprint,
        "feature_names": list(feature_names) if feature_names else None,
        "trees": [_tree_record(t) for t in forest.trees],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def save_model(path, forest: ForestModel, ts: TrainingSet) -> None:
    with open(path, "w") as fh:
        fh.write(model_to_json(forest, dataset_fingerprint(ts), ts.feature_names))


def _tree_from_record(rec: dict, n: int, d: int, cfg: TreeConfig) -> TreeModel:
    draw = SubsampleDraw(np.asarray(rec["subsample"], dtype=np.int64), n)
    partition = None
    if "structure" in rec:
        partition = HonestyPartition(
            structure=np.asarray(rec["structure"], dtype=np.int64),
            prediction=np.asarray(rec["prediction"], dtype=np.int64),
        )
    return TreeModel(
        feature=np.asarray(rec["feature"], dtype=np.int32),
        threshold=np.asarray(rec["threshold"], dtype=np.float64),
        left=np.asarray(rec["left"], dtype=np.int32),
        right=np.asarray(rec["right"], dtype=np.int32),
        value=np.asarray(rec["value"], dtype=np.float64),
        pred_index=np.asarray(rec["pred_index"], dtype=np.int32),
        from_random=np.asarray(rec["from_random"], dtype=bool),
        n_features=d,
        config=cfg,
        subsample=draw,
        partition=partition,
    )


def load_model(path) -> tuple[ForestModel, dict]:
    """Load a model file; returns (forest, header metadata)."""
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(
            f"{path}: model format version {version!r} does not match supported version {FORMAT_VERSION}"
        )
    c = doc["config"]
    cfg = ForestConfig(
        s=c["s"],
        b=c["b"],
        s_exponent=c["s_exponent"],
        seed=c["seed"],
        tree=TreeConfig(
            gamma=c["tree"]["gamma"],
            delta=c["tree"]["delta"],
            mode=c["tree"]["mode"],
            max_leaf_size=c["tree"]["max_leaf_size"],
        ),
    )
    n, d = doc["n"], doc["d"]
    trees = tuple(_tree_from_record(rec, n, d, cfg.tree) for rec in doc["trees"])
    indices = np.vstack([t.subsample.indices for t in trees])
    forest = ForestModel(
        trees=trees, subsample_indices=indices, n=n, s=doc["s"], b=doc["b"], config=cfg
    )
    meta = {k: doc[k] for k in ("tool", "dataset_sha256", "mode", "feature_names")}
    return forest, meta
