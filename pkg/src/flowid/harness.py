"""Experiment harness: sliding-window grids, cross-environment updates,
leave-one-device-out categorization, and inference benchmarks.

Protocol: a model is trained on a window of `w` consecutive days
starting at day `x` (days x .. x+w-1) and evaluated on the day that
lies `p` days past the window, i.e. day x+w+p-1. A grid cell averages
the macro F1 over every valid start day; cells backed by fewer than two
start days are omitted.

Model groups: `all-device` / `all-category` train one multiclass model;
`per-device` / `per-category` train one binary model per class and
classify by the argmax of the per-model positive probabilities.
"""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .features import LabeledDataset
from .metrics import f1_macro
from .neural import BINARY, MULTICLASS, NeuralNet, TrainConfig, freeze, init_model, train
from .seeds import mix
from .trees import TreeParams, fit_dtc, fit_rfc

MODEL_TYPES = ("rfc", "dtc", "fc", "lstm", "conv1d")
TREE_TYPES = ("rfc", "dtc")
NEURAL_TYPES = ("fc", "lstm", "conv1d")
GROUPS = ("all-device", "all-category", "per-device", "per-category")

W_RANGE = tuple(range(1, 8))
P_MAX = 14
MIN_CELL_SAMPLES = 2


def label_kind_of(group: str) -> str:
    return "device" if group.endswith("device") else "category"


def is_per_group(group: str) -> bool:
    return group.startswith("per-")


@dataclass
class TrainedModel:
    """A trained classifier bundle: one member for all-* groups, one
    binary member per class for per-* groups."""

    model_type: str
    group: str
    classes: list
    members: list
    provenance: dict = field(default_factory=dict)

    @property
    def label_kind(self) -> str:
        return label_kind_of(self.group)

    def predict_proba(self, X) -> np.ndarray:
        """(n, n_classes) probabilities in the bundle's class order."""
        if not is_per_group(self.group):
            return self.members[0].predict_proba(X)
        cols = [_positive_proba(m, X) for m in self.members]
        return np.stack(cols, axis=1)

    def predict(self, X) -> np.ndarray:
        if not is_per_group(self.group):
            member = self.members[0]
            if isinstance(member, NeuralNet):
                return np.argmax(member.predict_proba(X), axis=1)
            return member.predict(X)
        return ensemble_predict(self.members, X)


def _positive_proba(model, X) -> np.ndarray:
    if isinstance(model, NeuralNet):
        return model.predict_proba(X)
    return model.predict_proba(X)[:, 1]


def ensemble_predict(models: list, X) -> np.ndarray:
    """Argmax over per-class binary models; ties break to the lowest index."""
    if not models:
        raise ValueError("empty model list")
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    probs = np.stack([_positive_proba(m, X) for m in models], axis=1)
    out = np.argmax(probs, axis=1)  # first maximum wins
    return out[0] if single else out


# ---------------------------------------------------------------------------
# day windows

def split_days(data: LabeledDataset, x: int, w: int, p: int):
    """(train rows, test rows) for window start x, length w, horizon p.

    Train days are x..x+w-1; the test day is x+w+p-1, the p-th day
    after the window.
    """
    test_day = x + w + p - 1
    if x < 1 or w < 1 or p < 1:
        raise ValueError(f"x, w, p must be >= 1 (got {x}, {w}, {p})")
    if test_day > data.d_max:
        raise ValueError(f"test day {test_day} past the last day {data.d_max}")
    return data.day_slice(x, x + w - 1), data.day_slice(test_day, test_day)


def valid_starts(d_max: int, w: int, p: int) -> list:
    return [x for x in range(1, d_max + 1) if x + w + p - 1 <= d_max]


# ---------------------------------------------------------------------------
# training

@dataclass
class ExperimentSpec:
    model_type: str
    group: str
    w: int = 7
    start_day: int = 1
    seed: int = 0
    epochs: int = 5
    batch_size: int = 128

    def validate(self):
        if self.model_type not in MODEL_TYPES:
            raise ValueError(f"unknown model type {self.model_type!r}")
        if self.group not in GROUPS:
            raise ValueError(f"unknown group {self.group!r}")


def fit_model(train_data: LabeledDataset, model_type: str, group: str, seed: int = 0,
              epochs: int = 5, batch_size: int = 128,
              tree_params: Optional[TreeParams] = None) -> TrainedModel:
    """Train one bundle on the given rows."""
    if model_type not in MODEL_TYPES:
        raise ValueError(f"unknown model type {model_type!r}")
    if group not in GROUPS:
        raise ValueError(f"unknown group {group!r}")
    kind = label_kind_of(group)
    classes = list(train_data.label_names(kind))
    y = train_data.labels(kind)
    X = train_data.features
    if len(X) == 0:
        raise ValueError("empty training window")

    def fit_one(labels, n_classes, member_seed, head):
        if model_type in TREE_TYPES:
            params = tree_params or TreeParams()
            params = TreeParams(max_depth=params.max_depth,
                                min_samples_leaf=params.min_samples_leaf,
                                min_samples_split=params.min_samples_split,
                                n_estimators=params.n_estimators,
                                seed=member_seed,
                                max_features=params.max_features,
                                bootstrap=params.bootstrap)
            if model_type == "dtc":
                return fit_dtc(X, labels, params, n_classes=n_classes)
            return fit_rfc(X, labels, params, n_classes=n_classes)
        model = init_model(model_type, head, n_classes=n_classes, seed=member_seed)
        cfg = TrainConfig(epochs=epochs, batch_size=batch_size, seed=member_seed)
        return train(model, X, labels, cfg)

    if is_per_group(group):
        members = [fit_one((y == c).astype(np.int64), 2, mix(seed, "member", c), BINARY)
                   for c in range(len(classes))]
    else:
        members = [fit_one(y, len(classes), seed, MULTICLASS)]
    return TrainedModel(model_type=model_type, group=group, classes=classes,
                        members=members,
                        provenance={"seed": seed, "epochs": epochs,
                                    "batch_size": batch_size, "label_kind": kind})


def evaluate(model: TrainedModel, data: LabeledDataset) -> float:
    """Macro F1 of the bundle on the rows' labels of its own kind.

    Labels are aligned by name, so the dataset's own class order does
    not have to match the order the model was trained with.
    """
    if len(data) == 0:
        raise ValueError("empty evaluation set")
    names = data.label_names(model.label_kind)
    index_of = {c: i for i, c in enumerate(model.classes)}
    mapping = np.array([index_of.get(nm, -1) for nm in names], dtype=np.int64)
    y = mapping[data.labels(model.label_kind)]
    if (y < 0).any():
        missing = sorted({names[i] for i in np.unique(data.labels(model.label_kind)[y < 0])})
        raise ValueError(f"evaluation rows contain classes unknown to the model: {missing}")
    pred = model.predict(data.features)
    return f1_macro(pred, y, n_classes=len(model.classes))


def run_cell(spec: ExperimentSpec, data: LabeledDataset, p: int) -> float:
    """Train on the spec's window, return macro F1 on the test day."""
    spec.validate()
    train_rows, test_rows = split_days(data, spec.start_day, spec.w, p)
    model = fit_model(train_rows, spec.model_type, spec.group, seed=spec.seed,
                      epochs=spec.epochs, batch_size=spec.batch_size)
    return evaluate(model, test_rows)


# ---------------------------------------------------------------------------
# grids

@dataclass
class EvalGrid:
    """Mean F1 per (model_type, group, w, p), averaged over start days."""

    cells: dict = field(default_factory=dict)

    def get(self, model_type, group, w, p):
        return self.cells.get((model_type, group, w, p))

    def rows(self):
        for (model_type, group, w, p), f1 in sorted(self.cells.items()):
            yield {"model_type": model_type, "group": group, "w": w, "p": p, "f1": f1}

    def mean_over_p(self, model_type, group, ps, w=None) -> float:
        vals = [v for (mt, g, wi, p), v in self.cells.items()
                if mt == model_type and g == group and p in ps and (w is None or wi == w)]
        if not vals:
            raise ValueError("no grid cells selected")
        return float(np.mean(vals))


def eval_grid(data: LabeledDataset, model_types=("fc",), groups=("all-device",),
              w_range=W_RANGE, p_max=P_MAX, base_seed: int = 0,
              epochs: int = 5, batch_size: int = 128,
              progress=None) -> EvalGrid:
    """Average run_cell over all valid start days for every cell.

    Cell seeds mix the base seed with the cell coordinates, so the grid
    is reproducible as a whole while cells stay independent.
    """
    if data.d_max < 3:
        raise ValueError("need at least 3 days of data")
    grid = EvalGrid()
    for model_type in model_types:
        for group in groups:
            for w in w_range:
                for p in range(1, p_max + 1):
                    starts = valid_starts(data.d_max, w, p)
                    if len(starts) < MIN_CELL_SAMPLES:
                        continue
                    scores = []
                    for x in starts:
                        seed = mix(base_seed, model_type, group, w, p, x)
                        spec = ExperimentSpec(model_type=model_type, group=group,
                                              w=w, start_day=x, seed=seed,
                                              epochs=epochs, batch_size=batch_size)
                        scores.append(run_cell(spec, data, p))
                    grid.cells[(model_type, group, w, p)] = float(np.mean(scores))
                    if progress is not None:
                        progress(model_type, group, w, p, grid.cells[(model_type, group, w, p)])
    return grid


# ---------------------------------------------------------------------------
# cross-environment updates

def retrain_eval(base: TrainedModel, update_data: Optional[LabeledDataset],
                 eval_envs: dict, freeze_k: int = 0,
                 epochs: int = 5, batch_size: int = 128, seed: int = 0) -> dict:
    """Clone the base bundle, freeze, update, and score per environment.

    Neural bundles only: tree models have no update path and must be
    retrained from scratch instead. An empty/None update set scores the
    base model as-is.
    """
    if base.model_type not in NEURAL_TYPES:
        raise ValueError("only neural bundles can be updated in place; "
                         "retrain tree models from scratch")
    updated = TrainedModel(model_type=base.model_type, group=base.group,
                           classes=list(base.classes),
                           members=[m.clone() for m in base.members],
                           provenance=dict(base.provenance))
    for member in updated.members:
        freeze(member, freeze_k)
    if update_data is not None and len(update_data) > 0:
        y = update_data.labels(updated.label_kind)
        X = update_data.features
        cfg = TrainConfig(epochs=epochs, batch_size=batch_size, seed=seed)
        if is_per_group(updated.group):
            for c, member in enumerate(updated.members):
                train(member, X, (y == c).astype(np.int64),
                      TrainConfig(epochs=epochs, batch_size=batch_size, seed=mix(seed, c)))
        else:
            train(updated.members[0], X, y, cfg)
    scores = {name: evaluate(updated, env) for name, env in eval_envs.items()}
    return {"model": updated, "scores": scores, "freeze_k": freeze_k}


# ---------------------------------------------------------------------------
# leave-one-device-out categorization

def leave_one_out_category(data: LabeledDataset, device: str, model_type: str = "fc",
                           seed: int = 0, epochs: int = 5, batch_size: int = 128) -> float:
    """Train all-category on everything except `device`; score its rows.

    The held-out device's rows are labeled with its true category, so
    the returned macro F1 reflects how often an unseen device lands in
    the right category.
    """
    if device not in data.devices:
        raise ValueError(f"unknown device {device!r}")
    dev_idx = data.devices.index(device)
    cat_of = data.category_of_device()
    category = cat_of[device]
    siblings = [d for d, c in cat_of.items() if c == category and d != device]
    if not siblings:
        raise ValueError(f"category {category!r} would be empty without {device!r}")
    train_rows = data.subset(data.device_idx != dev_idx)
    test_rows = data.subset(data.device_idx == dev_idx)
    model = fit_model(train_rows, model_type, "all-category", seed=seed,
                      epochs=epochs, batch_size=batch_size)
    return evaluate(model, test_rows)


def leave_one_out_table(data: LabeledDataset, model_types=MODEL_TYPES, seed: int = 0,
                        epochs: int = 5, batch_size: int = 128) -> list:
    """One row per (eligible device, model type), like a categorization table.

    Devices whose category would become empty are skipped.
    """
    cat_of = data.category_of_device()
    counts = {}
    for dev, cat in cat_of.items():
        counts[cat] = counts.get(cat, 0) + 1
    rows = []
    for device in data.devices:
        if counts[cat_of[device]] < 2:
            continue
        for model_type in model_types:
            f1 = leave_one_out_category(data, device, model_type,
                                        seed=mix(seed, device, model_type),
                                        epochs=epochs, batch_size=batch_size)
            rows.append({"device": device, "category": cat_of[device],
                         "model_type": model_type, "f1": f1})
    return rows


# ---------------------------------------------------------------------------
# inference benchmarking

@dataclass
class BenchResult:
    model_type: str
    group: str
    n: int
    seconds: float
    per_sample_s: float
    n_members: int


def bench_inference(model: TrainedModel, pool: LabeledDataset, n: int,
                    seed: int = 0) -> BenchResult:
    """Time end-to-end batched inference over n rows sampled from the pool.

    Per-* bundles run every member, mirroring how a deployment must
    query each per-class model for one classification.
    """
    if len(pool) == 0:
        raise ValueError("empty feature pool")
    rng = np.random.Generator(np.random.PCG64(mix(seed, "bench", n)))
    idx = rng.integers(0, len(pool), size=n)
    X = pool.features[idx]
    model.predict(X[:min(256, n)])  # warm-up outside the timed region
    t0 = time.perf_counter()
    model.predict(X)
    seconds = time.perf_counter() - t0
    return BenchResult(model_type=model.model_type, group=model.group, n=n,
                       seconds=seconds, per_sample_s=seconds / n,
                       n_members=len(model.members))
