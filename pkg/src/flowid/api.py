"""Service layer: request/response schemas, operation handlers, and the
FastAPI application.

The service is file-based: requests carry paths on the service host
plus parameters, responses carry summaries and output paths, so large
datasets and models never travel over the wire. The CLI drives these
same handlers either in process or against a remote server.

Every operation is deterministic given its seed: rerunning a request
writes byte-identical datasets, models, and grids (timing tables aside).
"""

import csv
import os
from typing import Dict, List, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .extract import (build_vocab, extract_dataset, flows_from_packets,
                      iter_flows_jsonl, iter_packets_jsonl, label_flows,
                      load_dns_jsonl, load_vocab, save_vocab)
from .harness import (GROUPS, MODEL_TYPES, NEURAL_TYPES, EvalGrid, bench_inference,
                      eval_grid, evaluate, fit_model, leave_one_out_table,
                      retrain_eval)
from .store import StoreError, load_model, read_dataset, save_model, write_dataset
from .synthgen import (PATTERNS, EnvironmentSpec, drift_preset,
                       gen_cross_env_pair, gen_environment, large_fleet,
                       spec_from_config)
from .seeds import mix


class OpError(RuntimeError):
    """Operation failed for a user-visible reason."""


# ---------------------------------------------------------------------------
# schemas

class HealthResponse(BaseModel):
    status: str = "ok"
    version: str = __version__


class ExtractRequest(BaseModel):
    packets_path: Optional[str] = None
    flows_path: Optional[str] = None
    dns_path: Optional[str] = None
    categories_path: Optional[str] = None  # JSON object: device id -> category
    vocab_in: Optional[str] = None
    vocab_out: Optional[str] = None
    out_path: str
    reorder_tolerance: float = 0.0


class ExtractResponse(BaseModel):
    out_path: str
    n_flows: int
    n_rows: int
    vocab_size: int


class GenerateRequest(BaseModel):
    out_path: str
    preset: str = "drift"  # drift | large | cross-env
    spec_path: Optional[str] = None  # declarative config overrides the preset
    n_days: int = 21
    pattern: str = "medium"
    seed: int = 0


class GenerateResponse(BaseModel):
    out_paths: List[str]
    n_rows: List[int]
    devices: List[str]
    categories: List[str]
    d_max: int


class TrainRequest(BaseModel):
    dataset_path: str
    out_path: str
    model_type: str = "fc"
    group: str = "all-device"
    first_day: Optional[int] = None
    last_day: Optional[int] = None
    seed: int = 0
    epochs: int = 5
    batch_size: int = 128


class TrainResponse(BaseModel):
    model_path: str
    size_bytes: int
    n_rows: int
    classes: List[str]


class GridRequest(BaseModel):
    dataset_path: str
    out_csv: str
    model_types: List[str] = Field(default_factory=lambda: ["fc"])
    groups: List[str] = Field(default_factory=lambda: ["all-device"])
    w_min: int = 1
    w_max: int = 7
    p_max: int = 14
    seed: int = 0
    epochs: int = 5
    batch_size: int = 128
    heatmap_dir: Optional[str] = None


class GridResponse(BaseModel):
    csv_path: str
    n_cells: int
    heatmaps: List[str] = Field(default_factory=list)


class RetrainRequest(BaseModel):
    base_model_path: str
    update_dataset_path: str
    out_path: str
    freeze_k: int = 0
    update_first_day: Optional[int] = None
    update_last_day: Optional[int] = None
    eval_paths: Dict[str, str] = Field(default_factory=dict)
    seed: int = 0
    epochs: int = 5
    batch_size: int = 128


class RetrainResponse(BaseModel):
    model_path: str
    freeze_k: int
    f1_before: Dict[str, float]
    f1_after: Dict[str, float]


class BenchRequest(BaseModel):
    model_path: str
    dataset_path: str
    sizes: List[int] = Field(default_factory=lambda: [1000, 10000, 100000])
    seed: int = 0
    out_csv: Optional[str] = None


class BenchRow(BaseModel):
    model_type: str
    group: str
    n: int
    seconds: float
    per_sample_s: float
    n_members: int


class BenchResponse(BaseModel):
    rows: List[BenchRow]


class PredictRequest(BaseModel):
    model_path: str
    dataset_path: str
    max_rows_returned: int = 1000


class PredictResponse(BaseModel):
    n_rows: int
    labels: List[str]
    histogram: Dict[str, int]
    f1: Optional[float] = None


class LeaveOneOutRequest(BaseModel):
    dataset_path: str
    out_csv: Optional[str] = None
    model_types: List[str] = Field(default_factory=lambda: list(MODEL_TYPES))
    seed: int = 0
    epochs: int = 5
    batch_size: int = 128


class LeaveOneOutRow(BaseModel):
    device: str
    category: str
    model_type: str
    f1: float


class LeaveOneOutResponse(BaseModel):
    rows: List[LeaveOneOutRow]
    csv_path: Optional[str] = None


# ---------------------------------------------------------------------------
# handlers

def run_extract(req: ExtractRequest) -> ExtractResponse:
    if bool(req.packets_path) == bool(req.flows_path):
        raise OpError("provide exactly one of packets_path or flows_path")
    categories = None
    if req.categories_path:
        import json
        with open(req.categories_path) as fh:
            categories = {str(k): str(v) for k, v in json.load(fh).items()}
    if req.packets_path:
        dns = load_dns_jsonl(req.dns_path) if req.dns_path else None
        flows = flows_from_packets(iter_packets_jsonl(req.packets_path), dns=dns,
                                   reorder_tolerance=req.reorder_tolerance)
    else:
        flows = list(iter_flows_jsonl(req.flows_path))
    label_flows(flows, categories=categories)
    vocab = load_vocab(req.vocab_in) if req.vocab_in else build_vocab(flows)
    data = extract_dataset(flows, vocab=vocab)
    if req.vocab_out:
        save_vocab(vocab, req.vocab_out)
    write_dataset(data, req.out_path)
    return ExtractResponse(out_path=req.out_path, n_flows=len(flows),
                           n_rows=len(data), vocab_size=len(vocab))


def run_generate(req: GenerateRequest) -> GenerateResponse:
    if req.pattern not in PATTERNS:
        raise OpError(f"unknown pattern {req.pattern!r} (choose from {PATTERNS})")
    if req.spec_path:
        data = gen_environment(spec_from_config(req.spec_path))
        write_dataset(data, req.out_path)
        return GenerateResponse(out_paths=[req.out_path], n_rows=[len(data)],
                                devices=data.devices, categories=data.categories,
                                d_max=data.d_max)
    if req.preset == "cross-env":
        env_a, env_b, env_c = gen_cross_env_pair(req.seed)
        base, ext = os.path.splitext(req.out_path)
        paths, counts = [], []
        for tag, env in (("A", env_a), ("B", env_b), ("C", env_c)):
            path = f"{base}.{tag}{ext or '.jsonl'}"
            write_dataset(env, path)
            paths.append(path)
            counts.append(len(env))
        return GenerateResponse(out_paths=paths, n_rows=counts,
                                devices=env_a.devices, categories=env_a.categories,
                                d_max=env_a.d_max)
    if req.preset == "drift":
        spec = drift_preset(req.seed, n_days=req.n_days, pattern=req.pattern)
    elif req.preset == "large":
        spec = EnvironmentSpec(name="large", devices=large_fleet(req.seed),
                               pattern=req.pattern, n_days=req.n_days,
                               seed=mix(req.seed, "large-env"))
    else:
        raise OpError(f"unknown preset {req.preset!r} (drift, large, cross-env)")
    data = gen_environment(spec)
    write_dataset(data, req.out_path)
    return GenerateResponse(out_paths=[req.out_path], n_rows=[len(data)],
                            devices=data.devices, categories=data.categories,
                            d_max=data.d_max)


def _load_window(path, first_day, last_day):
    data = read_dataset(path)
    if first_day is not None or last_day is not None:
        data = data.day_slice(first_day or 1, last_day or data.d_max)
    if len(data) == 0:
        raise OpError(f"{path}: no rows in the requested day window")
    return data


def run_train(req: TrainRequest) -> TrainResponse:
    if req.model_type not in MODEL_TYPES:
        raise OpError(f"unknown model type {req.model_type!r}")
    if req.group not in GROUPS:
        raise OpError(f"unknown group {req.group!r}")
    data = _load_window(req.dataset_path, req.first_day, req.last_day)
    bundle = fit_model(data, req.model_type, req.group, seed=req.seed,
                       epochs=req.epochs, batch_size=req.batch_size)
    bundle.provenance["window_days"] = [req.first_day or 1, req.last_day or data.d_max]
    size = save_model(bundle, req.out_path)
    return TrainResponse(model_path=req.out_path, size_bytes=size,
                         n_rows=len(data), classes=bundle.classes)


def run_grid(req: GridRequest) -> GridResponse:
    for mt in req.model_types:
        if mt not in MODEL_TYPES:
            raise OpError(f"unknown model type {mt!r}")
    for g in req.groups:
        if g not in GROUPS:
            raise OpError(f"unknown group {g!r}")
    data = read_dataset(req.dataset_path)
    grid = eval_grid(data, model_types=req.model_types, groups=req.groups,
                     w_range=range(req.w_min, req.w_max + 1), p_max=req.p_max,
                     base_seed=req.seed, epochs=req.epochs, batch_size=req.batch_size)
    write_grid_csv(grid, req.out_csv)
    heatmaps = []
    if req.heatmap_dir:
        from .plots import write_heatmaps
        heatmaps = write_heatmaps(grid, req.heatmap_dir)
    return GridResponse(csv_path=req.out_csv, n_cells=len(grid.cells), heatmaps=heatmaps)


def write_grid_csv(grid: EvalGrid, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_type", "group", "w", "p", "f1"])
        for row in grid.rows():
            writer.writerow([row["model_type"], row["group"], row["w"], row["p"],
                             f"{row['f1']:.6f}"])


def run_retrain(req: RetrainRequest) -> RetrainResponse:
    base = load_model(req.base_model_path)
    if base.model_type not in NEURAL_TYPES:
        raise OpError(f"{base.model_type} models cannot be updated in place; "
                      "train a fresh model on the merged data instead")
    update = _load_window(req.update_dataset_path, req.update_first_day, req.update_last_day)
    eval_envs = {name: read_dataset(path) for name, path in req.eval_paths.items()}
    before = {name: evaluate(base, env) for name, env in eval_envs.items()}
    result = retrain_eval(base, update, eval_envs, freeze_k=req.freeze_k,
                          epochs=req.epochs, batch_size=req.batch_size, seed=req.seed)
    updated = result["model"]
    updated.provenance["freeze_k"] = req.freeze_k
    save_model(updated, req.out_path)
    return RetrainResponse(model_path=req.out_path, freeze_k=req.freeze_k,
                           f1_before=before, f1_after=result["scores"])


def run_bench(req: BenchRequest) -> BenchResponse:
    bundle = load_model(req.model_path)
    pool = read_dataset(req.dataset_path)
    rows = []
    for n in req.sizes:
        res = bench_inference(bundle, pool, n, seed=req.seed)
        rows.append(BenchRow(model_type=res.model_type, group=res.group, n=res.n,
                             seconds=res.seconds, per_sample_s=res.per_sample_s,
                             n_members=res.n_members))
    if req.out_csv:
        with open(req.out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model_type", "group", "n", "seconds"])
            for row in rows:
                writer.writerow([row.model_type, row.group, row.n, f"{row.seconds:.6f}"])
    return BenchResponse(rows=rows)


def run_predict(req: PredictRequest) -> PredictResponse:
    bundle = load_model(req.model_path)
    data = read_dataset(req.dataset_path)
    pred = bundle.predict(data.features)
    names = [bundle.classes[i] for i in pred]
    hist = {}
    for nm in names:
        hist[nm] = hist.get(nm, 0) + 1
    f1 = None
    try:
        f1 = evaluate(bundle, data)
    except ValueError:
        pass  # unlabeled or label spaces disjoint from the model's classes
    return PredictResponse(n_rows=len(data), labels=names[:req.max_rows_returned],
                           histogram=dict(sorted(hist.items())), f1=f1)


def run_leave_one_out(req: LeaveOneOutRequest) -> LeaveOneOutResponse:
    data = read_dataset(req.dataset_path)
    rows = leave_one_out_table(data, model_types=req.model_types, seed=req.seed,
                               epochs=req.epochs, batch_size=req.batch_size)
    out_rows = [LeaveOneOutRow(**r) for r in rows]
    csv_path = None
    if req.out_csv:
        with open(req.out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["device", "category", "model_type", "f1"])
            for r in rows:
                writer.writerow([r["device"], r["category"], r["model_type"],
                                 f"{r['f1']:.6f}"])
        csv_path = req.out_csv
    return LeaveOneOutResponse(rows=out_rows, csv_path=csv_path)


# ---------------------------------------------------------------------------
# app

def create_app() -> FastAPI:
    app = FastAPI(title="flowid", version=__version__,
                  description="IoT device identification from network-flow features")

    def guarded(handler, req):
        try:
            return handler(req)
        except (OpError, StoreError, FileNotFoundError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse()

    @app.post("/extract", response_model=ExtractResponse)
    def extract(req: ExtractRequest):
        return guarded(run_extract, req)

    @app.post("/generate", response_model=GenerateResponse)
    def generate(req: GenerateRequest):
        return guarded(run_generate, req)

    @app.post("/train", response_model=TrainResponse)
    def train(req: TrainRequest):
        return guarded(run_train, req)

    @app.post("/grid", response_model=GridResponse)
    def grid(req: GridRequest):
        return guarded(run_grid, req)

    @app.post("/retrain", response_model=RetrainResponse)
    def retrain(req: RetrainRequest):
        return guarded(run_retrain, req)

    @app.post("/bench", response_model=BenchResponse)
    def bench(req: BenchRequest):
        return guarded(run_bench, req)

    @app.post("/predict", response_model=PredictResponse)
    def predict(req: PredictRequest):
        return guarded(run_predict, req)

    @app.post("/leave-one-out", response_model=LeaveOneOutResponse)
    def leave_one_out(req: LeaveOneOutRequest):
        return guarded(run_leave_one_out, req)

    return app


app = create_app()
