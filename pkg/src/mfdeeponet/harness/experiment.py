"""Build models and objectives from a config, train, evaluate and write artifacts."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..ad_core import variable
from ..datagen.io import write_dataset
from ..deeponet import ModifiedDeepONet
from ..losses import (LossWeights, PhysicsBatch, loss_data_driven, loss_noncomposite, loss_physics_informed,
                      loss_physics_single, mse)
from ..multifidelity import CompositeModel, FidelityDataset, NonCompositeModel, extract_linear_correlation
from ..optimize import ExpDecaySchedule, train
from .config import ExperimentConfig
from .metrics import MetricsReport
from .problems import Problem, _space_time, build_problem

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("step", "total", "hf", "physics", "lf", "ic", "bc", "reg_nl", "reg_lf", "lr")
CHECKPOINT_FORMAT = "mfdeeponet-checkpoint"


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, ExperimentError):
            raise ExperimentError(self.name, exc) from exc
        return False


class Shuffler:
    """Epoch-wise shuffled minibatches of ``batch`` indices out of ``n``; the
    full index set in order when no batching is requested."""

    def __init__(self, n: int, batch: int | None, seed):
        self.n = n
        self.batch = None if batch is None or batch >= n else int(batch)
        self.rng = np.random.default_rng(seed)
        self.perm = np.arange(n)
        self.pos = n

    def next(self) -> np.ndarray:
        if self.batch is None:
            return self.perm
        if self.pos + self.batch > self.n:
            self.perm = self.rng.permutation(self.n)
            self.pos = 0
        idx = self.perm[self.pos:self.pos + self.batch]
        self.pos += self.batch
        return np.sort(idx)


# ------------------------------------------------------------------ models


@dataclass
class SingleModel:
    """One modified DeepONet; ``source`` says which sensors feed its branch."""

    net: ModifiedDeepONet
    prefix: str
    source: str  # "hf" or "lf"

    def init_params(self, seed):
        return self.net.init_params(seed, self.prefix)

    def param_count(self):
        return self.net.param_count()


def _probe_grid(cfg: ExperimentConfig, problem: Problem) -> np.ndarray:
    spec = cfg.probe_grid
    if not spec:
        return problem.lf.queries.copy()
    if "points" in spec:
        return np.atleast_2d(np.asarray(spec["points"], dtype=np.float64))
    n = spec["grid"]
    if problem.dim == 1:
        return np.linspace(0, 1, n[0])[:, None]
    return _space_time(n[0], n[1])


def build_model(cfg: ExperimentConfig, problem: Problem):
    nets, act, n_out, d = cfg.networks, cfg.activation, problem.n_out, problem.dim
    m_hf = problem.test.sensors.shape[0]
    if cfg.model in ("sf-data", "sf-pi"):
        layers, width = nets["sf"]
        return SingleModel(ModifiedDeepONet(m_hf, d, width, layers, act, False, n_out), "sf/", "hf")
    if cfg.model == "lf-data":
        layers, width = nets["lf"]
        return SingleModel(ModifiedDeepONet(problem.lf.sensors.shape[0], d, width, layers, act, False, n_out), "lf/", "lf")
    probes = _probe_grid(cfg, problem)
    if cfg.model == "noncomposite":
        return NonCompositeModel.build(m_hf, d, probes, nonlinear=tuple(nets["nonlinear"]),
                                       linear=tuple(nets["linear"]), activation=act, n_out=n_out,
                                       linear_input=cfg.linear_input)
    return CompositeModel.build(problem.lf.sensors.shape[0], m_hf, d, probes, lf=tuple(nets["lf"]),
                                nonlinear=tuple(nets["nonlinear"]), linear=tuple(nets["linear"]),
                                activation=act, n_out=n_out, linear_input=cfg.linear_input,
                                detach_probes=cfg.detach_probes)


# ------------------------------------------------------------------ objectives


def _physics_take(p: PhysicsBatch, idx, cidx) -> PhysicsBatch:
    return PhysicsBatch(p.inputs_hf[idx], None if p.inputs_lf is None else p.inputs_lf[idx], p.collocation[cidx],
                        {k: c.take(idx) for k, c in p.conditions.items()},
                        None if p.params is None else p.params[idx])


def build_objective(cfg: ExperimentConfig, problem: Problem, model):
    w = LossWeights.from_dict(cfg.weights)
    b = cfg.batch
    seed = cfg.seed

    def shuffler(n, key, k):
        return Shuffler(n, b.get(key), [seed, k])

    if cfg.model in ("sf-data", "lf-data"):
        ds = problem.hf if cfg.model == "sf-data" else problem.lf
        sh = shuffler(ds.n_samples, "hf" if cfg.model == "sf-data" else "lf", 1)
        key = "hf" if cfg.model == "sf-data" else "lf"

        def objective(params, step, rng):
            batch = ds.take(sh.next())
            loss = mse(model.net.forward(params, batch.inputs, batch.queries, prefix=model.prefix).value,
                       batch.outputs)
            return loss, {key: float(loss.value)}

        return objective

    if cfg.model == "mf-data":
        sh_lf, sh_hf = shuffler(problem.lf.n_samples, "lf", 1), shuffler(problem.hf.n_samples, "hf", 2)

        def objective(params, step, rng):
            return loss_data_driven(model, params, problem.lf.take(sh_lf.next()), problem.hf.take(sh_hf.next()), w)

        return objective

    if cfg.model == "noncomposite":
        sh_hf = shuffler(problem.hf.n_samples, "hf", 2)

        def objective(params, step, rng):
            batch = problem.hf.take(sh_hf.next())
            return loss_noncomposite(model, params, problem.lf_oracle(batch.params[:, 0]), batch, w)

        return objective

    phys = problem.physics
    sh_hf = shuffler(phys.inputs_hf.shape[0], "hf", 2)
    sh_col = shuffler(phys.collocation.shape[0], "collocation", 3)
    norm = cfg.residual_norm
    if cfg.model == "mf-pi":
        sh_lf = shuffler(problem.lf.n_samples, "lf", 1)

        def objective(params, step, rng):
            batch = _physics_take(phys, sh_hf.next(), sh_col.next())
            return loss_physics_informed(model, params, problem.lf.take(sh_lf.next()), batch,
                                         problem.residual, w, norm)

        return objective

    def objective(params, step, rng):
        batch = _physics_take(phys, sh_hf.next(), sh_col.next())
        return loss_physics_single(model.net, params, batch, problem.residual, w, norm, prefix=model.prefix)

    return objective


# ------------------------------------------------------------------ evaluation


def predict(model, params, problem: Problem, chunk: int = 64) -> np.ndarray:
    """High-fidelity predictions on the test set, ``(N, P, C)``."""
    test = problem.test
    out = []
    for lo in range(0, test.n_samples, chunk):
        part = test.take(np.arange(lo, min(lo + chunk, test.n_samples)))
        if isinstance(model, SingleModel):
            u = part.inputs if model.source == "hf" else part.lf_inputs
            jet = model.net.forward(params, u, part.queries, prefix=model.prefix)
        elif isinstance(model, NonCompositeModel):
            jet = model.hf_predict(params, problem.lf_oracle(part.params[:, 0]), part.inputs, part.queries)
        else:
            jet = model.hf_predict(params, part.lf_inputs, part.inputs, part.queries)
        out.append(np.array(jet.value.value))
    return np.concatenate(out, axis=0)


def predict_lf(model: CompositeModel, params, problem: Problem, chunk: int = 64) -> np.ndarray:
    test = problem.test
    out = []
    for lo in range(0, test.n_samples, chunk):
        part = test.take(np.arange(lo, min(lo + chunk, test.n_samples)))
        out.append(np.array(model.lf_predict(params, part.lf_inputs, part.queries).value.value))
    return np.concatenate(out, axis=0)


# ------------------------------------------------------------------ artifacts


def _fmt(v) -> str:
    return str(int(v)) if isinstance(v, (int, np.integer)) else format(float(v), ".17g")


def history_csv(history: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_COLUMNS)
    for row in history:
        w.writerow([_fmt(row.get(c, 0.0)) for c in HISTORY_COLUMNS])
    return buf.getvalue()


def write_checkpoint(path, params: dict, step: int, config_hash: str = "") -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries, blob = {}, bytearray()
    for k in sorted(params):
        arr = np.ascontiguousarray(params[k], dtype="<f8")
        entries[k] = {"offset": len(blob), "shape": list(arr.shape)}
        blob += arr.tobytes()
    (path / "params.bin").write_bytes(bytes(blob))
    manifest = {"format": CHECKPOINT_FORMAT, "version": 1, "step": step, "config_hash": config_hash,
                "entries": entries}
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_checkpoint(path) -> tuple:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT or manifest.get("version") != 1:
        raise ValueError(f"{path} is not a supported checkpoint")
    raw = (path / "params.bin").read_bytes()
    params = {}
    for k, e in manifest["entries"].items():
        count = int(np.prod(e["shape"], dtype=np.int64))
        params[k] = np.frombuffer(raw, dtype="<f8", count=count, offset=e["offset"]).reshape(e["shape"]).copy()
    return params, manifest


@dataclass
class RunResult:
    metrics: MetricsReport
    report: dict
    params: dict
    predictions: np.ndarray
    history: list
    out_dir: Path | None


def _evaluate(cfg, problem, model, params, config_hash, runtime) -> tuple:
    pred = predict(model, params, problem, cfg.eval_chunk)
    metrics = MetricsReport.compute(problem.test.outputs, pred, config_hash, runtime)
    extra = {}
    if isinstance(model, CompositeModel) and problem.lf_test_truth is not None:
        lf_pred = predict_lf(model, params, problem, cfg.eval_chunk)
        lf_m = MetricsReport.compute(problem.lf_test_truth, lf_pred)
        extra["lf_metrics"] = {"mean_mse": lf_m.mean_mse, "mean_rel_l2": lf_m.mean_rel_l2}
    if isinstance(model, (CompositeModel, NonCompositeModel)):
        queries = problem.hf.queries if problem.hf is not None else problem.test.queries
        extra["linear_correlation"] = extract_linear_correlation(model.linear, params, queries).to_dict()
    return pred, metrics, extra


def run_experiment(cfg: ExperimentConfig, out_dir=None, problem: Problem | None = None) -> RunResult:
    """Generate data, train, evaluate and (if ``out_dir``) write artifacts."""
    t0 = time.perf_counter()
    config_hash = cfg.hash()
    with _Stage("data"):
        problem = problem or build_problem(cfg.benchmark, cfg.data)
    with _Stage("model"):
        model = build_model(cfg, problem)
        params = model.init_params(cfg.seed)
        objective = build_objective(cfg, problem, model)
        schedule = ExpDecaySchedule(float(cfg.schedule[0]), int(cfg.schedule[1]), float(cfg.schedule[2]),
                                    cfg.staircase)
    out = Path(out_dir) if out_dir is not None else None
    callback = None
    if out is not None and cfg.checkpoint_every > 0:
        def callback(step, p):
            if (step + 1) % cfg.checkpoint_every == 0:
                write_checkpoint(out / "checkpoint", p, step + 1, config_hash)
    with _Stage("train"):
        tr = train(objective, params, schedule, int(cfg.steps), cfg.seed, callback=callback)
    with _Stage("evaluate"):
        pred, metrics, extra = _evaluate(cfg, problem, model, tr.params, config_hash, 0.0)
    runtime = time.perf_counter() - t0
    metrics.runtime = runtime
    last = tr.history[-1] if tr.history else {}
    report = {
        "name": cfg.name, "benchmark": cfg.benchmark, "model": cfg.model, "config_hash": config_hash,
        "seed": cfg.seed, "steps": int(cfg.steps), "param_count": model.param_count(),
        "n_test": problem.test.n_samples, "metrics": metrics.to_dict(), **extra,
        "final_loss": {k: v for k, v in last.items() if k != "step"}, "runtime": runtime,
        "train_seconds": tr.wall_clock,
    }
    if out is not None:
        with _Stage("write"):
            out.mkdir(parents=True, exist_ok=True)
            (out / "config.json").write_text(cfg.to_json())
            (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
            (out / "loss_history.csv").write_text(history_csv(tr.history))
            write_dataset(out / "predictions", _prediction_dataset(problem.test, pred),
                          extra_outputs={"truth": problem.test.outputs}, name=f"{cfg.name}-predictions")
            write_checkpoint(out / "checkpoint", tr.params, int(cfg.steps), config_hash)
    return RunResult(metrics, report, tr.params, pred, tr.history, out)


def _prediction_dataset(test: FidelityDataset, pred) -> FidelityDataset:
    return FidelityDataset("prediction", test.sensors, test.inputs, test.queries, pred, test.inputs_lf,
                           test.params, dict(test.meta, role="prediction"))


def evaluate_run(run_dir, out_dir=None) -> dict:
    """Re-evaluate a finished run from its saved config and checkpoint."""
    run_dir = Path(run_dir)
    with _Stage("load"):
        cfg = ExperimentConfig.load(run_dir / "config.json")
        params, manifest = read_checkpoint(run_dir / "checkpoint")
    with _Stage("data"):
        problem = build_problem(cfg.benchmark, cfg.data)
    with _Stage("evaluate"):
        model = build_model(cfg, problem)
        pred, metrics, extra = _evaluate(cfg, problem, model, params, cfg.hash(), 0.0)
    report = {"name": cfg.name, "checkpoint_step": manifest["step"], "metrics": metrics.to_dict(), **extra}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "evaluation.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def compare(cfg_a: ExperimentConfig, cfg_b: ExperimentConfig, out_dir=None) -> dict:
    """Run both configs and tabulate their metrics; ratio = A / B."""
    if cfg_a.benchmark != cfg_b.benchmark or cfg_a.data != cfg_b.data:
        raise ExperimentError("compare", ValueError("configs do not share a benchmark and data specification"))
    out = Path(out_dir) if out_dir is not None else None
    problem = build_problem(cfg_a.benchmark, cfg_a.data)
    ra = run_experiment(cfg_a, out / "a" if out else None, problem)
    rb = run_experiment(cfg_b, out / "b" if out else None, problem)
    rows = []
    for key in ("mean_mse", "mean_rel_l2"):
        va, vb = getattr(ra.metrics, key), getattr(rb.metrics, key)
        rows.append({"metric": key, "a": va, "b": vb, "ratio": va / vb if vb != 0 else float("inf")})
    table = {"a": cfg_a.name, "b": cfg_b.name, "benchmark": cfg_a.benchmark, "rows": rows}
    if out is not None:
        (out / "compare.json").write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", cfg_a.name, cfg_b.name, "ratio"])
        for r in rows:
            w.writerow([r["metric"], _fmt(r["a"]), _fmt(r["b"]), _fmt(r["ratio"])])
        (out / "compare.csv").write_text(buf.getvalue())
    return table
