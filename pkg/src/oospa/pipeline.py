"""Training loop, prediction, energy evaluation and curve generation.

Training uses Adam at a constant learning rate with seeded shuffling;
per-epoch train/validation losses are logged to CSV and the checkpoint
with the best validation loss is retained.  Evaluation recomputes the
pair energy under the predicted orbitals with a fresh angle
minimization, reports the mean absolute error against the stored
reference energies, and compares against the Givens-initialization
baseline.  torch runs single-threaded here so metric files and
checkpoints are byte-identical across runs with the same seeds.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from . import linalg, orbital_opt, spa
from .chem import (
    Geometry,
    atomic_integrals,
    overlap_matrix,
    to_native_basis,
    transform_integrals,
)
from .datagen import (
    DatasetRecord,
    givens_guess,
    load_dataset,
    min_weight_matching,
    reference_chain,
    reference_ring,
)
from .errors import InvalidInput, NumericalFailure
from .losses import LossWeights, batch_loss, occupied_columns
from .model import (
    FeatureTensors,
    GraphBatch,
    ModelConfig,
    OrbitalModel,
    featurize_for_model,
    forward_geometry,
    load_checkpoint,
    save_checkpoint,
)

CHECKPOINT_NAME = "checkpoint.ckpt"
METRICS_NAME = "metrics.csv"


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-4
    epochs: int = 200
    batch_size: int = 32
    weights: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)
    datasets: tuple[str, ...] = ()
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.lr0 <= 0:
            raise InvalidInput("lr0 must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise InvalidInput("val_fraction must lie in (0, 1)")
        object.__setattr__(self, "datasets", tuple(self.datasets))

    def to_json(self) -> str:
        obj = asdict(self)
        obj["datasets"] = list(self.datasets)
        return json.dumps(obj, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        obj = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise InvalidInput(f"unknown TrainConfig fields: {sorted(unknown)}")
        if "weights" in obj:
            obj["weights"] = LossWeights(**obj["weights"])
        if "model" in obj:
            obj["model"] = ModelConfig(**obj["model"])
        return cls(**obj)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass
class TrainingSample:
    record: DatasetRecord
    tensors: FeatureTensors
    ref_upper: torch.Tensor
    m_ref: torch.Tensor
    occupied: tuple[int, ...]


def prepare_samples(records: list[DatasetRecord], cfg: ModelConfig) -> list[TrainingSample]:
    samples = []
    for record in records:
        target = linalg.pack_upper(linalg.logm_special_orthogonal(record.m_oo))
        samples.append(
            TrainingSample(
                record=record,
                tensors=featurize_for_model(record.geometry, record.edges, cfg),
                ref_upper=torch.as_tensor(target, dtype=torch.float64),
                m_ref=torch.as_tensor(record.m_oo, dtype=torch.float64),
                occupied=occupied_columns(record.edges),
            )
        )
    return samples


def _evaluate_loss(model: OrbitalModel, samples: list[TrainingSample], weights: LossWeights):
    batch = GraphBatch([s.tensors for s in samples])
    uppers, ms = batch.forward(model)
    return batch_loss(
        uppers,
        ms,
        [s.ref_upper for s in samples],
        [s.m_ref for s in samples],
        weights,
        [s.occupied for s in samples],
    )


@dataclass
class TrainResult:
    checkpoint_path: Path
    metrics_path: Path
    best_epoch: int
    best_val_loss: float


def train(cfg: TrainConfig, out_dir, resume_from=None) -> TrainResult:
    """Train on the configured datasets and retain the best-val checkpoint."""
    torch.set_num_threads(1)  # fixed reduction order -> reproducible bytes
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    records: list[DatasetRecord] = []
    for path in cfg.datasets:
        records.extend(load_dataset(path))
    if not records:
        raise InvalidInput("no training records found in the configured datasets")

    samples = prepare_samples(records, cfg.model)
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(samples))
    n_val = max(1, round(cfg.val_fraction * len(samples)))
    if n_val >= len(samples):
        raise InvalidInput("validation split leaves no training data")
    val = [samples[i] for i in order[:n_val]]
    trainset = [samples[i] for i in order[n_val:]]

    model = OrbitalModel(cfg.model)
    if resume_from is not None:
        loaded, _ = load_checkpoint(resume_from)
        if loaded.cfg != cfg.model:
            raise InvalidInput("resume checkpoint config does not match")
        model.load_state_dict(loaded.state_dict())
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr0)

    checkpoint_path = out_dir / CHECKPOINT_NAME
    metrics_path = out_dir / METRICS_NAME
    best_val = np.inf
    best_epoch = -1
    rows = ["epoch,train_loss,val_loss,val_huber,val_det,val_orb"]
    extra = {"train_config": json.loads(cfg.to_json())}

    for epoch in range(cfg.epochs):
        epoch_rng = np.random.default_rng((cfg.seed, epoch))
        perm = epoch_rng.permutation(len(trainset))
        train_terms = []
        model.train()
        for start in range(0, len(trainset), cfg.batch_size):
            chunk = [trainset[i] for i in perm[start : start + cfg.batch_size]]
            optimizer.zero_grad()
            loss, _ = _evaluate_loss(model, chunk, cfg.weights)
            if not torch.isfinite(loss):
                bad = chunk[0].record
                raise NumericalFailure(
                    f"non-finite loss at epoch {epoch} (first record: "
                    f"{bad.geometry.family} seed {bad.geometry.seed})"
                )
            loss.backward()
            optimizer.step()
            train_terms.append(float(loss.detach()) * len(chunk))
        train_loss = sum(train_terms) / len(trainset)

        model.eval()
        with torch.no_grad():
            val_loss, parts = _evaluate_loss(model, val, cfg.weights)
        val_loss = float(val_loss)
        rows.append(
            f"{epoch},{train_loss!r},{val_loss!r},"
            f"{parts['huber']!r},{parts['det']!r},{parts['orb']!r}"
        )
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            save_checkpoint(
                checkpoint_path, model, extra={**extra, "best_epoch": epoch}
            )

    metrics_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return TrainResult(
        checkpoint_path=checkpoint_path,
        metrics_path=metrics_path,
        best_epoch=best_epoch,
        best_val_loss=best_val,
    )


@dataclass
class Prediction:
    m_pred: np.ndarray
    a_upper: np.ndarray
    edges: tuple[tuple[int, int], ...]
    elapsed_s: float


def predict_orbitals(model: OrbitalModel, geom: Geometry, matching=None) -> Prediction:
    if matching is None:
        matching = min_weight_matching(geom)
    start = time.perf_counter()
    a_upper, m_pred = forward_geometry(model, geom, matching)
    elapsed = time.perf_counter() - start
    return Prediction(m_pred=m_pred, a_upper=a_upper, edges=tuple(matching), elapsed_s=elapsed)


def energy_with_orbitals(geom: Geometry, matching, m: np.ndarray) -> tuple[float, np.ndarray]:
    """Fresh angle minimization under the given orbital rotation of the
    native basis; returns (energy, angles)."""
    ints = to_native_basis(atomic_integrals(geom), overlap_matrix(geom))
    rotated = transform_integrals(ints, np.asarray(m, dtype=float))
    ps = spa.PairStructure.from_matching(matching)
    theta, energy = spa.minimize_theta(spa.hcb_coefficients(rotated), ps)
    return energy, theta


@dataclass
class EvalRow:
    index: int
    n: int
    family: str
    seed: int
    e_spa: float
    e_init: float
    e_model: float
    abs_err_model: float
    abs_err_init: float
    predict_s: float
    ortho_residual: float
    e_warm_pred: float | None = None
    e_warm_givens: float | None = None


@dataclass
class EvalReport:
    rows: list[EvalRow]

    def mae_model(self) -> float:
        return float(np.mean([r.abs_err_model for r in self.rows]))

    def mae_init(self) -> float:
        return float(np.mean([r.abs_err_init for r in self.rows]))

    def per_size_mae(self) -> dict[int, float]:
        sizes = sorted({r.n for r in self.rows})
        return {
            n: float(np.mean([r.abs_err_model for r in self.rows if r.n == n]))
            for n in sizes
        }

    def mean_predict_s(self) -> float:
        return float(np.mean([r.predict_s for r in self.rows]))

    def warm_start_win_fraction(self) -> float:
        pairs = [
            (r.e_warm_pred, r.e_warm_givens)
            for r in self.rows
            if r.e_warm_pred is not None
        ]
        if not pairs:
            return float("nan")
        wins = sum(1 for p, g in pairs if p < g)
        return wins / len(pairs)

    def write_csv(self, path):
        header = (
            "index,n,family,seed,e_spa,e_init,e_model,abs_err_model,abs_err_init,"
            "predict_s,ortho_residual,e_warm_pred,e_warm_givens"
        )
        lines = [header]
        for r in self.rows:
            warm_p = "" if r.e_warm_pred is None else repr(r.e_warm_pred)
            warm_g = "" if r.e_warm_givens is None else repr(r.e_warm_givens)
            lines.append(
                f"{r.index},{r.n},{r.family},{r.seed},{r.e_spa!r},{r.e_init!r},"
                f"{r.e_model!r},{r.abs_err_model!r},{r.abs_err_init!r},"
                f"{r.predict_s!r},{r.ortho_residual!r},{warm_p},{warm_g}"
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def evaluate(
    model: OrbitalModel,
    records: list[DatasetRecord],
    warm_start: bool = False,
    orbital_source=None,
) -> EvalReport:
    """Energy comparison of predicted orbitals against stored references.

    ``orbital_source`` optionally overrides the predicted rotation per
    record (used to inject oracle matrices in self-consistency tests).
    """
    rows = []
    for idx, record in enumerate(records):
        geom = record.geometry
        prediction = predict_orbitals(model, geom, record.edges)
        m_used = prediction.m_pred if orbital_source is None else orbital_source(record)
        residual = float(
            np.max(np.abs(m_used.T @ m_used - np.eye(geom.n_atoms)))
        )
        e_model, _ = energy_with_orbitals(geom, record.edges, m_used)
        row = EvalRow(
            index=idx,
            n=geom.n_atoms,
            family=geom.family,
            seed=record.geometry.seed,
            e_spa=record.e_spa,
            e_init=record.e_init,
            e_model=e_model,
            abs_err_model=abs(record.e_spa - e_model),
            abs_err_init=abs(record.e_spa - record.e_init),
            predict_s=prediction.elapsed_s,
            ortho_residual=residual,
        )
        if warm_start:
            ints = to_native_basis(atomic_integrals(geom), overlap_matrix(geom))
            ps = spa.PairStructure.from_matching(record.edges)
            row.e_warm_pred = orbital_opt.warm_start_step(ints, ps, m_used).e_spa
            givens = givens_guess(record.edges, geom.n_atoms)
            row.e_warm_givens = orbital_opt.warm_start_step(ints, ps, givens).e_spa
        rows.append(row)
    return EvalReport(rows=rows)


def energy_curve(
    family: str,
    n: int,
    spacings,
    mode: str = "reference",
    model: OrbitalModel | None = None,
) -> list[dict]:
    """Potential-energy rows over a spacing grid.

    ``mode`` is cumulative: "reference" computes the fully optimized
    energy, "predicted" adds the model energy, "warm" adds one
    optimization step from the prediction.
    """
    if family not in ("linear_equidistant", "ring"):
        raise InvalidInput(f"unsupported curve family {family!r}")
    if mode not in ("reference", "predicted", "warm"):
        raise InvalidInput(f"unknown curve mode {mode!r}")
    if mode != "reference" and model is None:
        raise InvalidInput(f"mode {mode!r} requires a checkpoint")
    rows = []
    for spacing in spacings:
        geom = (
            reference_chain(n, float(spacing))
            if family == "linear_equidistant"
            else reference_ring(n, float(spacing))
        )
        matching = min_weight_matching(geom)
        ps = spa.PairStructure.from_matching(matching)
        ints = to_native_basis(atomic_integrals(geom), overlap_matrix(geom))
        m_init = givens_guess(matching, n)
        reference = orbital_opt.optimize_orbitals(ints, ps, m_init).e_spa
        row = {
            "spacing": float(spacing),
            "e_reference": reference,
            "e_predicted": None,
            "e_warm": None,
        }
        if mode in ("predicted", "warm"):
            prediction = predict_orbitals(model, geom, matching)
            e_pred, _ = energy_with_orbitals(geom, matching, prediction.m_pred)
            row["e_predicted"] = e_pred
            if mode == "warm":
                row["e_warm"] = orbital_opt.warm_start_step(
                    ints, ps, prediction.m_pred
                ).e_spa
        rows.append(row)
    return rows


def write_curve_csv(rows: list[dict], path):
    lines = ["spacing,e_reference,e_predicted,e_warm"]
    for row in rows:
        pred = "" if row["e_predicted"] is None else repr(row["e_predicted"])
        warm = "" if row["e_warm"] is None else repr(row["e_warm"])
        lines.append(f"{row['spacing']!r},{row['e_reference']!r},{pred},{warm}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
