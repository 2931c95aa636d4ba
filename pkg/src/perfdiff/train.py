"""End-to-end training: pair losses, Adam updates, model persistence.

Model files are versioned binary containers: magic ``PDIF``, a little-
endian uint32 format version, a SHA-256 checksum, then length-prefixed
named sections (config, vocab, embeddings, encoder, classifier as packed
float64 arrays or canonical JSON). Checkpoints reuse the container with
extra optimizer-state sections so training can resume bit-exactly.

Determinism contract: a fixed config seed fixes parameter init, the
per-epoch shuffle, and every summation order, so repeated runs produce
bitwise-identical model files.
"""

from __future__ import annotations

import copy
import hashlib
import io
import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from perfdiff.ast import Ast
from perfdiff.classifier import (
    ClassifierParams,
    bce_loss,
    decide,
    init_classifier,
    predict_pair,
)
from perfdiff.embed import (
    EmbeddingTable,
    NodeVocab,
    build_vocab,
    init_embeddings,
    vocab_from_kinds,
)
from perfdiff.errors import ModelFormatError, PairError, TrainingDiverged
from perfdiff.gcn import GcnEncoder, gcn_backward
from perfdiff.pairs import PairDataset
from perfdiff.treelstm import Architecture, Gradients, TreeLstmEncoder, backward

MAGIC = b"PDIF"
FORMAT_VERSION = 1

EMBEDDING_PARAM = "embedding.vectors"


@dataclass
class TrainConfig:
    encoder: str = "treelstm"        # "treelstm" | "gcn"
    variant: str = "uni"             # tree-LSTM architecture variant
    layers: int = 1
    d: int = 100
    embedding_dim: int = 120
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    threshold: float = 0.5
    early_stop_patience: int = 10
    gcn_depth: int = 6

    def __post_init__(self):
        if self.encoder not in ("treelstm", "gcn"):
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if min(self.layers, self.d, self.embedding_dim, self.batch_size, self.epochs) < 1:
            raise ValueError("layers, d, embedding_dim, batch_size, epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")
        if self.encoder == "treelstm":
            Architecture(self.variant, self.layers)  # validates the combination

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**obj)


@dataclass
class ModelBundle:
    vocab: NodeVocab
    embeddings: EmbeddingTable
    encoder: object                  # TreeLstmEncoder | GcnEncoder
    classifier: ClassifierParams
    config: TrainConfig
    format_version: int = FORMAT_VERSION

    def parameters(self) -> dict[str, np.ndarray]:
        """Live views of every trainable array, keyed by stable names."""
        params = {EMBEDDING_PARAM: self.embeddings.vectors}
        for name, arr in self.encoder.named_parameters():
            params[f"encoder.{name}"] = arr
        params["classifier.weight"] = self.classifier.weight
        params["classifier.bias"] = self.classifier.bias
        return params

    def encode_recorded(self, ast: Ast):
        return self.encoder.encode_recorded(ast, self.embeddings, self.vocab)

    def encode(self, ast: Ast) -> np.ndarray:
        return self.encode_recorded(ast)[0]

    def encoder_backward(self, tape, upstream: np.ndarray) -> Gradients:
        if isinstance(self.encoder, GcnEncoder):
            grads = gcn_backward(self.encoder, tape, upstream)
        else:
            grads = backward(self.encoder, tape, upstream)
        grads.params = {f"encoder.{k}": v for k, v in grads.params.items()}
        return grads


def build_model(config: TrainConfig, vocab: NodeVocab, unknown_slot: bool = True) -> ModelBundle:
    embeddings = init_embeddings(
        vocab, config.embedding_dim, seed=config.seed, unknown_slot=unknown_slot
    )
    if config.encoder == "gcn":
        encoder = GcnEncoder(
            input_dim=config.embedding_dim,
            hidden=config.d,
            depth=config.gcn_depth,
            seed=config.seed + 1,
        )
    else:
        encoder = TreeLstmEncoder(
            Architecture(config.variant, config.layers),
            input_dim=config.embedding_dim,
            d=config.d,
            seed=config.seed + 1,
        )
    classifier = init_classifier(encoder.d)
    return ModelBundle(
        vocab=vocab, embeddings=embeddings, encoder=encoder,
        classifier=classifier, config=config,
    )


class Adam:
    """Adam with optional row-sparse updates for the embedding table.

    Rows without gradient in a step keep their first/second moments and
    values untouched, so a step only moves embedding rows the batch saw.
    """

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p) for name, p in params.items()}
        self.v = {name: np.zeros_like(p) for name, p in params.items()}

    def step(self, grads: dict[str, np.ndarray],
             sparse_rows: dict[str, np.ndarray] | None = None) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name in sorted(grads):
            g = grads[name]
            p, m, v = self.params[name], self.m[name], self.v[name]
            rows = sparse_rows.get(name) if sparse_rows else None
            if rows is not None:
                g = g[rows]
                m[rows] = self.beta1 * m[rows] + (1.0 - self.beta1) * g
                v[rows] = self.beta2 * v[rows] + (1.0 - self.beta2) * g * g
                update = (self.lr / bc1) * m[rows] / (np.sqrt(v[rows] / bc2) + self.eps)
                p[rows] = p[rows] - update
            else:
                m[...] = self.beta1 * m + (1.0 - self.beta1) * g
                v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
                update = (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
                p[...] = p - update


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    valid_accuracy: float | None = None


@dataclass
class TrainState:
    """Everything needed to resume training bit-exactly."""

    bundle: ModelBundle
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int
    next_epoch: int
    best_params: dict[str, np.ndarray]
    best_metric: float
    best_epoch: int
    epochs_since_improve: int


@dataclass
class TrainResult:
    bundle: ModelBundle              # parameters of the best epoch
    history: list[EpochMetrics] = field(default_factory=list)
    final_state: TrainState | None = None


def _snapshot(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {name: arr.copy() for name, arr in params.items()}


def _restore(params: dict[str, np.ndarray], snapshot: dict[str, np.ndarray]) -> None:
    for name, arr in params.items():
        arr[...] = snapshot[name]


def _batch_gradients(bundle: ModelBundle, dataset: PairDataset,
                     batch: list[int]) -> tuple[Gradients, float, int]:
    """Mean gradient over a batch; returns (grads, loss sum, n correct)."""
    scale = 1.0 / len(batch)
    cache: dict[int, tuple[np.ndarray, object]] = {}

    def encoded(sub_idx: int):
        hit = cache.get(sub_idx)
        if hit is None:
            hit = bundle.encode_recorded(dataset.submissions[sub_idx].ast)
            cache[sub_idx] = hit
        return hit

    clf = bundle.classifier
    d = clf.d
    total = Gradients()
    loss_sum = 0.0
    correct = 0
    for pair_idx in batch:
        pair = dataset.pairs[pair_idx]
        z_i, tape_i = encoded(pair.first)
        z_j, tape_j = encoded(pair.second)
        p = predict_pair(clf, z_i, z_j)
        if not math.isfinite(p):
            raise TrainingDiverged(
                f"non-finite prediction for pair ({pair.first}, {pair.second})"
            )
        loss, dlogit = bce_loss(p, pair.label)
        loss_sum += loss
        correct += decide(p, bundle.config.threshold) == pair.label
        dlogit *= scale
        total.add_param("classifier.weight", dlogit * np.concatenate([z_i, z_j]))
        total.add_param("classifier.bias", np.asarray(dlogit))
        dz_i = dlogit * clf.weight[:d]
        dz_j = dlogit * clf.weight[d:]
        total.merge(bundle.encoder_backward(tape_i, dz_i))
        total.merge(bundle.encoder_backward(tape_j, dz_j))
    return total, loss_sum, correct


def _apply_step(optimizer: Adam, grads: Gradients, n_rows: int, dim: int) -> None:
    flat = dict(grads.params)
    sparse = None
    if grads.embedding_rows:
        rows = np.array(sorted(grads.embedding_rows), dtype=np.intp)
        g = np.zeros((n_rows, dim))
        for row, vec in grads.embedding_rows.items():
            g[row] = vec
        flat[EMBEDDING_PARAM] = g
        sparse = {EMBEDDING_PARAM: rows}
    optimizer.step(flat, sparse)


def _dataset_accuracy(bundle: ModelBundle, dataset: PairDataset) -> float:
    cache: dict[int, np.ndarray] = {}

    def enc(idx: int) -> np.ndarray:
        z = cache.get(idx)
        if z is None:
            z = bundle.encode(dataset.submissions[idx].ast)
            cache[idx] = z
        return z

    correct = 0
    for pair in dataset.pairs:
        p = predict_pair(bundle.classifier, enc(pair.first), enc(pair.second))
        correct += decide(p, bundle.config.threshold) == pair.label
    return correct / len(dataset.pairs)


def train(
    config: TrainConfig,
    train_pairs: PairDataset,
    valid_pairs: PairDataset | None = None,
    resume: TrainState | None = None,
    log=None,
) -> TrainResult:
    """Mini-batch Adam over pair losses; keeps the best-validation epoch.

    With no validation set, model selection falls back to train accuracy.
    Raises TrainingDiverged on non-finite loss.
    """
    if not train_pairs.pairs:
        raise PairError("training dataset has no pairs")
    if valid_pairs is not None and valid_pairs.pairs:
        overlap = train_pairs.source_ids() & valid_pairs.source_ids()
        if overlap:
            raise PairError(
                f"train/valid submissions overlap: {sorted(overlap)[:3]}..."
            )

    if resume is not None:
        bundle = resume.bundle
        params = bundle.parameters()
        optimizer = Adam(params, lr=config.learning_rate)
        optimizer.m = resume.m
        optimizer.v = resume.v
        optimizer.t = resume.t
        best_params = resume.best_params
        best_metric = resume.best_metric
        best_epoch = resume.best_epoch
        since_improve = resume.epochs_since_improve
        start_epoch = resume.next_epoch
    else:
        vocab = build_vocab([s.ast for s in train_pairs.submissions])
        bundle = build_model(config, vocab)
        params = bundle.parameters()
        optimizer = Adam(params, lr=config.learning_rate)
        best_params = _snapshot(params)
        best_metric = -1.0
        best_epoch = -1
        since_improve = 0
        start_epoch = 0

    n_pairs = len(train_pairs.pairs)
    n_rows, dim = bundle.embeddings.vectors.shape
    history: list[EpochMetrics] = []

    for epoch in range(start_epoch, config.epochs):
        order = np.random.default_rng((config.seed, 1, epoch)).permutation(n_pairs)
        loss_sum = 0.0
        correct = 0
        for lo in range(0, n_pairs, config.batch_size):
            batch = [int(i) for i in order[lo : lo + config.batch_size]]
            grads, batch_loss, batch_correct = _batch_gradients(
                bundle, train_pairs, batch
            )
            if not math.isfinite(batch_loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            loss_sum += batch_loss
            correct += batch_correct
            _apply_step(optimizer, grads, n_rows, dim)

        metrics = EpochMetrics(
            epoch=epoch,
            train_loss=loss_sum / n_pairs,
            train_accuracy=correct / n_pairs,
            valid_accuracy=(
                _dataset_accuracy(bundle, valid_pairs)
                if valid_pairs is not None and valid_pairs.pairs
                else None
            ),
        )
        history.append(metrics)
        if log is not None:
            log(metrics)

        metric = (
            metrics.valid_accuracy
            if metrics.valid_accuracy is not None
            else metrics.train_accuracy
        )
        if metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_params = _snapshot(params)
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= config.early_stop_patience:
                break

    final_state = TrainState(
        bundle=bundle,
        m=optimizer.m,
        v=optimizer.v,
        t=optimizer.t,
        next_epoch=history[-1].epoch + 1 if history else start_epoch,
        best_params=best_params,
        best_metric=best_metric,
        best_epoch=best_epoch,
        epochs_since_improve=since_improve,
    )

    best_bundle = copy.deepcopy(bundle)
    _restore(best_bundle.parameters(), best_params)
    return TrainResult(bundle=best_bundle, history=history, final_state=final_state)


def predict(bundle: ModelBundle, ast_a: Ast, ast_b: Ast) -> tuple[float, int]:
    """Probability and decision that the second program is faster or equal."""
    z_a = bundle.encode(ast_a)
    z_b = bundle.encode(ast_b)
    p = predict_pair(bundle.classifier, z_a, z_b)
    return p, decide(p, bundle.config.threshold)


# --- container format ----------------------------------------------------


def _pack_arrays(named: list[tuple[str, np.ndarray]]) -> bytes:
    buf = io.BytesIO()
    for name, arr in named:
        raw = io.BytesIO()
        np.save(raw, arr, allow_pickle=False)
        payload = raw.getvalue()
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<Q", len(payload)))
        buf.write(payload)
    return buf.getvalue()


def _unpack_arrays(blob: bytes) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    view = io.BytesIO(blob)
    while True:
        head = view.read(2)
        if not head:
            return out
        (name_len,) = struct.unpack("<H", head)
        name = view.read(name_len).decode("utf-8")
        (size,) = struct.unpack("<Q", view.read(8))
        out[name] = np.load(io.BytesIO(view.read(size)), allow_pickle=False)


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_container(path, sections: dict[str, bytes]) -> None:
    body = io.BytesIO()
    for name in sorted(sections):
        encoded = name.encode("utf-8")
        body.write(struct.pack("<H", len(encoded)))
        body.write(encoded)
        body.write(struct.pack("<Q", len(sections[name])))
        body.write(sections[name])
    payload = body.getvalue()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(hashlib.sha256(payload).digest())
        fh.write(payload)


def read_container(path) -> dict[str, bytes]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"cannot read {path}: {exc}") from exc
    if len(blob) < 40 or blob[:4] != MAGIC:
        raise ModelFormatError(f"{path}: not a perfdiff model file")
    (version,) = struct.unpack("<I", blob[4:8])
    if version > FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: format_version {version} is newer than supported {FORMAT_VERSION}"
        )
    digest = blob[8:40]
    payload = blob[40:]
    if hashlib.sha256(payload).digest() != digest:
        raise ModelFormatError(f"{path}: checksum mismatch (corrupt or truncated)")
    sections: dict[str, bytes] = {}
    view = io.BytesIO(payload)
    while True:
        head = view.read(2)
        if not head:
            return sections
        (name_len,) = struct.unpack("<H", head)
        name = view.read(name_len).decode("utf-8")
        (size,) = struct.unpack("<Q", view.read(8))
        sections[name] = view.read(size)


def _model_sections(bundle: ModelBundle) -> dict[str, bytes]:
    return {
        "config": _canonical_json(bundle.config.to_dict()),
        "vocab": _canonical_json(
            {
                "kinds": bundle.vocab.kinds(),
                "unknown_slot": bundle.embeddings.unknown_slot,
            }
        ),
        "embeddings": _pack_arrays([("vectors", bundle.embeddings.vectors)]),
        "encoder": _pack_arrays(list(bundle.encoder.named_parameters())),
        "classifier": _pack_arrays(
            [("weight", bundle.classifier.weight), ("bias", bundle.classifier.bias)]
        ),
    }


def save_model(bundle: ModelBundle, path) -> None:
    write_container(path, _model_sections(bundle))


def _bundle_from_sections(sections: dict[str, bytes], path) -> ModelBundle:
    for required in ("config", "vocab", "embeddings", "encoder", "classifier"):
        if required not in sections:
            raise ModelFormatError(f"{path}: missing section {required!r}")
    config = TrainConfig.from_dict(json.loads(sections["config"]))
    vocab_obj = json.loads(sections["vocab"])
    vocab = vocab_from_kinds(vocab_obj["kinds"])
    bundle = build_model(config, vocab, unknown_slot=vocab_obj["unknown_slot"])

    emb = _unpack_arrays(sections["embeddings"])["vectors"]
    if emb.shape != bundle.embeddings.vectors.shape:
        raise ModelFormatError(f"{path}: embedding shape mismatch")
    bundle.embeddings.vectors[...] = emb

    enc = _unpack_arrays(sections["encoder"])
    for name, arr in bundle.encoder.named_parameters():
        if name not in enc or enc[name].shape != arr.shape:
            raise ModelFormatError(f"{path}: encoder parameter {name!r} mismatch")
        arr[...] = enc[name]

    clf = _unpack_arrays(sections["classifier"])
    bundle.classifier.weight[...] = clf["weight"]
    bundle.classifier.bias[...] = clf["bias"]
    return bundle


def load_model(path) -> ModelBundle:
    return _bundle_from_sections(read_container(path), path)


def save_checkpoint(state: TrainState, path) -> None:
    sections = _model_sections(state.bundle)
    sections["opt.m"] = _pack_arrays(sorted(state.m.items()))
    sections["opt.v"] = _pack_arrays(sorted(state.v.items()))
    sections["best"] = _pack_arrays(sorted(state.best_params.items()))
    sections["train_state"] = _canonical_json(
        {
            "t": state.t,
            "next_epoch": state.next_epoch,
            "best_metric": state.best_metric,
            "best_epoch": state.best_epoch,
            "epochs_since_improve": state.epochs_since_improve,
        }
    )
    write_container(path, sections)


def load_checkpoint(path) -> TrainState:
    sections = read_container(path)
    for required in ("opt.m", "opt.v", "best", "train_state"):
        if required not in sections:
            raise ModelFormatError(f"{path}: not a checkpoint (missing {required!r})")
    bundle = _bundle_from_sections(sections, path)
    meta = json.loads(sections["train_state"])
    return TrainState(
        bundle=bundle,
        m=_unpack_arrays(sections["opt.m"]),
        v=_unpack_arrays(sections["opt.v"]),
        t=int(meta["t"]),
        next_epoch=int(meta["next_epoch"]),
        best_params=_unpack_arrays(sections["best"]),
        best_metric=float(meta["best_metric"]),
        best_epoch=int(meta["best_epoch"]),
        epochs_since_improve=int(meta["epochs_since_improve"]),
    )
