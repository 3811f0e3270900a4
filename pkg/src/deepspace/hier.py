"""Coarse-router / fine-expert hierarchy trained online.

The coarse model predicts the next LAC from a coarse-encoded window.  Each LAC
owns a fine model whose output classes are that LAC's stations and whose input
is the globally fine-encoded window.  Training routes each event by its true
LAC; inference routes by the coarse model's prediction.
"""
from __future__ import annotations

import dataclasses
import json
import struct
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .encode import FINE, StationIndex, encode_trajectory
from .errors import CorruptFile, EmptyIndex, ShapeMismatch, UnknownCoarseLabel, VersionMismatch
from .ingest import Trajectory
from .nn import PARAM_NAMES, ArchConfig, CnnModel, TrainConfig, init_model, predict_proba, sgd_update

MAGIC = b"DSPACE1\n"
COARSE_ID = "coarse"
FLAT_ID = "flat"
CURVE_WINDOW = 100


def fine_id(coarse_label: int) -> str:
    return f"fine_{coarse_label}"


@dataclass(frozen=True)
class StreamEvent:
    user: str
    fine_window: tuple[int, ...]
    coarse_window: tuple[int, ...]
    fine_target: int
    coarse_target: int
    time: int = 0


def build_events(traj: Trajectory, index: StationIndex, W: int) -> list[StreamEvent]:
    """Every length-``W`` history of one trajectory, as stream events."""
    fine = encode_trajectory(traj, index, FINE)
    coarse = [index.fine_to_coarse[f] for f in fine]
    return [
        StreamEvent(traj.user, tuple(fine[t - W:t]), tuple(coarse[t - W:t]),
                    fine[t], coarse[t], traj.points[t].stime)
        for t in range(W, len(fine))
    ]


def merge_streams(streams: Iterable[Sequence[StreamEvent]]) -> list[StreamEvent]:
    """Interleave per-user event lists by target time (stable on ties)."""
    tagged = [(ev.time, i, j, ev) for i, s in enumerate(streams) for j, ev in enumerate(s)]
    tagged.sort(key=lambda t: t[:3])
    return [t[3] for t in tagged]


@dataclass
class HierModel:
    coarse: CnnModel
    fines: dict[int, CnnModel]
    fine_classes: dict[int, np.ndarray]
    index: StationIndex
    cfg: TrainConfig

    @property
    def routing(self) -> tuple[int, ...]:
        return self.index.fine_to_coarse

    @property
    def W(self) -> int:
        return self.cfg.W

    def submodels(self) -> dict[str, CnnModel]:
        out = {COARSE_ID: self.coarse}
        out.update({fine_id(a): m for a, m in sorted(self.fines.items())})
        return out

    def copy(self) -> "HierModel":
        return dataclasses.replace(
            self, coarse=self.coarse.copy(), fines={a: m.copy() for a, m in self.fines.items()})


@dataclass
class FlatModel:
    """Single network over every fine label, the non-hierarchical baseline."""
    model: CnnModel
    index: StationIndex
    cfg: TrainConfig

    def submodels(self) -> dict[str, CnnModel]:
        return {FLAT_ID: self.model}

    def copy(self) -> "FlatModel":
        return dataclasses.replace(self, model=self.model.copy())


def _seed(cfg: TrainConfig, model_id: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([cfg.seed & 0xFFFFFFFFFFFFFFFF, model_id])


def build_hier_model(index: StationIndex, cfg: TrainConfig = TrainConfig()) -> HierModel:
    if index is None or index.n_fine == 0:
        raise EmptyIndex("cannot build a hierarchy over an empty index")
    coarse = init_model(index.n_coarse, index.n_coarse, cfg, seed=_seed(cfg, 0))
    fines, classes = {}, {}
    for a in range(index.n_coarse):
        members = np.array(index.members(a), dtype=np.int64)
        classes[a] = members
        fines[a] = init_model(index.n_fine, len(members), cfg, seed=_seed(cfg, a + 1))
    return HierModel(coarse, fines, classes, index, cfg)


def build_flat_model(index: StationIndex, cfg: TrainConfig = TrainConfig()) -> FlatModel:
    if index is None or index.n_fine == 0:
        raise EmptyIndex("cannot build a model over an empty index")
    return FlatModel(init_model(index.n_fine, index.n_fine, cfg, seed=_seed(cfg, 0)), index, cfg)


def route(model: HierModel, coarse_label: int) -> int:
    """Identifier (the LAC label) of the fine model serving ``coarse_label``."""
    if coarse_label not in model.fines:
        raise UnknownCoarseLabel(f"coarse label {coarse_label} has no fine model")
    return int(coarse_label)


# --------------------------------------------------------------------------
# online training

@dataclass
class CurvePoint:
    model_id: str
    iteration: int
    mean_loss: float
    running_accuracy: float


@dataclass
class _Head:
    """Micro-batching wrapper: buffers events for one sub-model and steps it."""
    model_id: str
    model: CnnModel
    batch_size: int
    lr: float
    max_steps: int
    windows: list = field(default_factory=list)
    targets: list = field(default_factory=list)
    steps: int = 0
    recent: deque = field(default_factory=lambda: deque(maxlen=CURVE_WINDOW))
    curve: list = field(default_factory=list)

    def push(self, window, target):
        self.windows.append(window)
        self.targets.append(target)
        if len(self.windows) >= self.batch_size:
            self.flush()

    def flush(self):
        if not self.windows:
            return
        w = np.array(self.windows, dtype=np.int64)
        y = np.array(self.targets, dtype=np.int64)
        self.windows, self.targets = [], []
        if self.steps >= self.max_steps:
            return
        loss, correct = sgd_update(self.model, w, y, self.lr)
        self.steps += 1
        self.recent.append((correct, len(y)))
        acc = sum(c for c, _ in self.recent) / sum(n for _, n in self.recent)
        self.curve.append(CurvePoint(self.model_id, self.steps, loss, acc))


class OnlineTrainer:
    """Streaming trainer for a :class:`HierModel` (or a :class:`FlatModel`).

    ``feed`` may be called any number of times; pending partial batches carry
    over, so splitting a stream across calls gives the same parameters as
    feeding it in one go.  ``flush`` applies whatever is still buffered.
    """

    def __init__(self, model, cfg: TrainConfig | None = None, parallel: bool = False):
        self.model = model
        self.cfg = cfg or model.cfg
        self.parallel = parallel
        mk = lambda mid, m: _Head(mid, m, self.cfg.batch_size, self.cfg.learning_rate, self.cfg.iterations)
        if isinstance(model, FlatModel):
            self.heads = {FLAT_ID: mk(FLAT_ID, model.model)}
        else:
            self.heads = {COARSE_ID: mk(COARSE_ID, model.coarse)}
            self._local = {}
            for a, m in model.fines.items():
                self.heads[fine_id(a)] = mk(fine_id(a), m)
                self._local[a] = {int(g): i for i, g in enumerate(model.fine_classes[a])}
        self.events_seen = 0

    @property
    def flat(self) -> bool:
        return isinstance(self.model, FlatModel)

    def _check(self, ev: StreamEvent):
        W = self.cfg.W
        if len(ev.fine_window) != W or len(ev.coarse_window) != W:
            raise ShapeMismatch(f"event windows must have length {W}")
        if not self.flat and self.model.index.fine_to_coarse[ev.fine_target] != ev.coarse_target:
            raise ValueError("coarse target inconsistent with fine target")

    def _feed_fine(self, a: int, events: Sequence[StreamEvent]):
        head, local = self.heads[fine_id(a)], self._local[a]
        for ev in events:
            head.push(ev.fine_window, local[ev.fine_target])

    def feed(self, events: Iterable[StreamEvent]) -> None:
        events = list(events)
        for ev in events:
            self._check(ev)
        self.events_seen += len(events)
        if self.flat:
            head = self.heads[FLAT_ID]
            for ev in events:
                head.push(ev.fine_window, ev.fine_target)
            return
        routed: dict[int, list] = {}
        for ev in events:
            routed.setdefault(route(self.model, ev.coarse_target), []).append(ev)
        coarse = self.heads[COARSE_ID]

        def run_coarse():
            for ev in events:
                coarse.push(ev.coarse_window, ev.coarse_target)

        if self.parallel and len(routed) > 1:
            with ThreadPoolExecutor(max_workers=len(routed) + 1) as pool:
                jobs = [pool.submit(run_coarse)]
                jobs += [pool.submit(self._feed_fine, a, evs) for a, evs in routed.items()]
                for j in jobs:
                    j.result()
        else:
            run_coarse()
            for a, evs in routed.items():
                self._feed_fine(a, evs)

    def flush(self) -> None:
        for head in self.heads.values():
            head.flush()

    def curves(self) -> list[CurvePoint]:
        return [p for h in self.heads.values() for p in h.curve]

    def steps(self) -> dict[str, int]:
        return {mid: h.steps for mid, h in self.heads.items()}


def train_online(events: Iterable[StreamEvent], model, cfg: TrainConfig | None = None,
                 parallel: bool = False):
    """Single pass over ``events``; returns ``(model, curves)``.  Updates in place."""
    trainer = OnlineTrainer(model, cfg, parallel=parallel)
    trainer.feed(events)
    trainer.flush()
    return model, trainer.curves()


def write_curves_csv(curves: Sequence[CurvePoint], stream) -> None:
    stream.write("model_id,iteration,mean_loss,running_accuracy\n")
    for p in curves:
        stream.write(f"{p.model_id},{p.iteration},{p.mean_loss!r},{p.running_accuracy!r}\n")


# --------------------------------------------------------------------------
# prediction

def fine_predict(model: HierModel, coarse_label: int, fine_windows) -> np.ndarray:
    """Global fine labels predicted by the fine model of ``coarse_label``."""
    a = route(model, coarse_label)
    probs = predict_proba(model.fines[a], fine_windows)
    return model.fine_classes[a][probs.argmax(axis=1)]


def predict_batch(model: HierModel, fine_windows, coarse_windows) -> tuple[np.ndarray, np.ndarray]:
    """Hierarchical predictions for aligned window arrays ``[N, W]``."""
    fine_windows = np.asarray(fine_windows, dtype=np.int64).reshape(-1, model.W)
    coarse_windows = np.asarray(coarse_windows, dtype=np.int64).reshape(-1, model.W)
    coarse_pred = predict_proba(model.coarse, coarse_windows).argmax(axis=1)
    fine_pred = np.zeros(len(coarse_pred), dtype=np.int64)
    for a in np.unique(coarse_pred):
        rows = coarse_pred == a
        fine_pred[rows] = fine_predict(model, int(a), fine_windows[rows])
    return fine_pred, coarse_pred


def predict(fine_window, coarse_window, model: HierModel) -> tuple[int, int]:
    if len(fine_window) != model.W or len(coarse_window) != model.W:
        raise ShapeMismatch(f"windows must have length {model.W}")
    f, c = predict_batch(model, [fine_window], [coarse_window])
    return int(f[0]), int(c[0])


def predict_flat(model: FlatModel, fine_windows) -> np.ndarray:
    return predict_proba(model.model, fine_windows).argmax(axis=1)


# --------------------------------------------------------------------------
# persistence

def _cfg_to_dict(cfg: TrainConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["arch"]["layer_order"] = list(cfg.arch.layer_order)
    return d


def _cfg_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    arch = dict(d.pop("arch"))
    arch["layer_order"] = tuple(arch["layer_order"])
    return TrainConfig(arch=ArchConfig(**arch), **d)


def _dump(model) -> bytes:
    subs = model.submodels()
    meta = {
        "kind": "flat" if isinstance(model, FlatModel) else "hierarchical",
        "cfg": _cfg_to_dict(model.cfg),
        "index": model.index.to_dict(),
        "arrays": [],
    }
    if isinstance(model, HierModel):
        meta["fine_classes"] = {str(a): model.fine_classes[a].tolist() for a in sorted(model.fine_classes)}
    blobs = []
    for mid, m in subs.items():
        for name in PARAM_NAMES:
            arr = np.ascontiguousarray(getattr(m, name), dtype="<f8")
            meta["arrays"].append({"model": mid, "param": name, "shape": list(arr.shape)})
            blobs.append(arr.tobytes())
    header = json.dumps(meta, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(blobs)


def save_model(model, path) -> None:
    Path(path).write_bytes(_dump(model))


def _load(data: bytes):
    if len(data) < len(MAGIC):
        raise CorruptFile("file shorter than its header")
    if data[:len(MAGIC)] != MAGIC:
        raise VersionMismatch(f"unrecognised header {data[:len(MAGIC)]!r}")
    pos = len(MAGIC)
    if len(data) < pos + 8:
        raise CorruptFile("truncated header length")
    (hlen,) = struct.unpack("<Q", data[pos:pos + 8])
    pos += 8
    try:
        meta = json.loads(data[pos:pos + hlen].decode("utf-8"))
        cfg = _cfg_from_dict(meta["cfg"])
        index = StationIndex.from_dict(meta["index"])
    except (UnicodeDecodeError, ValueError, KeyError, TypeError) as exc:
        raise CorruptFile(f"unreadable header: {exc}") from None
    pos += hlen
    params: dict[str, dict] = {}
    for entry in meta["arrays"]:
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(data):
            raise CorruptFile("truncated parameter data")
        arr = np.frombuffer(data[pos:pos + nbytes], dtype="<f8").astype(np.float64).reshape(shape)
        params.setdefault(entry["model"], {})[entry["param"]] = arr
        pos += nbytes
    if pos != len(data):
        raise CorruptFile("trailing bytes after parameter data")
    build = lambda mid: CnnModel(arch=cfg.arch, W=cfg.W, **params[mid])
    try:
        if meta["kind"] == "flat":
            return FlatModel(build(FLAT_ID), index, cfg)
        classes = {int(a): np.array(v, dtype=np.int64) for a, v in meta["fine_classes"].items()}
        fines = {a: build(fine_id(a)) for a in sorted(classes)}
        return HierModel(build(COARSE_ID), fines, classes, index, cfg)
    except KeyError as exc:
        raise CorruptFile(f"missing model block {exc}") from None


def load_model(path):
    return _load(Path(path).read_bytes())


def model_bytes(model) -> bytes:
    return _dump(model)
