"""Held-out evaluation, window sweeps and path export.

``fine_acc`` scores each fine model on the samples whose *true* LAC it owns,
so it measures the experts in isolation; ``whole_acc`` routes through the
coarse model's prediction.
"""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .encode import StationIndex, split_train_test
from .errors import EmptyTestSet, SequenceTooShort
from .hier import (COARSE_ID, FLAT_ID, FlatModel, HierModel, OnlineTrainer, StreamEvent, build_events,
                   build_flat_model, build_hier_model, fine_id, fine_predict, merge_streams, predict_batch,
                   predict_flat)
from .ingest import Trajectory
from .nn import TrainConfig

FINE_ROUTING = "true-label"
METRIC_FIELDS = ("W", "mode", "n_test", "coarse_acc", "fine_acc", "whole_acc", "flat_acc", "fine_routing")


@dataclass
class Metrics:
    n: int
    coarse_correct: int
    fine_correct: int
    whole_correct: int
    per_fine: dict = field(default_factory=dict)  # coarse label -> (samples, fine correct)

    @property
    def coarse_acc(self) -> float:
        return self.coarse_correct / self.n

    @property
    def fine_acc(self) -> float:
        return self.fine_correct / self.n

    @property
    def whole_acc(self) -> float:
        return self.whole_correct / self.n


def _arrays(events: Sequence[StreamEvent]):
    fw = np.array([e.fine_window for e in events], dtype=np.int64)
    cw = np.array([e.coarse_window for e in events], dtype=np.int64)
    ft = np.array([e.fine_target for e in events], dtype=np.int64)
    ct = np.array([e.coarse_target for e in events], dtype=np.int64)
    return fw, cw, ft, ct


def evaluate(model: HierModel, events: Sequence[StreamEvent]) -> Metrics:
    if not events:
        raise EmptyTestSet("no test samples")
    fw, cw, ft, ct = _arrays(events)
    fine_pred, coarse_pred = predict_batch(model, fw, cw)
    fine_ok = np.zeros(len(events), dtype=bool)
    per_fine = {}
    for a in sorted(model.fines):
        rows = ct == a
        if rows.any():
            fine_ok[rows] = fine_predict(model, a, fw[rows]) == ft[rows]
        per_fine[a] = (int(rows.sum()), int(fine_ok[rows].sum()))
    return Metrics(
        n=len(events),
        coarse_correct=int(np.sum(coarse_pred == ct)),
        fine_correct=int(fine_ok.sum()),
        whole_correct=int(np.sum(fine_pred == ft)),
        per_fine=per_fine,
    )


def evaluate_flat(model: FlatModel, events: Sequence[StreamEvent]) -> float:
    if not events:
        raise EmptyTestSet("no test samples")
    fw, _, ft, _ = _arrays(events)
    return float(np.mean(predict_flat(model, fw) == ft))


# --------------------------------------------------------------------------
# data preparation and training loops

def prepare_events(trajectories: Sequence[Trajectory], index: StationIndex, W: int,
                   train_fraction: float = 19 / 23) -> tuple[list[StreamEvent], list[StreamEvent]]:
    """Per-user chronological split, then users merged into one stream by time."""
    train, test = [], []
    for traj in trajectories:
        tr, te = split_train_test(build_events(traj, index, W), train_fraction)
        train.append(tr)
        test.append(te)
    return merge_streams(train), merge_streams(test)


def fit(model, events: Sequence[StreamEvent], cfg: TrainConfig | None = None, parallel: bool = False):
    """``cfg.epochs`` online passes over ``events``; returns the trainer."""
    cfg = cfg or model.cfg
    trainer = OnlineTrainer(model, cfg, parallel=parallel)
    for _ in range(cfg.epochs):
        trainer.feed(events)
    trainer.flush()
    return trainer


def fit_budget(model, events: Sequence[StreamEvent], cfg: TrainConfig | None = None,
               parallel: bool = False):
    """Cycle the stream until every fed sub-model has taken ``cfg.iterations`` steps.

    Each network gets the same number of SGD updates, so a fine model with a
    small share of the stream revisits its events more often than the coarse
    model does.  Fine models that receive no events stay untouched.
    """
    cfg = cfg or model.cfg
    trainer = OnlineTrainer(model, cfg, parallel=parallel)
    if isinstance(model, FlatModel):
        fed = [FLAT_ID] if events else []
    else:
        fed = ([COARSE_ID] if events else []) + [fine_id(a) for a in sorted({e.coarse_target for e in events})]
    while any(trainer.heads[mid].steps < cfg.iterations for mid in fed):
        trainer.feed(events)
        trainer.flush()
    return trainer


SCHEDULES = {"epochs": fit, "steps": fit_budget}


@dataclass
class SweepRow:
    W: int
    metrics: Metrics
    flat_acc: float | None = None


def sweep_windows(trajectories: Sequence[Trajectory], index: StationIndex, Ws: Sequence[int],
                  cfg: TrainConfig, train_fraction: float = 19 / 23, include_flat: bool = True,
                  schedule: str = "epochs") -> list[SweepRow]:
    """Train and evaluate one hierarchy (and optionally a flat baseline) per window length.

    ``schedule`` is ``"epochs"`` (``cfg.epochs`` passes over the stream) or
    ``"steps"`` (``cfg.iterations`` updates for every network); both models
    always get the same schedule.
    """
    if schedule not in SCHEDULES:
        raise ValueError(f"schedule must be one of {sorted(SCHEDULES)}")
    train_fn = SCHEDULES[schedule]
    Ws = list(Ws)
    if not Ws:
        return []
    longest = max((len(t) for t in trajectories), default=0)
    if longest <= max(Ws):
        raise SequenceTooShort(f"longest trajectory has {longest} points, need more than {max(Ws)}")
    rows = []
    for W in Ws:
        wcfg = dataclasses.replace(cfg, W=W)
        train, test = prepare_events(trajectories, index, W, train_fraction)
        if not train or not test:
            raise SequenceTooShort(f"W={W} leaves an empty train or test split")
        model = build_hier_model(index, wcfg)
        train_fn(model, train, wcfg)
        flat_acc = None
        if include_flat:
            flat = build_flat_model(index, wcfg)
            train_fn(flat, train, wcfg)
            flat_acc = evaluate_flat(flat, test)
        rows.append(SweepRow(W, evaluate(model, test), flat_acc))
    return rows


def write_metrics_csv(rows: Sequence[dict], stream: IO[str]) -> None:
    writer = csv.DictWriter(stream, fieldnames=METRIC_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow(r)


def metrics_row(W: int, metrics: Metrics | None = None, flat_acc: float | None = None) -> dict:
    fmt = lambda v: "" if v is None else f"{v:.6f}"
    if metrics is None:
        return {"W": W, "mode": "flat", "n_test": "", "coarse_acc": "", "fine_acc": "",
                "whole_acc": fmt(flat_acc), "flat_acc": fmt(flat_acc), "fine_routing": ""}
    return {"W": W, "mode": "hierarchical", "n_test": metrics.n,
            "coarse_acc": fmt(metrics.coarse_acc), "fine_acc": fmt(metrics.fine_acc),
            "whole_acc": fmt(metrics.whole_acc), "flat_acc": fmt(flat_acc),
            "fine_routing": FINE_ROUTING}


# --------------------------------------------------------------------------
# path export

@dataclass(frozen=True)
class PathRow:
    t: int
    true_lon: float
    true_lat: float
    pred_lon: float
    pred_lat: float


def export_paths(model, trajectory: Trajectory, index: StationIndex) -> list[PathRow]:
    """True and predicted station coordinates for every predictable step."""
    W = model.cfg.W
    if len(trajectory) <= W:
        raise SequenceTooShort(f"trajectory of {len(trajectory)} points cannot fill a window of {W}")
    events = build_events(trajectory, index, W)
    fw, cw, ft, _ = _arrays(events)
    if isinstance(model, FlatModel):
        pred = predict_flat(model, fw)
    else:
        pred, _ = predict_batch(model, fw, cw)
    rows = []
    for k, (true, guess) in enumerate(zip(ft, pred)):
        tp, pp = index.label_to_point[true], index.label_to_point[guess]
        rows.append(PathRow(W + k, tp.longitude, tp.latitude, pp.longitude, pp.latitude))
    return rows


def write_paths_csv(rows: Sequence[PathRow], stream: IO[str]) -> None:
    stream.write("t,true_lon,true_lat,pred_lon,pred_lat\n")
    for r in rows:
        stream.write(f"{r.t},{r.true_lon!r},{r.true_lat!r},{r.pred_lon!r},{r.pred_lat!r}\n")
