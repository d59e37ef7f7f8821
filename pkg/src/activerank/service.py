"""HTTP service for human-in-the-loop annotation.

The active loop runs on a worker thread with an oracle that blocks until a
human labels every queued pair through the REST endpoints. Label commits
and phase transitions all pass through one lock, so the loop and any
number of HTTP readers stay consistent.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

from fastapi import FastAPI
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles

from . import runlog, uncertainty
from .data import Dataset, DatasetSplit, SimulatedOracle
from .loop import LoopConfig, run_loop
from .network import NetworkParams
from .ranking import LEGAL_LABELS, RelativePair, TrainConfig

log = logging.getLogger(__name__)

PHASE_COLLECTING = "collecting"
PHASE_TRAINING = "training"
PHASE_DONE = "done"


@dataclass
class PendingSlot:
    pair_id: str
    pair: RelativePair
    label: float | None = None


class Session:
    """Mutable annotation-session state behind a single lock."""

    def __init__(self, run_id: str, n_train: int, total_rounds: int):
        self.run_id = run_id
        self.n_train = n_train
        self.total_rounds = total_rounds
        self.lock = threading.Lock()
        self.ready = threading.Condition(self.lock)
        self.phase = PHASE_TRAINING
        self.round = 0
        self.pending: list[PendingSlot] = []
        self.labeled_total = 0
        self.last_metrics: dict | None = None
        self.latest_params_round: int | None = None
        self.error: str | None = None

    # --- loop side -------------------------------------------------------

    def offer_pairs(self, pairs: list[RelativePair], round_index: int) -> list[float]:
        """Queue pairs for annotation and block until all are labeled."""
        with self.ready:
            self.pending = [
                PendingSlot(pair_id=f"r{round_index}-p{k}", pair=p)
                for k, p in enumerate(pairs)
            ]
            self.round = round_index
            self.phase = PHASE_COLLECTING
            self.ready.wait_for(lambda: all(s.label is not None for s in self.pending))
            labels = [s.label for s in self.pending]
            self.pending = []
            return labels  # type: ignore[return-value]

    def note_round(self, round_index: int, record: dict) -> None:
        with self.lock:
            self.last_metrics = record
            self.latest_params_round = round_index

    def finish(self, error: str | None = None) -> None:
        with self.lock:
            self.phase = PHASE_DONE
            self.error = error

    # --- HTTP side -------------------------------------------------------

    def next_pair(self):
        with self.lock:
            if self.phase == PHASE_TRAINING:
                return "training", None
            if self.phase == PHASE_DONE:
                return "done", None
            slot = next((s for s in self.pending if s.label is None), None)
            if slot is None:
                return "empty", None
            return "ok", {
                "slot": slot,
                "round": self.round,
                "remaining": sum(1 for s in self.pending if s.label is None),
                "queued": len(self.pending),
            }

    def submit(self, pair_id: str, label: float) -> tuple[str, int]:
        """Returns (outcome, remaining); outcome in ok/unknown/duplicate/conflict."""
        with self.ready:
            if self.phase != PHASE_COLLECTING:
                return "conflict", 0
            slot = next((s for s in self.pending if s.pair_id == pair_id), None)
            if slot is None:
                return "unknown", 0
            if slot.label is not None:
                return "duplicate", 0
            slot.label = float(label)
            self.labeled_total += 1
            remaining = sum(1 for s in self.pending if s.label is None)
            if remaining == 0:
                self.phase = PHASE_TRAINING
                self.ready.notify_all()
            return "ok", remaining

    def status(self) -> dict:
        with self.lock:
            return {
                "run_id": self.run_id,
                "round": self.round,
                "phase": self.phase,
                "labeled_count": self.labeled_total,
                "labeling_ratio": self.labeled_total / self.n_train if self.n_train else 0.0,
                "total_rounds": self.total_rounds,
                "last_metrics": self.last_metrics,
                "error": self.error,
            }


class HumanOracle:
    """Annotation source backed by the HTTP session.

    Relative labels come from people; absolute labels (multi-task mode
    only) still come from the dataset's ground truth, with the usual
    unique-image cost accounting.
    """

    source = "human"

    def __init__(self, session: Session, dataset: Dataset):
        self.session = session
        self._absolute = SimulatedOracle(dataset)
        self.relative_queries = 0

    def annotate_pairs(self, pairs, round_index: int) -> list[float]:
        labels = self.session.offer_pairs(list(pairs), round_index)
        self.relative_queries += len(labels)
        return labels

    def absolute(self, sample_id: str) -> int:
        return self._absolute.absolute(sample_id)

    @property
    def n_absolute_unique(self) -> int:
        return self._absolute.n_absolute_unique


class AnnotationServer:
    """Owns the session, the loop thread, and the run directory."""

    def __init__(
        self,
        run_id: str,
        split: DatasetSplit,
        loop_config: LoopConfig,
        train_config: TrainConfig,
        params: NetworkParams,
        out_dir,
    ):
        self.run_id = run_id
        self.split = split
        self.loop_config = loop_config
        self.train_config = train_config
        self.params = params
        self.out_dir = out_dir
        self.session = Session(run_id, len(split.train), loop_config.rounds)
        self.oracle = HumanOracle(self.session, split.train)
        self.thread: threading.Thread | None = None
        self._scores_cache: tuple[int, str] | None = None

    def start(self) -> None:
        if self.thread is not None:
            return
        self.thread = threading.Thread(target=self._run, name="annotation-loop", daemon=True)
        self.thread.start()

    def _run(self) -> None:
        try:
            run_loop(
                self.split,
                self.oracle,
                self.loop_config,
                self.train_config,
                self.params,
                out_dir=self.out_dir,
                observer=self.session.note_round,
            )
            self.session.finish()
        except Exception as exc:  # surface the failure through /status
            log.exception("annotation loop failed")
            self.session.finish(error=str(exc))

    def join(self, timeout: float | None = None) -> None:
        if self.thread is not None:
            self.thread.join(timeout)

    def scores_csv(self) -> str | None:
        """CSV posterior dump for the latest trained parameters."""
        with self.session.lock:
            latest = self.session.latest_params_round
        if latest is None:
            return None
        if self._scores_cache is not None and self._scores_cache[0] == latest:
            return self._scores_cache[1]
        params = runlog.load_params(f"{self.out_dir}/params-round-{latest}.bin")
        posteriors = uncertainty.posterior_for_pool(
            params,
            self.split.train.samples,
            self.loop_config.draws,
            base_seed=self.loop_config.seed,
        )
        lines = ["id,mean,variance"]
        lines += [f"{p.sample_id},{p.mean!r},{p.variance!r}" for p in posteriors]
        text = "\n".join(lines) + "\n"
        self._scores_cache = (latest, text)
        return text


def _sample_card(dataset: Dataset, sample_id: str) -> dict:
    s = dataset[sample_id]
    return {"id": s.id, "features": [float(v) for v in s.features], "group": s.group}


def create_app(server: AnnotationServer, ui_dir=None) -> FastAPI:
    app = FastAPI(title="activerank annotation service")
    session = server.session
    train = server.split.train

    def wrong_run(run_id: str) -> JSONResponse | None:
        if run_id != server.run_id:
            return JSONResponse({"detail": f"unknown run {run_id!r}"}, status_code=404)
        return None

    @app.get("/runs/{run_id}/next-pair")
    def next_pair(run_id: str):
        bad = wrong_run(run_id)
        if bad:
            return bad
        outcome, snap = session.next_pair()
        if outcome == "training":
            return JSONResponse({"detail": "training in progress"}, status_code=409)
        if outcome in ("done", "empty"):
            return Response(status_code=204)
        slot = snap["slot"]
        return {
            "pair_id": slot.pair_id,
            "round": snap["round"],
            "left": _sample_card(train, slot.pair.id_i),
            "right": _sample_card(train, slot.pair.id_j),
            "remaining": snap["remaining"],
            "queued": snap["queued"],
        }

    @app.post("/runs/{run_id}/labels")
    def post_label(run_id: str, payload: dict):
        bad = wrong_run(run_id)
        if bad:
            return bad
        pair_id = payload.get("pair_id")
        label = payload.get("label")
        if not isinstance(pair_id, str) or label not in LEGAL_LABELS:
            return JSONResponse(
                {"detail": f"label must be one of {list(LEGAL_LABELS)}"}, status_code=422
            )
        outcome, remaining = session.submit(pair_id, float(label))
        if outcome == "unknown":
            return JSONResponse({"detail": f"unknown pair_id {pair_id!r}"}, status_code=404)
        if outcome == "duplicate":
            return JSONResponse(
                {"detail": "pair already labeled; first write wins"}, status_code=409
            )
        if outcome == "conflict":
            return JSONResponse({"detail": "not collecting labels"}, status_code=409)
        return {"ok": True, "remaining": remaining}

    @app.get("/runs/{run_id}/status")
    def status(run_id: str):
        bad = wrong_run(run_id)
        if bad:
            return bad
        return session.status()

    @app.get("/runs/{run_id}/scores")
    def scores(run_id: str):
        bad = wrong_run(run_id)
        if bad:
            return bad
        text = server.scores_csv()
        if text is None:
            return JSONResponse({"detail": "no trained model yet"}, status_code=409)
        return PlainTextResponse(text, media_type="text/csv")

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
