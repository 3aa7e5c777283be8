"""Interactive preference-optimization sessions over HTTP.

Each session is an append-only JSONL event log (created / proposal /
answer); every piece of state — training data, reference point, pending
proposal, fitted kernel, posterior summaries — is a deterministic fold of
that log with seeds fixed at creation, so replaying a log byte-for-byte
reproduces the session. State is re-folded from disk per request, which
makes crash recovery automatic.
"""

from __future__ import annotations

import json
import secrets
import threading
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .acquisition import AcquisitionSpec, optimize_acquisition, shortest_interval, \
    update_reference
from .duels import DuelLog, build_duel_matrix, build_mixed_matrix
from .errors import (
    InvalidConfig,
    NonValidNotEnabled,
    NoPendingProposal,
    PendingProposalExists,
    SessionNotFound,
    SkewPboError,
)
from .kernels import RbfArdKernel
from .laplace import fit_laplace, laplace_pair_diff_samples
from .skewgp import fit_posterior, pair_diff_samples, skewness_statistic

OUTCOMES = ("candidate", "reference", "non_valid")


@dataclass
class SessionConfig:
    surrogate: str = "skewgp"
    acquisition: AcquisitionSpec = field(default_factory=AcquisitionSpec)
    kernel: dict | None = None
    hyperopt_every: int = 5
    hyperopt_budget: int = 20
    mixed_mode: bool = False
    u1_bank: int = 2000
    u1_chains: int = 4
    seed: int | None = None
    dimension_labels: list | None = None

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "surrogate", "kernel", "hyperopt_every", "hyperopt_budget",
            "mixed_mode", "u1_bank", "u1_chains", "seed", "dimension_labels")}
        d["acquisition"] = self.acquisition.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SessionConfig":
        d = dict(d)
        acq = d.pop("acquisition", None)
        cfg = cls(acquisition=AcquisitionSpec.from_dict(acq) if acq else AcquisitionSpec(), **d)
        if cfg.surrogate not in ("skewgp", "gpl"):
            raise InvalidConfig(f"unknown surrogate {cfg.surrogate!r}")
        return cfg


@dataclass
class SessionState:
    session_id: str
    bounds: np.ndarray
    config: SessionConfig
    seed: int
    duel_log: DuelLog
    x_r: np.ndarray | None = None
    pending: dict | None = None
    n_answers: int = 0
    n_proposals: int = 0
    events: list = field(default_factory=list)


def _srng(seed: int, purpose: str, k: int = 0) -> np.random.Generator:
    # crc32 keeps the purpose tag stable across processes (hash() is not)
    return np.random.default_rng(
        np.random.SeedSequence([seed, zlib.crc32(purpose.encode()), k])
    )


class SessionStore:
    """Event logs on disk plus per-session write locks."""

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def path(self, session_id: str) -> Path:
        return self.data_dir / f"{session_id}.jsonl"

    def list_ids(self) -> list[str]:
        return sorted(p.stem for p in self.data_dir.glob("*.jsonl"))

    def append(self, session_id: str, event: dict) -> None:
        with self.path(session_id).open("a") as fh:
            fh.write(json.dumps(event) + "\n")

    def events(self, session_id: str) -> list[dict]:
        p = self.path(session_id)
        if not p.exists():
            raise SessionNotFound(session_id)
        return [json.loads(line) for line in p.read_text().splitlines() if line.strip()]

    def create(self, bounds, config: SessionConfig) -> str:
        bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
        if bounds.ndim != 2 or bounds.shape[1] != 2:
            raise InvalidConfig("bounds must be a list of [low, high] pairs")
        if np.any(bounds[:, 1] <= bounds[:, 0]):
            raise InvalidConfig("bounds must have positive width")
        session_id = "s" + secrets.token_hex(6)
        seed = config.seed if config.seed is not None else secrets.randbelow(2**31 - 1)
        self.append(session_id, {
            "type": "created",
            "id": session_id,
            "bounds": bounds.tolist(),
            "config": config.to_dict(),
            "seed": int(seed),
        })
        return session_id


def fold_events(events: list[dict]) -> SessionState:
    """Reconstruct session state from its event log."""
    if not events or events[0]["type"] != "created":
        raise SessionNotFound("log does not start with a created event")
    head = events[0]
    config = SessionConfig.from_dict(head["config"])
    bounds = np.asarray(head["bounds"], dtype=float)
    state = SessionState(
        session_id=head["id"],
        bounds=bounds,
        config=config,
        seed=int(head["seed"]),
        duel_log=DuelLog(dim=bounds.shape[0]),
        events=events,
    )
    for ev in events[1:]:
        if ev["type"] == "proposal":
            if state.pending is not None:
                raise PendingProposalExists("log contains stacked proposals")
            state.pending = ev
            state.n_proposals += 1
        elif ev["type"] == "answer":
            if state.pending is None:
                raise NoPendingProposal("answer without a pending proposal")
            _apply_answer(state, state.pending, ev["outcome"])
            state.pending = None
            state.n_answers += 1
    return state


def _apply_answer(state: SessionState, proposal: dict, outcome: str) -> None:
    cand = np.asarray(proposal["candidate"], dtype=float)
    ref = np.asarray(proposal["reference"], dtype=float)
    log = state.duel_log
    if outcome == "non_valid":
        log.add_label(cand, False)
        if state.x_r is None:
            state.x_r = ref
        return
    if state.config.mixed_mode:
        log.add_label(cand, True)
    if not np.array_equal(cand, ref):
        if outcome == "candidate":
            log.add_duel(cand, ref)
        else:
            log.add_duel(ref, cand)
    state.x_r = update_reference(ref, cand, outcome)


def _current_kernel(state: SessionState) -> RbfArdKernel:
    cfg = state.config
    spans = state.bounds[:, 1] - state.bounds[:, 0]
    kernel = (RbfArdKernel.from_dict(cfg.kernel) if cfg.kernel
              else RbfArdKernel(lengthscales=0.2 * spans, variance=1.0))
    if cfg.hyperopt_every <= 0 or state.n_answers < cfg.hyperopt_every:
        return kernel
    bucket = state.n_answers // cfg.hyperopt_every
    x, w = _training_data(state)
    if w.n_rows == 0:
        return kernel
    rng = _srng(state.seed, "hyperopt", bucket)
    if cfg.surrogate == "skewgp":
        from .skewgp import optimize_hyperparams

        kernel, _ = optimize_hyperparams(x, w, kernel, cfg.hyperopt_budget, rng)
    else:
        from .laplace import optimize_hyperparams_laplace

        kernel, _ = optimize_hyperparams_laplace(x, w, kernel, cfg.hyperopt_budget, rng)
    return kernel


def _training_data(state: SessionState):
    if state.config.mixed_mode:
        data = state.duel_log.mixed_dataset()
        return data.points, build_mixed_matrix(data)
    data = state.duel_log.preference_dataset()
    return data.points, build_duel_matrix(data)


def _fit(state: SessionState, purpose: str):
    cfg = state.config
    x, w = _training_data(state)
    kernel = _current_kernel(state)
    rng = _srng(state.seed, purpose + "-bank", state.n_answers)
    if cfg.surrogate == "skewgp":
        return fit_posterior(x, w, kernel, bank_size=cfg.u1_bank, rng=rng,
                             n_chains=cfg.u1_chains), kernel
    return fit_laplace(x, w, kernel), kernel


def next_duel(store: SessionStore, session_id: str) -> dict:
    with store.lock(session_id):
        state = fold_events(store.events(session_id))
        if state.pending is not None:
            raise PendingProposalExists(session_id)
        if state.n_answers == 0:
            rng = _srng(state.seed, "init")
            lo, hi = state.bounds[:, 0], state.bounds[:, 1]
            pts = rng.uniform(lo, hi, size=(2, state.bounds.shape[0]))
            event = {
                "type": "proposal", "round": state.n_proposals,
                "candidate": pts[0].tolist(), "reference": pts[1].tolist(),
                "value": 0.0,
            }
        else:
            post, _ = _fit(state, "proposal")
            proposal = optimize_acquisition(
                post, state.config.acquisition, state.x_r, state.bounds,
                _srng(state.seed, "candidates", state.n_proposals),
            )
            event = {
                "type": "proposal", "round": state.n_proposals,
                "candidate": proposal.candidate.tolist(),
                "reference": np.atleast_1d(state.x_r).tolist(),
                "value": proposal.value,
            }
        store.append(session_id, event)
        return event


def answer(store: SessionStore, session_id: str, outcome: str) -> dict:
    if outcome not in OUTCOMES:
        raise InvalidConfig(f"outcome must be one of {OUTCOMES}")
    with store.lock(session_id):
        state = fold_events(store.events(session_id))
        if state.pending is None:
            raise NoPendingProposal(session_id)
        if outcome == "non_valid" and not state.config.mixed_mode:
            raise NonValidNotEnabled(session_id)
        store.append(session_id, {"type": "answer", "outcome": outcome})
        state = fold_events(store.events(session_id))
        return {
            "x_r": np.atleast_1d(state.x_r).tolist(),
            "n_answers": state.n_answers,
        }


def posterior_summary(store: SessionStore, session_id: str,
                      points: np.ndarray) -> dict:
    """Per query point: Monte Carlo mean of f(x) - f(x_r), shortest-95%
    band, and the skewness statistic, with the seeds that produced them."""
    with store.lock(session_id):
        state = fold_events(store.events(session_id))
    return summary_from_state(state, points)


def summary_from_state(state: SessionState, points: np.ndarray) -> dict:
    if state.n_answers == 0:
        raise NoPendingProposal("no answered duels yet")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    post, kernel = _fit(state, "summary")
    n_mc = state.config.acquisition.mc_samples
    mc_seed_stream = _srng(state.seed, "summary-mc", state.n_answers)
    rows = []
    if points.size:
        z = mc_seed_stream.standard_normal((n_mc, 2))
        if state.config.surrogate == "skewgp":
            idx = mc_seed_stream.integers(0, max(post.bank_size, 1), size=n_mc)
            diffs = pair_diff_samples(post, points, state.x_r, z, idx)
        else:
            diffs = laplace_pair_diff_samples(post, points, state.x_r, z)
        symmetric = state.config.surrogate != "skewgp"
        for i in range(points.shape[0]):
            d = diffs[i]
            if d.std() < 1e-12:
                rows.append({"x": points[i].tolist(), "mean_diff": float(d.mean()),
                             "band_lo": float(d.mean()), "band_hi": float(d.mean()),
                             "ss": 0.0})
                continue
            lo, hi = shortest_interval(d, 0.95)
            # a Gaussian surrogate is symmetric by construction: report zero
            # rather than Monte Carlo noise
            rows.append({"x": points[i].tolist(), "mean_diff": float(d.mean()),
                         "band_lo": lo, "band_hi": hi,
                         "ss": 0.0 if symmetric else skewness_statistic(d)})
    return {
        "rows": rows,
        "meta": {
            "n_samples": n_mc,
            "seed": state.seed,
            "n_answers": state.n_answers,
            "x_r": np.atleast_1d(state.x_r).tolist(),
            "kernel": kernel.to_dict(),
            "surrogate": state.config.surrogate,
        },
    }


def session_snapshot(store: SessionStore, session_id: str) -> dict:
    with store.lock(session_id):
        state = fold_events(store.events(session_id))
    return {
        "id": state.session_id,
        "bounds": state.bounds.tolist(),
        "config": state.config.to_dict(),
        "seed": state.seed,
        "x_r": None if state.x_r is None else np.atleast_1d(state.x_r).tolist(),
        "pending": state.pending,
        "n_answers": state.n_answers,
        "n_events": len(state.events),
        "events": state.events,
        "mixed_mode": state.config.mixed_mode,
        "dimension_labels": state.config.dimension_labels,
    }


_ERROR_CODES = {
    "SessionNotFound": 404,
    "PendingProposalExists": 409,
    "NoPendingProposal": 409,
    "NonValidNotEnabled": 409,
    "InvalidConfig": 400,
}


def create_app(data_dir) -> FastAPI:
    store = SessionStore(data_dir)
    app = FastAPI(title="skewpbo sessions")
    app.state.store = store

    @app.exception_handler(SkewPboError)
    async def _domain_error(_request: Request, exc: SkewPboError):
        code = _ERROR_CODES.get(type(exc).__name__, 500)
        return JSONResponse(status_code=code,
                            content={"error": type(exc).__name__, "detail": str(exc)})

    @app.post("/sessions")
    def create_session(body: dict):
        config = SessionConfig.from_dict(body.get("config", {}))
        session_id = store.create(body["bounds"], config)
        return {"id": session_id}

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": store.list_ids()}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return session_snapshot(store, session_id)

    @app.post("/sessions/{session_id}/next")
    def post_next(session_id: str):
        return next_duel(store, session_id)

    @app.post("/sessions/{session_id}/answer")
    def post_answer(session_id: str, body: dict):
        return answer(store, session_id, body.get("outcome", ""))

    @app.get("/sessions/{session_id}/summary")
    def get_summary(session_id: str, points: str | None = None,
                    start: float | None = None, stop: float | None = None,
                    num: int = 0):
        with store.lock(session_id):
            state = fold_events(store.events(session_id))
        if points is not None:
            pts = np.asarray(json.loads(points), dtype=float)
            if pts.ndim == 1:
                pts = pts[:, None]
        elif num > 0:
            lo = state.bounds[0, 0] if start is None else start
            hi = state.bounds[0, 1] if stop is None else stop
            pts = np.linspace(lo, hi, num)[:, None]
            if state.bounds.shape[0] > 1:
                raise InvalidConfig("grid queries require a 1D session; pass points")
        else:
            pts = np.zeros((0, state.bounds.shape[0]))
        return summary_from_state(state, pts)

    return app
