import json
import warnings

import numpy as np
import pytest
from fastapi.testclient import TestClient

from skewpbo.service import (
    SessionConfig,
    SessionStore,
    create_app,
    fold_events,
    summary_from_state,
)

warnings.filterwarnings("ignore", category=RuntimeWarning)

FAST_CONFIG = {
    "surrogate": "skewgp",
    "acquisition": {"kind": "ucb", "mc_samples": 128, "n_candidates": 64},
    "kernel": {"lengthscales": [0.35], "variance": 100.0},
    "hyperopt_every": 0,
    "u1_bank": 128,
    "u1_chains": 4,
    "seed": 424242,
}


@pytest.fixture()
def client(tmp_path):
    app = create_app(tmp_path / "sessions")
    with TestClient(app) as c:
        yield c


def make_session(client, config=None, bounds=None):
    body = {"bounds": bounds or [[-3.0, 3.0]], "config": config or FAST_CONFIG}
    resp = client.post("/sessions", json=body)
    assert resp.status_code == 200, resp.text
    return resp.json()["id"]


def drive_duels(client, sid, n, prefer="best"):
    """Answer n duels, preferring the point with larger cos5exp value."""
    import math

    def g(x):
        return math.cos(5 * x[0]) + math.exp(-0.5 * x[0] ** 2)

    for _ in range(n):
        prop = client.post(f"/sessions/{sid}/next").json()
        cand, ref = prop["candidate"], prop["reference"]
        outcome = "candidate" if g(cand) > g(ref) else "reference"
        r = client.post(f"/sessions/{sid}/answer", json={"outcome": outcome})
        assert r.status_code == 200, r.text


class TestSessionLifecycle:
    def test_create_returns_id_with_empty_log(self, client):
        sid = make_session(client)
        snap = client.get(f"/sessions/{sid}").json()
        assert snap["id"] == sid
        assert snap["n_answers"] == 0
        assert snap["pending"] is None
        assert len(snap["events"]) == 1

    def test_zero_width_bounds_rejected(self, client):
        resp = client.post("/sessions", json={"bounds": [[1.0, 1.0]], "config": FAST_CONFIG})
        assert resp.status_code == 400
        assert resp.json()["error"] == "InvalidConfig"

    def test_mixed_flag_plumbs_through(self, client):
        cfg = dict(FAST_CONFIG, mixed_mode=True)
        sid = make_session(client, config=cfg)
        assert client.get(f"/sessions/{sid}").json()["mixed_mode"] is True

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/missing").status_code == 404

    def test_list_sessions(self, client):
        a = make_session(client)
        b = make_session(client)
        ids = client.get("/sessions").json()["sessions"]
        assert set([a, b]) <= set(ids)


class TestNextDuel:
    def test_fresh_session_gives_two_random_inbounds_points(self, client):
        sid = make_session(client)
        prop = client.post(f"/sessions/{sid}/next").json()
        for key in ("candidate", "reference"):
            assert -3.0 <= prop[key][0] <= 3.0
        assert prop["candidate"] != prop["reference"]

    def test_double_next_conflicts(self, client):
        sid = make_session(client)
        assert client.post(f"/sessions/{sid}/next").status_code == 200
        resp = client.post(f"/sessions/{sid}/next")
        assert resp.status_code == 409
        assert resp.json()["error"] == "PendingProposalExists"

    def test_after_answer_pairs_new_point_against_reference(self, client):
        sid = make_session(client)
        drive_duels(client, sid, 1)
        snap = client.get(f"/sessions/{sid}").json()
        x_r = snap["x_r"]
        prop = client.post(f"/sessions/{sid}/next").json()
        assert prop["reference"] == x_r


class TestAnswer:
    def test_candidate_win_updates_reference(self, client):
        sid = make_session(client)
        prop = client.post(f"/sessions/{sid}/next").json()
        out = client.post(f"/sessions/{sid}/answer", json={"outcome": "candidate"}).json()
        assert out["x_r"] == prop["candidate"]

    def test_reference_win_keeps_reference(self, client):
        sid = make_session(client)
        prop = client.post(f"/sessions/{sid}/next").json()
        out = client.post(f"/sessions/{sid}/answer", json={"outcome": "reference"}).json()
        assert out["x_r"] == prop["reference"]

    def test_answer_without_pending_conflicts(self, client):
        sid = make_session(client)
        resp = client.post(f"/sessions/{sid}/answer", json={"outcome": "candidate"})
        assert resp.status_code == 409
        assert resp.json()["error"] == "NoPendingProposal"

    def test_repeated_answer_never_double_appends(self, client):
        sid = make_session(client)
        client.post(f"/sessions/{sid}/next")
        first = client.post(f"/sessions/{sid}/answer", json={"outcome": "candidate"})
        assert first.status_code == 200
        n_events = client.get(f"/sessions/{sid}").json()["n_events"]
        second = client.post(f"/sessions/{sid}/answer", json={"outcome": "candidate"})
        assert second.status_code == 409
        assert client.get(f"/sessions/{sid}").json()["n_events"] == n_events

    def test_non_valid_requires_mixed_mode(self, client):
        sid = make_session(client)
        client.post(f"/sessions/{sid}/next")
        resp = client.post(f"/sessions/{sid}/answer", json={"outcome": "non_valid"})
        assert resp.status_code == 409
        assert resp.json()["error"] == "NonValidNotEnabled"

    def test_non_valid_keeps_reference_and_adds_class_row(self, client):
        cfg = dict(FAST_CONFIG, mixed_mode=True)
        sid = make_session(client, config=cfg)
        prop = client.post(f"/sessions/{sid}/next").json()
        out = client.post(f"/sessions/{sid}/answer", json={"outcome": "non_valid"}).json()
        assert out["x_r"] == prop["reference"]
        # the fold carries a single 0-label and no duels
        app_store = client.app.state.store
        state = fold_events(app_store.events(sid))
        assert state.duel_log.labels == {0: 0}
        assert state.duel_log.duels == []


class TestSummary:
    def test_requires_an_answer(self, client):
        sid = make_session(client)
        resp = client.get(f"/sessions/{sid}/summary", params={"num": 5})
        assert resp.status_code == 409

    def test_reference_point_diff_is_zero(self, client):
        sid = make_session(client)
        drive_duels(client, sid, 2)
        x_r = client.get(f"/sessions/{sid}").json()["x_r"]
        resp = client.get(f"/sessions/{sid}/summary",
                          params={"points": json.dumps([x_r])})
        row = resp.json()["rows"][0]
        assert row["mean_diff"] == 0.0
        assert row["band_lo"] <= 0.0 <= row["band_hi"]

    def test_empty_points_gives_empty_table(self, client):
        sid = make_session(client)
        drive_duels(client, sid, 1)
        resp = client.get(f"/sessions/{sid}/summary")
        assert resp.json()["rows"] == []

    def test_summary_matches_library_replay_bit_for_bit(self, client, tmp_path):
        sid = make_session(client)
        drive_duels(client, sid, 3)
        via_http = client.get(f"/sessions/{sid}/summary", params={"num": 7}).json()
        # library-only replay from the exported event log
        events = client.get(f"/sessions/{sid}").json()["events"]
        state = fold_events(events)
        pts = np.linspace(-3.0, 3.0, 7)[:, None]
        direct = summary_from_state(state, pts)
        assert json.loads(json.dumps(direct)) == via_http


class TestCrashRecovery:
    def test_restart_reconstructs_everything(self, tmp_path):
        data_dir = tmp_path / "sessions"
        app1 = create_app(data_dir)
        with TestClient(app1) as c1:
            sid = make_session(c1)
            drive_duels(c1, sid, 3)
            snap1 = c1.get(f"/sessions/{sid}").json()
            sum1 = c1.get(f"/sessions/{sid}/summary", params={"num": 5}).json()
        # a brand-new app over the same directory: identical state
        app2 = create_app(data_dir)
        with TestClient(app2) as c2:
            snap2 = c2.get(f"/sessions/{sid}").json()
            sum2 = c2.get(f"/sessions/{sid}/summary", params={"num": 5}).json()
        assert snap1 == snap2
        assert sum1 == sum2

    def test_pending_proposal_survives_restart(self, tmp_path):
        data_dir = tmp_path / "sessions"
        with TestClient(create_app(data_dir)) as c1:
            sid = make_session(c1)
            prop = c1.post(f"/sessions/{sid}/next").json()
        with TestClient(create_app(data_dir)) as c2:
            snap = c2.get(f"/sessions/{sid}").json()
            assert snap["pending"]["candidate"] == prop["candidate"]
            resp = c2.post(f"/sessions/{sid}/next")
            assert resp.status_code == 409


class TestGplSessions:
    def test_gpl_surrogate_sessions_work(self, client):
        cfg = dict(FAST_CONFIG, surrogate="gpl")
        sid = make_session(client, config=cfg)
        drive_duels(client, sid, 2)
        resp = client.get(f"/sessions/{sid}/summary", params={"num": 5})
        assert resp.status_code == 200
        assert all(r["ss"] == 0.0 for r in resp.json()["rows"])
