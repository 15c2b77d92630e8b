import hashlib
import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

from monomotion.cli import cli_dispatch
from monomotion.motion_io import from_feature_tensor, motion_to_json_dict
from monomotion.network import save_checkpoint
from monomotion.service import ServiceConfig, create_app


@pytest.fixture(scope="module")
def ckpt_dir(tiny_run, tmp_path_factory):
    model, report, clip, cfg = tiny_run
    root = tmp_path_factory.mktemp("ckpts")
    (root / "tiny.ckpt").write_bytes(save_checkpoint(model))
    return root


@pytest.fixture(scope="module")
def client(ckpt_dir):
    app = create_app(ServiceConfig(checkpoint_root=str(ckpt_dir)))
    with TestClient(app, raise_server_exceptions=False) as c:
        yield c


class TestCli:
    def test_generate_deterministic_bytes(self, ckpt_dir, tmp_path):
        model_path = str(ckpt_dir / "tiny.ckpt")
        out1 = tmp_path / "a.bvh"
        out2 = tmp_path / "b.bvh"
        assert cli_dispatch(
            ["generate", "--model", model_path, "--seed", "7", "--out", str(out1)]
        ) == 0
        assert cli_dispatch(
            ["generate", "--model", model_path, "--seed", "7", "--out", str(out2)]
        ) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_unknown_flag_is_usage_error(self, ckpt_dir):
        assert cli_dispatch(["generate", "--bogus", "x"]) == 1

    def test_unknown_command_is_usage_error(self):
        assert cli_dispatch(["frobnicate"]) == 1

    def test_missing_model_is_runtime_error(self, tmp_path):
        code = cli_dispatch(
            ["generate", "--model", str(tmp_path / "nope.ckpt"),
             "--out", str(tmp_path / "o.bvh")]
        )
        assert code == 2

    def test_evaluate_json_contract(self, ckpt_dir, capsys):
        code = cli_dispatch(
            ["evaluate", "--model", str(ckpt_dir / "tiny.ckpt"),
             "--samples", "3", "--json"]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        for key in ("coverage", "global_div", "local_div", "sifid",
                    "inter_div", "intra_div", "harmonic_mean"):
            assert key in payload

    def test_compose_requires_exactly_one_mode(self, ckpt_dir, tmp_path):
        code = cli_dispatch(
            ["compose", "--model", str(ckpt_dir / "tiny.ckpt"),
             "--out", str(tmp_path / "o.bvh")]
        )
        assert code == 1

    def test_train_config_document(self, gait_tensor, tmp_path, capsys):
        from monomotion.bvh import write_bvh
        from monomotion.motion_io import from_feature_tensor

        clip_path = tmp_path / "clip.bvh"
        clip_path.write_text(write_bvh(from_feature_tensor(gait_tensor)))
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "batch_size": 2,
            "level_iterations": [2, 2, 2, 2],
            "eval_samples": 0,
        }))
        out = tmp_path / "m.ckpt"
        code = cli_dispatch(
            ["train", "--input", str(clip_path), "--preset", "abl9-smoke",
             "--config", str(cfg_path), "--out", str(out), "--json"]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["total_iterations"] == 8
        assert out.exists()

    def test_serve_requires_checkpoint_root(self, monkeypatch):
        monkeypatch.delenv("MONOMOTION_CHECKPOINT_ROOT", raising=False)
        assert cli_dispatch(["serve"]) == 1

    def test_compose_empty_mask_matches_generate(self, ckpt_dir, tmp_path):
        mask = tmp_path / "mask.json"
        mask.write_text(json.dumps({"kept_joints": []}))
        out_c = tmp_path / "c.bvh"
        out_g = tmp_path / "g.bvh"
        assert cli_dispatch(
            ["compose", "--model", str(ckpt_dir / "tiny.ckpt"), "--mask",
             str(mask), "--seed", "9", "--out", str(out_c)]
        ) == 0
        assert cli_dispatch(
            ["generate", "--model", str(ckpt_dir / "tiny.ckpt"), "--seed", "9",
             "--out", str(out_g)]
        ) == 0
        assert out_c.read_bytes() == out_g.read_bytes()


def _hash(payload) -> str:
    return hashlib.sha1(json.dumps(payload, sort_keys=True).encode()).hexdigest()


class TestService:
    def test_list_models(self, client):
        assert client.get("/models").json() == {"models": ["tiny"]}

    def test_model_info(self, client):
        info = client.get("/models/tiny").json()
        assert info["stage_lengths"] == [22, 29, 39, 64]
        assert info["has_training_clip"] is True

    def test_unknown_model_404_structured(self, client):
        r = client.get("/models/ghost")
        assert r.status_code == 404
        body = r.json()
        assert body["code"] == "unknown_model"
        assert "message" in body

    def test_generate_deterministic_payload_hash(self, client):
        a = client.post("/generate", json={"model": "tiny", "seed": 3}).json()
        b = client.post("/generate", json={"model": "tiny", "seed": 3}).json()
        assert _hash(a["motion"]) == _hash(b["motion"])
        assert a["motion_id"] == b["motion_id"]

    def test_motion_fetch_by_id(self, client):
        a = client.post("/generate", json={"model": "tiny", "seed": 5}).json()
        got = client.get(f"/motions/{a['motion_id']}")
        assert got.status_code == 200
        assert _hash(got.json()) == _hash(a["motion"])

    def test_unknown_motion_404(self, client):
        assert client.get("/motions/doesnotexist").status_code == 404

    def test_empty_mask_bodypart_equals_generate(self, client):
        gen = client.post("/generate", json={"model": "tiny", "seed": 11}).json()
        comp = client.post(
            "/compose/bodypart",
            json={"model": "tiny", "mask": {"kept_joints": []}, "seed": 11},
        ).json()
        assert _hash(comp["motion"]) == _hash(gen["motion"])

    def test_invalid_mask_422_structured(self, client):
        r = client.post(
            "/compose/bodypart",
            json={"model": "tiny", "mask": {"kept_joints": [999]}, "seed": 1},
        )
        assert r.status_code == 422
        assert r.json()["code"] == "invalid_mask"

    def test_invalid_placement_422(self, client):
        r = client.post(
            "/compose/roi",
            json={
                "model": "tiny",
                "placements": [
                    {"source_start": 0, "source_end": 64, "target_start": 0}
                ],
                "frames": 64,
                "seed": 1,
            },
        )
        assert r.status_code == 422

    def test_restyle_roundtrip(self, client, tiny_run):
        model, report, clip, cfg = tiny_run
        content = motion_to_json_dict(from_feature_tensor(clip))
        r = client.post(
            "/restyle",
            json={"style_model": "tiny", "content_motion": content, "seed": 2},
        )
        assert r.status_code == 200
        assert "motion" in r.json()

    def test_malformed_motion_payload_422(self, client):
        r = client.post(
            "/restyle",
            json={"style_model": "tiny", "content_motion": {"bogus": 1}, "seed": 2},
        )
        assert r.status_code == 422

    def test_crowd_returns_n_motions(self, client):
        r = client.post("/crowd", json={"model": "tiny", "n": 3, "seed": 4}).json()
        assert len(r["motions"]) == 3

    def test_concurrent_generates_isolated(self, client):
        results = {}

        def worker(seed):
            r = client.post("/generate", json={"model": "tiny", "seed": seed})
            results[seed] = (r.status_code, _hash(r.json()["motion"]))

        threads = [threading.Thread(target=worker, args=(s,)) for s in range(16)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(code == 200 for code, _ in results.values())
        assert len({h for _, h in results.values()}) == 16

    def test_validation_error_shape(self, client):
        r = client.post("/generate", json={"seed": 3})
        assert r.status_code == 422
        assert r.json()["code"] == "invalid_request"


class TestJobMode:
    def test_zero_budget_returns_job_then_completes(self, ckpt_dir):
        app = create_app(
            ServiceConfig(checkpoint_root=str(ckpt_dir), latency_budget_s=0.0)
        )
        with TestClient(app) as client:
            r = client.post("/generate", json={"model": "tiny", "seed": 8})
            assert r.status_code == 202
            job = r.json()["job"]
            assert job["kind"] == "generate"
            for _ in range(200):
                job = client.get(f"/jobs/{job['job_id']}").json()
                if job["status"] in ("done", "failed"):
                    break
                time.sleep(0.05)
            assert job["status"] == "done"
            assert job["progress"] == 1.0
            motion = client.get(f"/motions/{job['artifacts'][0]}")
            assert motion.status_code == 200

    def test_unknown_job_404(self, client):
        assert client.get("/jobs/nope").status_code == 404


class TestTrainEndpoint:
    def test_train_job_and_lock(self, ckpt_dir, gait_tensor, tmp_path):
        payload = motion_to_json_dict(from_feature_tensor(gait_tensor))
        app = create_app(ServiceConfig(checkpoint_root=str(ckpt_dir)))
        with TestClient(app) as client:
            body = {
                "model_id": "trained-via-api",
                "input_motion": payload,
                "preset": "abl9-smoke",
                "seed": 1,
                "iteration_unit": 0.004,  # a couple of steps per level
            }
            r1 = client.post("/train", json=body)
            assert r1.status_code == 202
            r2 = client.post("/train", json=body)
            assert r2.status_code == 409
            assert r2.json()["code"] == "training_locked"
            job_id = r1.json()["job"]["job_id"]
            for _ in range(600):
                job = client.get(f"/jobs/{job_id}").json()
                if job["status"] in ("done", "failed"):
                    break
                time.sleep(0.1)
            assert job["status"] == "done"
            assert job["artifacts"] == ["trained-via-api"]
            info = client.get("/models/trained-via-api")
            assert info.status_code == 200

    def test_invalid_preset_rejected(self, ckpt_dir, tiny_run):
        model, report, clip, cfg = tiny_run
        payload = motion_to_json_dict(from_feature_tensor(clip))
        app = create_app(ServiceConfig(checkpoint_root=str(ckpt_dir)))
        with TestClient(app) as client:
            r = client.post(
                "/train",
                json={"model_id": "x", "input_motion": payload, "preset": "???"},
            )
            assert r.status_code == 422
