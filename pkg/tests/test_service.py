"""Service endpoint tests over the in-process ASGI app."""

import csv

import pytest
from fastapi.testclient import TestClient

from ltc.data import save_binary
from ltc.service.app import create_app
from ltc.synthetic import sinusoid_dataset


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(), raise_server_exceptions=False)


@pytest.fixture(scope="module")
def dataset_path(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    ds = sinusoid_dataset(n=36, length=16, variables=2, freqs=(1.0, 5.0),
                          noise=0.1, seed=0, name="toy")
    path = root / "toy.bin"
    save_binary(ds, path)
    return path


TINY = {
    "model": {"conv_channels": 4, "kernel_width": 3, "lstm_hidden_1": 4, "lstm_hidden_2": 2},
    "train": {"pretrain_epochs": 2, "train_epochs": 3, "batch_size": 16, "lr": 1e-3},
}


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok"}


def test_cluster_endpoint_writes_results(client, dataset_path, tmp_path):
    out = tmp_path / "run"
    resp = client.post("/cluster", json={
        "data": str(dataset_path), "format": "binary", "k": 2,
        "seed": 3, "repeats": 2, "out": str(out), **TINY,
    })
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert len(body["rows"]) == 3  # 2 runs + mean
    assert body["rows"][0]["seed"] == "3"
    assert body["rows"][2]["seed"] == "mean"
    assert body["rows"][0]["algorithm"] == "ltc"
    with open(body["results_csv"]) as f:
        rows = list(csv.reader(f))
    assert rows[0][:7] == ["dataset", "n", "l", "v", "c", "k", "seed"]
    assert len(rows) == 4
    for row in rows[1:]:
        acc, pur = float(row[7]), float(row[8])
        assert 0.0 <= acc <= pur <= 1.0
    assert len(body["trace_csvs"]) == 2


def test_baseline_endpoint(client, dataset_path, tmp_path):
    out = tmp_path / "base"
    resp = client.post("/baseline", json={
        "data": str(dataset_path), "format": "binary", "k": 2,
        "seed": 1, "out": str(out),
    })
    assert resp.status_code == 200, resp.text
    rows = resp.json()["rows"]
    assert len(rows) == 1
    assert rows[0]["algorithm"] == "kmeans"
    assert rows[0]["mse_final"] is None


def test_missing_dataset_maps_to_config_error(client, tmp_path):
    resp = client.post("/cluster", json={
        "data": str(tmp_path / "absent.bin"), "format": "binary",
        "k": 2, "out": str(tmp_path / "o"), **TINY,
    })
    assert resp.status_code == 404
    body = resp.json()
    assert body["kind"] == "config"
    assert "absent.bin" in body["detail"]


def test_lifelong_endpoint_and_pool_inspection(client, dataset_path, tmp_path):
    out = tmp_path / "ll"
    resp = client.post("/lifelong", json={
        "data": str(dataset_path), "format": "binary", "seed": 0,
        "out": str(out), **TINY,
        "lifelong": {"mode": "sequential", "k": 1, "class_groups": [[0], [1]],
                     "capacity": 3, "replay_cap": 8},
    })
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert len(body["rows"]) == 2
    assert body["rows"][0]["decision"] == "new_model"
    assert body["rows"][0]["pool_size"] == 1
    assert len(body["rows"][1]["task_accuracies"]) == 2

    listing = client.get("/pool/entries", params={"checkpoint": body["pool_dir"]})
    assert listing.status_code == 200
    entries = listing.json()["entries"]
    assert len(entries) >= 1
    first_id = entries[0]["id"]

    inspect = client.get(f"/pool/entries/{first_id}",
                         params={"checkpoint": body["pool_dir"]})
    assert inspect.status_code == 200
    assert inspect.json()["id"] == first_id

    missing = client.get("/pool/entries/999", params={"checkpoint": body["pool_dir"]})
    assert missing.status_code == 404

    dest = tmp_path / "export"
    exported = client.post("/pool/export", json={
        "checkpoint": body["pool_dir"], "dest": str(dest)})
    assert exported.status_code == 200
    assert (dest / "pool.json").is_file()


def test_pool_listing_missing_checkpoint(client, tmp_path):
    resp = client.get("/pool/entries", params={"checkpoint": str(tmp_path / "nope")})
    assert resp.status_code == 404
    assert resp.json()["kind"] == "config"


def test_validation_error_is_422(client, tmp_path):
    resp = client.post("/cluster", json={"k": 0, "out": str(tmp_path)})
    assert resp.status_code == 422
