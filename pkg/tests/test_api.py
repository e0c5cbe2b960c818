import json

import pytest
from fastapi.testclient import TestClient

from flowid import __version__
from flowid.api import create_app
from flowid.store import read_dataset, write_dataset
from flowid.synthgen import EnvironmentSpec, drift_fleet, gen_packet_day
from flowid.flows import DnsTable
from flowid.seeds import mix


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


@pytest.fixture(scope="module")
def dataset_path(tmp_path_factory, small_env):
    path = tmp_path_factory.mktemp("data") / "env.jsonl"
    write_dataset(small_env, path)
    return str(path)


def test_health(client):
    res = client.get("/health")
    assert res.status_code == 200
    assert res.json() == {"status": "ok", "version": __version__}


def test_generate_then_train_then_predict(client, tmp_path):
    out = tmp_path / "gen.jsonl"
    res = client.post("/generate", json={"out_path": str(out), "preset": "drift",
                                         "n_days": 3, "pattern": "light", "seed": 4})
    assert res.status_code == 200, res.text
    body = res.json()
    assert body["out_paths"] == [str(out)] and body["d_max"] == 3
    assert len(body["devices"]) == 10

    model_path = tmp_path / "m.flmc"
    res = client.post("/train", json={"dataset_path": str(out), "out_path": str(model_path),
                                      "model_type": "dtc", "group": "all-device",
                                      "first_day": 1, "last_day": 2, "seed": 1})
    assert res.status_code == 200, res.text
    assert res.json()["size_bytes"] == model_path.stat().st_size

    res = client.post("/predict", json={"model_path": str(model_path),
                                        "dataset_path": str(out)})
    assert res.status_code == 200
    body = res.json()
    assert body["n_rows"] > 0
    assert 0.0 <= body["f1"] <= 1.0
    assert sum(body["histogram"].values()) == body["n_rows"]


def test_extract_endpoint_from_packets(client, tmp_path):
    spec = EnvironmentSpec("api", drift_fleet(0, drift_scale=0.0, rotation_days=0),
                           "light", 1, seed=mix(0, "api-env"))
    dns = DnsTable()
    packets = []
    for profile in spec.devices[:2]:
        packets.extend(gen_packet_day(profile, 1, spec, dns))
    packets.sort(key=lambda p: p.timestamp)
    pkt_path = tmp_path / "packets.jsonl"
    with open(pkt_path, "w") as fh:
        for p in packets:
            fh.write(json.dumps({
                "timestamp": p.timestamp, "device_mac": p.device_mac,
                "src_ip": p.src_ip, "dst_ip": p.dst_ip, "src_port": p.src_port,
                "dst_port": p.dst_port, "protocol": p.protocol, "size": p.size,
                "direction": p.direction}) + "\n")
    dns_path = tmp_path / "dns.jsonl"
    with open(dns_path, "w") as fh:
        for ip, domain in dns._map.items():
            fh.write(json.dumps({"ip": ip, "domain": domain}) + "\n")
    cats_path = tmp_path / "cats.json"
    cats_path.write_text(json.dumps({p.device_id: p.category_id for p in spec.devices}))

    out_path = tmp_path / "features.jsonl"
    vocab_path = tmp_path / "vocab.json"
    res = client.post("/extract", json={
        "packets_path": str(pkt_path), "dns_path": str(dns_path),
        "categories_path": str(cats_path), "vocab_out": str(vocab_path),
        "out_path": str(out_path)})
    assert res.status_code == 200, res.text
    body = res.json()
    assert body["n_rows"] == body["n_flows"] > 0
    assert body["vocab_size"] > 0
    data = read_dataset(out_path)
    assert set(data.devices) <= {p.device_id for p in spec.devices}
    assert (data.days == 1).all()

    # ambiguous input: neither or both of packets/flows
    res = client.post("/extract", json={"out_path": str(out_path)})
    assert res.status_code == 400


def test_extract_endpoint_from_flow_records(client, tmp_path):
    flows_path = tmp_path / "flows.jsonl"
    with open(flows_path, "w") as fh:
        for i in range(6):
            fh.write(json.dumps({
                "device_mac": f"dev{i % 2}", "src_ip": "10.0.0.2", "src_port": 5000 + i,
                "dst_ip": "1.2.3.4", "dst_port": 443, "protocol": 6,
                "start_time": 10.0 * i, "end_time": 10.0 * i + 2.5,
                "bytes_out": 300, "bytes_in": 120, "pkts_out": 3, "pkts_in": 1,
                "pkt_sizes": [100, 100, 100, 120], "pkt_gaps": [0.5, 1.0, 1.0],
                "remote_domain": "cdn.vendor.example.com",
                "device_id": f"dev{i % 2}", "category_id": "hub", "day_index": 1}) + "\n")
    out_path = tmp_path / "rows.jsonl"
    res = client.post("/extract", json={"flows_path": str(flows_path),
                                        "out_path": str(out_path)})
    assert res.status_code == 200, res.text
    assert res.json()["n_rows"] == 6
    data = read_dataset(out_path)
    assert data.features[0][16] == 2.5  # duration slot
    assert set(data.devices) == {"dev0", "dev1"}
    assert data.features[0][18] == 1.0  # sld("...example.com") got code 1


def test_grid_endpoint_writes_csv(client, tmp_path, dataset_path):
    csv_path = tmp_path / "grid.csv"
    res = client.post("/grid", json={"dataset_path": dataset_path,
                                     "out_csv": str(csv_path),
                                     "model_types": ["dtc"], "groups": ["all-device"],
                                     "w_min": 1, "w_max": 2, "p_max": 2, "seed": 0})
    assert res.status_code == 200, res.text
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "model_type,group,w,p,f1"
    assert res.json()["n_cells"] == len(lines) - 1 > 0
    # fixed six-decimal formatting
    assert all(len(line.rsplit(",", 1)[1].split(".")[1]) == 6 for line in lines[1:])


def test_retrain_endpoint_reports_before_after(client, tmp_path, dataset_path):
    base_path = tmp_path / "base.flmc"
    res = client.post("/train", json={"dataset_path": dataset_path,
                                      "out_path": str(base_path),
                                      "model_type": "fc", "group": "all-device",
                                      "first_day": 1, "last_day": 2,
                                      "seed": 3, "epochs": 1})
    assert res.status_code == 200, res.text
    out_path = tmp_path / "updated.flmc"
    res = client.post("/retrain", json={"base_model_path": str(base_path),
                                        "update_dataset_path": dataset_path,
                                        "update_first_day": 3, "update_last_day": 3,
                                        "out_path": str(out_path), "freeze_k": 2,
                                        "eval_paths": {"self": dataset_path},
                                        "seed": 5, "epochs": 1})
    assert res.status_code == 200, res.text
    body = res.json()
    assert set(body["f1_before"]) == {"self"} and set(body["f1_after"]) == {"self"}
    assert out_path.exists() and body["freeze_k"] == 2


def test_retrain_rejects_tree_models(client, tmp_path, dataset_path):
    base_path = tmp_path / "tree.flmc"
    client.post("/train", json={"dataset_path": dataset_path, "out_path": str(base_path),
                                "model_type": "dtc", "group": "all-device", "seed": 1})
    res = client.post("/retrain", json={"base_model_path": str(base_path),
                                        "update_dataset_path": dataset_path,
                                        "out_path": str(tmp_path / "x.flmc")})
    assert res.status_code == 400
    assert "retrain" in res.json()["detail"] or "updated" in res.json()["detail"]


def test_bench_endpoint(client, tmp_path, dataset_path):
    model_path = tmp_path / "bench.flmc"
    client.post("/train", json={"dataset_path": dataset_path, "out_path": str(model_path),
                                "model_type": "dtc", "group": "all-device", "seed": 1})
    res = client.post("/bench", json={"model_path": str(model_path),
                                      "dataset_path": dataset_path,
                                      "sizes": [200, 400], "seed": 0})
    assert res.status_code == 200
    rows = res.json()["rows"]
    assert [r["n"] for r in rows] == [200, 400]
    assert all(r["seconds"] > 0 for r in rows)


def test_leave_one_out_endpoint(client, tmp_path, dataset_path):
    res = client.post("/leave-one-out", json={"dataset_path": dataset_path,
                                              "model_types": ["dtc"], "seed": 0,
                                              "out_csv": str(tmp_path / "loo.csv")})
    assert res.status_code == 200, res.text
    rows = res.json()["rows"]
    # 8 devices are eligible (two categories hold a single device)
    assert len(rows) == 8
    assert {r["model_type"] for r in rows} == {"dtc"}
    assert (tmp_path / "loo.csv").read_text().splitlines()[0] == "device,category,model_type,f1"


def test_unknown_paths_yield_400(client):
    res = client.post("/train", json={"dataset_path": "/no/such/file.jsonl",
                                      "out_path": "/tmp/x.flmc"})
    assert res.status_code == 400
