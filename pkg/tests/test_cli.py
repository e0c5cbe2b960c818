import hashlib

from flowid.cli import main


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_gen_train_grid_pipeline(tmp_path, capsys):
    data = tmp_path / "d.jsonl"
    code, out, _ = run(["gen", "--preset", "drift", "--days", "3",
                        "--pattern", "light", "--seed", "2", "--out", str(data)], capsys)
    assert code == 0 and str(data) in out

    model = tmp_path / "m.flmc"
    code, out, _ = run(["train", "--dataset", str(data), "--model-type", "dtc",
                        "--group", "all-device", "--out", str(model)], capsys)
    assert code == 0 and model.exists()

    grid = tmp_path / "g.csv"
    code, out, _ = run(["grid", "--dataset", str(data), "--model-types", "dtc",
                        "--groups", "all-device", "--w-max", "2", "--p-max", "2",
                        "--out", str(grid)], capsys)
    assert code == 0
    assert grid.read_text().splitlines()[0] == "model_type,group,w,p,f1"

    code, out, _ = run(["predict", "--model", str(model), "--dataset", str(data)], capsys)
    assert code == 0 and "f1=" in out

    bench_csv = tmp_path / "bench.csv"
    code, out, _ = run(["bench", "--model", str(model), "--dataset", str(data),
                        "--n", "100", "200", "--out", str(bench_csv)], capsys)
    assert code == 0 and "per_sample_s" in out
    assert bench_csv.read_text().splitlines()[0] == "model_type,group,n,seconds"


def test_pipeline_outputs_are_byte_identical_across_reruns(tmp_path, capsys):
    digests = []
    for tag in ("a", "b"):
        data = tmp_path / f"{tag}.jsonl"
        model = tmp_path / f"{tag}.flmc"
        grid = tmp_path / f"{tag}.csv"
        assert run(["gen", "--preset", "drift", "--days", "3", "--pattern", "light",
                    "--seed", "7", "--out", str(data)], capsys)[0] == 0
        assert run(["train", "--dataset", str(data), "--model-type", "fc",
                    "--group", "all-device", "--seed", "7", "--epochs", "1",
                    "--out", str(model)], capsys)[0] == 0
        assert run(["grid", "--dataset", str(data), "--model-types", "dtc",
                    "--groups", "all-device", "--w-max", "2", "--p-max", "1",
                    "--seed", "7", "--out", str(grid)], capsys)[0] == 0
        digests.append((sha(data), sha(model), sha(grid)))
    assert digests[0] == digests[1]


def test_retrain_cli_reports_freeze(tmp_path, capsys):
    data = tmp_path / "d.jsonl"
    run(["gen", "--preset", "drift", "--days", "4", "--pattern", "light",
         "--seed", "3", "--out", str(data)], capsys)
    base = tmp_path / "base.flmc"
    run(["train", "--dataset", str(data), "--model-type", "fc", "--group",
         "all-device", "--first-day", "1", "--last-day", "2", "--epochs", "1",
         "--out", str(base)], capsys)
    updated = tmp_path / "up.flmc"
    code, out, _ = run(["retrain", "--base", str(base), "--update", str(data),
                        "--first-day", "3", "--last-day", "3", "--freeze", "3",
                        "--epochs", "1", "--eval", f"self={data}",
                        "--out", str(updated)], capsys)
    assert code == 0
    assert "freeze_k=3" in out and "f1_before.self=" in out and "f1_after.self=" in out

    # frozen layers must be bit-identical between base and updated containers
    from flowid.store import load_model
    import numpy as np
    b, u = load_model(base).members[0], load_model(updated).members[0]
    frozen_stack = {si for mask, (si, _) in zip(u.freeze_mask, u.weighted_layers()) if mask}
    assert frozen_stack == {0, 1, 2}
    for (li, name), p in u.tensors().items():
        if li in frozen_stack:
            assert np.array_equal(p, b.tensors()[(li, name)])


def test_cross_env_preset_writes_three_files(tmp_path, capsys):
    out = tmp_path / "trio.jsonl"
    code, printed, _ = run(["gen", "--preset", "cross-env", "--seed", "1",
                            "--out", str(out)], capsys)
    assert code == 0
    for tag in ("A", "B", "C"):
        assert (tmp_path / f"trio.{tag}.jsonl").exists()


def test_gen_from_declarative_config(tmp_path, capsys):
    import json
    cfg = tmp_path / "env.json"
    cfg.write_text(json.dumps({
        "version": 1, "name": "mini", "pattern": "light", "n_days": 2, "seed": 1,
        "devices": [
            {"device_id": "hubA", "category_id": "hub", "slot": 0.2},
            {"device_id": "hubB", "category_id": "hub", "slot": 0.8},
        ]}))
    out = tmp_path / "mini.jsonl"
    code, printed, _ = run(["gen", "--spec", str(cfg), "--out", str(out)], capsys)
    assert code == 0 and out.exists()
    assert "d_max=2" in printed


def test_error_exit_is_nonzero_with_parseable_line(tmp_path, capsys):
    code, out, err = run(["train", "--dataset", "/no/such.jsonl",
                          "--out", str(tmp_path / "m.flmc")], capsys)
    assert code == 1
    assert err.startswith("error: ")


def test_loo_cli(tmp_path, capsys):
    data = tmp_path / "d.jsonl"
    run(["gen", "--preset", "drift", "--days", "2", "--pattern", "light",
         "--seed", "5", "--out", str(data)], capsys)
    code, out, _ = run(["loo", "--dataset", str(data), "--model-types", "dtc",
                        "--out", str(tmp_path / "loo.csv")], capsys)
    assert code == 0
    assert out.splitlines()[0] == "device  category  model_type  f1"
    assert (tmp_path / "loo.csv").exists()
