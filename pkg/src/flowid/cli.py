"""Command-line client for the flowid service.

Each subcommand builds the same request the HTTP API accepts and either
runs the handler in process (default) or posts it to a running server
(--server http://host:port). `flowid serve` starts that server.

All numeric output prints with six decimals so runs can be diffed;
failures exit nonzero with a single machine-parseable `error: ` line.
"""

import argparse
import sys

from . import __version__, api


def _dispatch(args, endpoint: str, request) -> dict:
    if args.server:
        import httpx
        resp = httpx.post(f"{args.server.rstrip('/')}{endpoint}",
                          json=request.model_dump(), timeout=None)
        if resp.status_code != 200:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise api.OpError(str(detail))
        return resp.json()
    handler = {
        "/extract": api.run_extract,
        "/generate": api.run_generate,
        "/train": api.run_train,
        "/grid": api.run_grid,
        "/retrain": api.run_retrain,
        "/bench": api.run_bench,
        "/predict": api.run_predict,
        "/leave-one-out": api.run_leave_one_out,
    }[endpoint]
    return handler(request).model_dump()


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.6f}"
    return value


def _print_kv(result: dict):
    for key, value in result.items():
        if isinstance(value, dict):
            for k, v in value.items():
                print(f"{key}.{k}={_fmt(v)}")
        elif isinstance(value, list) and value and isinstance(value[0], dict):
            for row in value:
                print("  ".join(f"{k}={_fmt(v)}" for k, v in row.items()))
        else:
            print(f"{key}={_fmt(value)}")


def cmd_extract(args):
    req = api.ExtractRequest(
        packets_path=args.packets, flows_path=args.flows, dns_path=args.dns,
        categories_path=args.categories, vocab_in=args.vocab_in,
        vocab_out=args.vocab_out, out_path=args.out,
        reorder_tolerance=args.reorder_tolerance)
    _print_kv(_dispatch(args, "/extract", req))


def cmd_gen(args):
    req = api.GenerateRequest(out_path=args.out, preset=args.preset,
                              spec_path=args.spec, n_days=args.days,
                              pattern=args.pattern, seed=args.seed)
    _print_kv(_dispatch(args, "/generate", req))


def cmd_train(args):
    req = api.TrainRequest(dataset_path=args.dataset, out_path=args.out,
                           model_type=args.model_type, group=args.group,
                           first_day=args.first_day, last_day=args.last_day,
                           seed=args.seed, epochs=args.epochs, batch_size=args.batch_size)
    _print_kv(_dispatch(args, "/train", req))


def cmd_grid(args):
    req = api.GridRequest(dataset_path=args.dataset, out_csv=args.out,
                          model_types=args.model_types, groups=args.groups,
                          w_min=args.w_min, w_max=args.w_max, p_max=args.p_max,
                          seed=args.seed, epochs=args.epochs, batch_size=args.batch_size,
                          heatmap_dir=args.heatmap_dir)
    _print_kv(_dispatch(args, "/grid", req))


def cmd_retrain(args):
    eval_paths = {}
    for item in args.eval or []:
        if "=" not in item:
            raise api.OpError(f"--eval expects name=path, got {item!r}")
        name, path = item.split("=", 1)
        eval_paths[name] = path
    req = api.RetrainRequest(base_model_path=args.base, update_dataset_path=args.update,
                             out_path=args.out, freeze_k=args.freeze,
                             update_first_day=args.first_day, update_last_day=args.last_day,
                             eval_paths=eval_paths, seed=args.seed,
                             epochs=args.epochs, batch_size=args.batch_size)
    _print_kv(_dispatch(args, "/retrain", req))


def cmd_bench(args):
    req = api.BenchRequest(model_path=args.model, dataset_path=args.dataset,
                           sizes=args.n, seed=args.seed, out_csv=args.out)
    result = _dispatch(args, "/bench", req)
    print("model_type  group  n  seconds  per_sample_s")
    for row in result["rows"]:
        print(f"{row['model_type']}  {row['group']}  {row['n']}  "
              f"{row['seconds']:.6f}  {row['per_sample_s']:.6f}")


def cmd_predict(args):
    req = api.PredictRequest(model_path=args.model, dataset_path=args.dataset,
                             max_rows_returned=args.max_rows)
    result = _dispatch(args, "/predict", req)
    for key in ("n_rows", "f1"):
        if result.get(key) is not None:
            print(f"{key}={_fmt(result[key])}")
    for name, count in result["histogram"].items():
        print(f"count.{name}={count}")
    if args.show_labels:
        for label in result["labels"]:
            print(label)


def cmd_loo(args):
    req = api.LeaveOneOutRequest(dataset_path=args.dataset, out_csv=args.out,
                                 model_types=args.model_types, seed=args.seed,
                                 epochs=args.epochs, batch_size=args.batch_size)
    result = _dispatch(args, "/leave-one-out", req)
    print("device  category  model_type  f1")
    for row in result["rows"]:
        print(f"{row['device']}  {row['category']}  {row['model_type']}  {row['f1']:.6f}")


def cmd_serve(args):
    import uvicorn
    uvicorn.run("flowid.api:app", host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowid",
                                     description="IoT device identification toolkit")
    parser.add_argument("--version", action="version", version=f"flowid {__version__}")
    parser.add_argument("--server", default=None,
                        help="run against a flowid server instead of in process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="packets/flows JSONL -> feature JSONL")
    p.add_argument("--packets", help="packet JSONL input")
    p.add_argument("--flows", help="pre-cut flow-record JSONL input")
    p.add_argument("--dns", help="DNS observation JSONL (ip -> domain)")
    p.add_argument("--categories", help="JSON map of device id -> category")
    p.add_argument("--vocab-in", help="use an existing domain vocabulary")
    p.add_argument("--vocab-out", help="write the domain vocabulary here")
    p.add_argument("--reorder-tolerance", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("gen", help="generate a synthetic labeled dataset")
    p.add_argument("--preset", default="drift", choices=["drift", "large", "cross-env"])
    p.add_argument("--spec", help="declarative environment config (JSON), overrides --preset")
    p.add_argument("--days", type=int, default=21)
    p.add_argument("--pattern", default="medium", choices=["idle", "light", "medium", "heavy"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model bundle on a dataset window")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model-type", default="fc",
                   choices=["rfc", "dtc", "fc", "lstm", "conv1d"])
    p.add_argument("--group", default="all-device",
                   choices=["all-device", "all-category", "per-device", "per-category"])
    p.add_argument("--first-day", type=int)
    p.add_argument("--last-day", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="sliding-window F1 grid -> CSV")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model-types", nargs="+", default=["fc"])
    p.add_argument("--groups", nargs="+", default=["all-device"])
    p.add_argument("--w-min", type=int, default=1)
    p.add_argument("--w-max", type=int, default=7)
    p.add_argument("--p-max", type=int, default=14)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--heatmap-dir", help="also render one heatmap per model/group")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("retrain", help="update a neural base model with new data")
    p.add_argument("--base", required=True, help="base model container")
    p.add_argument("--update", required=True, help="update dataset JSONL")
    p.add_argument("--freeze", type=int, default=0, dest="freeze",
                   help="freeze the first k weighted layers (0-3)")
    p.add_argument("--first-day", type=int)
    p.add_argument("--last-day", type=int)
    p.add_argument("--eval", nargs="*", metavar="NAME=PATH",
                   help="evaluation datasets for before/after F1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("bench", help="time batched inference")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True, help="feature pool to sample from")
    p.add_argument("--n", type=int, nargs="+", default=[1000, 10000, 100000])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="optional CSV output")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("predict", help="classify a feature dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--max-rows", type=int, default=1000)
    p.add_argument("--show-labels", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("loo", help="leave-one-device-out categorization table")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model-types", nargs="+",
                   default=["rfc", "dtc", "fc", "lstm", "conv1d"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--out", help="optional CSV output")
    p.set_defaults(func=cmd_loo)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # single parseable failure line, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
