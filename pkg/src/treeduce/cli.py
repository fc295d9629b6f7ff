"""Command-line entry points.

    treeduce generate --seed 1 --events 1048576 --files 8 --out data/
    treeduce serve --root data/ --port 1094 --bandwidth-cap 32Mi
    treeduce reduce --job job.cfg --executors 2 --cores 4 --out out/
    treeduce hist --job job.cfg --spec "bin(40, 0, 200, 'max(Muon_pt)')" --out h.csv
    treeduce bench --experiment size --config bench.cfg --out report/
    treeduce concat --out merged.trf out/part-*.trf
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench, engine, exprlang, histagg, treefile
from .sources import open_source
from .xrdlite import ServerConfig, XrdServer

_SUFFIXES = {
    "k": 1000, "m": 1000**2, "g": 1000**3,
    "ki": 1024, "mi": 1024**2, "gi": 1024**3,
}


def parse_bytes(text: str) -> int:
    """Accepts plain integers plus k/m/g (decimal) and Ki/Mi/Gi (binary) suffixes."""
    raw = text.strip().lower()
    for suffix in sorted(_SUFFIXES, key=len, reverse=True):
        if raw.endswith(suffix):
            return int(raw[: -len(suffix)]) * _SUFFIXES[suffix]
    return int(raw)


def _cmd_generate(args) -> int:
    spec = bench.GenSpec(
        seed=args.seed,
        n_events=args.events,
        n_files=args.files,
        schema=args.schema,
        basket_target_entries=args.basket_entries,
        codec=treefile.Codec.NONE if args.codec == "none" else treefile.Codec.DEFLATE,
    )
    manifest = bench.generate(spec, args.out)
    total = sum(f.bytes for f in manifest.files)
    print(f"wrote {len(manifest.files)} files, {manifest.n_events} events each, {total} bytes")
    return 0


def _cmd_serve(args) -> int:
    config = ServerConfig(
        root_dir=args.root,
        host=args.host,
        port=args.port,
        bandwidth_cap=parse_bytes(args.bandwidth_cap) if args.bandwidth_cap else None,
    )
    server = XrdServer(config).start()
    host, port = server.address
    print(f"serving {args.root} on {host}:{port}"
          + (f" capped at {config.bandwidth_cap} B/s" if config.bandwidth_cap else ""))
    try:
        while True:
            import time

            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return 0


def _load_job(args) -> engine.JobSpec:
    job = engine.load_job_file(args.job)
    if getattr(args, "out", None):
        job.output = args.out
    return job


def _cmd_reduce(args) -> int:
    job = _load_job(args)
    config = engine.EngineConfig(
        executors=args.executors,
        cores_per_executor=args.cores,
        read_ahead=parse_bytes(args.read_ahead),
    )
    try:
        result = engine.run(job, config)
    except engine.TaskFailure as exc:
        print(str(exc), file=sys.stderr)
        return 1
    print(result.manifest.table())
    print()
    print(result.metrics.summary_table())
    return 0


def _cmd_hist(args) -> int:
    job = engine.load_job_file(args.job)
    agg = histagg.parse_hist_spec(args.spec)
    skim, _ = engine.planner.parse_job_exprs(job)

    schema = None
    needed = agg.columns_needed()
    if skim is not None:
        needed |= exprlang.column_refs(skim)
    total = 0
    for path in job.inputs:
        source = open_source(path)
        try:
            reader = treefile.open_file(source)
            tree = reader.tree(job.tree)
            if schema is None:
                schema = {
                    name: (meta.dtype, meta.shape)
                    for name, meta in tree.branches.items()
                    if name in needed
                }
                histagg.typecheck_aggregator(agg, schema)
                if skim is not None:
                    result = exprlang.typecheck(skim, schema)
                    if result.jagged or result.kind is not exprlang.Kind.BOOL:
                        raise engine.EngineError(f"skim must be a scalar bool, got {result}")
            for start in range(0, tree.n_entries, job.partition_entries):
                stop = min(start + job.partition_entries, tree.n_entries)
                columns = {
                    name: reader.read_column(job.tree, name, start, stop) for name in needed
                }
                n = stop - start
                if skim is not None:
                    mask = exprlang.evaluate(skim, columns, n_entries=n).values
                    columns = {name: c.select(mask) for name, c in columns.items()}
                    n = int(mask.sum())
                agg.fill_chunk(columns, n)
                total += n
        finally:
            source.close()
    csv_text = histagg.render(agg)
    Path(args.out).write_text(csv_text)
    print(f"filled {total} events into {args.out}")
    return 0


def _parse_worker_grid(text: str) -> tuple[tuple[int, int], ...]:
    grid = []
    for part in text.split(","):
        executors, _, cores = part.strip().partition("x")
        grid.append((int(executors), int(cores)))
    return tuple(grid)


def _load_bench_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SystemExit(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip().strip("'\"")
    return fields


def _cmd_bench(args) -> int:
    cfg = _load_bench_config(args.config)
    spec = bench.ExperimentSpec(
        variant=args.experiment,
        data_dir=cfg.get("data_dir", str(Path(args.out) / "data")),
        out_dir=args.out,
        seed=int(cfg.get("seed", "1")),
        n_events=parse_bytes(cfg.get("events", str(1 << 20))),
        n_files=int(cfg.get("files", "8")),
        repetitions=int(cfg.get("repetitions", "3")),
        multiples=tuple(int(x) for x in cfg.get("multiples", "1,2,4,8").split(",")),
        worker_grid=_parse_worker_grid(cfg.get("workers", "1x1,1x2,2x2,2x4")),
        read_aheads=tuple(
            parse_bytes(x) for x in cfg.get("read_aheads", "64Ki,1Mi,32Mi").split(",")
        ),
        bandwidth_cap=parse_bytes(cfg["bandwidth_cap"]) if cfg.get("bandwidth_cap") else None,
        partition_entries=int(cfg.get("partition_entries", "65536")),
        executors=int(cfg.get("executors", "1")),
        cores_per_executor=int(cfg.get("cores", "4")),
    )
    result = bench.run_experiment(spec)
    paths = bench.write_report(args.experiment, result, args.out)
    print(f"report: {paths['csv']} {paths['markdown']}")
    return 0


def _cmd_concat(args) -> int:
    inputs = list(args.inputs)
    if args.manifest:
        manifest = engine.Manifest.read_jsonl(args.manifest)
        inputs = manifest.paths() + inputs
    if not inputs:
        print("concat: no inputs", file=sys.stderr)
        return 1
    total = treefile.concat_files(inputs, args.out)
    print(f"wrote {args.out}: {total} entries from {len(inputs)} files")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treeduce", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--events", type=parse_bytes, default=1 << 20, help="events per file")
    p.add_argument("--files", type=int, default=8)
    p.add_argument("--out", required=True)
    p.add_argument("--schema", choices=("demo", "flat8"), default="demo")
    p.add_argument("--basket-entries", type=int, default=8192)
    p.add_argument("--codec", choices=("deflate", "none"), default="deflate")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("serve", help="serve a directory over the range-read protocol")
    p.add_argument("--root", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=1094)
    p.add_argument("--bandwidth-cap", default=None, help="bytes/s, e.g. 32Mi")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("reduce", help="run a skim/slim/derive job")
    p.add_argument("--job", required=True)
    p.add_argument("--executors", type=int, default=1)
    p.add_argument("--cores", type=int, default=1)
    p.add_argument("--read-ahead", default="64Ki")
    p.add_argument("--out", default=None, help="override the job's output directory")
    p.set_defaults(func=_cmd_reduce)

    p = sub.add_parser("hist", help="fill a histogram over a job's inputs")
    p.add_argument("--job", required=True)
    p.add_argument("--spec", required=True, help="e.g. \"bin(40, 0, 200, 'max(Muon_pt)')\"")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_hist)

    p = sub.add_parser("bench", help="run a scaling experiment and write reports")
    p.add_argument("--experiment", choices=("size", "cores", "readahead"), required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("concat", help="merge part files into one")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None, help="manifest.jsonl listing inputs")
    p.add_argument("inputs", nargs="*")
    p.set_defaults(func=_cmd_concat)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
