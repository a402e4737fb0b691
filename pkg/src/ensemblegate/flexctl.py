"""flexctl: companion CLI for the gateway.

Generates deterministic LIN1 fixtures and manifests, sends variable-size
prediction batches, replays chronological PGM frame windows, and benchmarks
latency/throughput from the client's point of view.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import urllib.error
import urllib.request
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path

from .errors import GatewayError
from .fixtures import gen_manifest, gen_model, unit_floats
from .models import InputShape
from .pgm import parse_pgm
from .wire import encode_request, f32le_sample, pgm_sample

DEFAULT_TIMEOUT_S = 30.0
ABORT_FAILURE_RATE = 0.10


# ---------------------------------------------------------------------------
# HTTP plumbing

def http_post(url: str, body: bytes, timeout: float = DEFAULT_TIMEOUT_S) -> tuple[int, bytes]:
    """POST JSON bytes; returns (status, body) even for HTTP error statuses."""
    request = urllib.request.Request(
        url, data=body, method="POST", headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            return response.status, response.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


def http_get(url: str, timeout: float = DEFAULT_TIMEOUT_S) -> tuple[int, bytes]:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as response:
            return response.status, response.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


def fetch_ensemble_info(endpoint: str, timeout: float = DEFAULT_TIMEOUT_S) -> dict:
    status, body = http_get(f"{endpoint.rstrip('/')}/v1/models", timeout=timeout)
    if status != 200:
        raise RuntimeError(f"GET /v1/models returned {status}: {body.decode('utf-8', 'replace')}")
    return json.loads(body)


def _policy_from_args(args) -> dict | None:
    if not getattr(args, "policy", None):
        return None
    kind = args.policy.replace("-", "_")
    policy = {"kind": kind}
    if kind == "at_least":
        if args.k is None:
            raise SystemExit("flexctl: --policy at-least requires --k")
        policy["k"] = args.k
    elif args.k is not None:
        raise SystemExit("flexctl: --k is only valid with --policy at-least")
    return policy


def random_f32_samples(shape, count: int, seed: int = 0) -> list[dict]:
    """Deterministic pseudo-random f32le samples on the fixture float grid."""
    if not isinstance(shape, InputShape):
        shape = InputShape(tuple(shape))
    stream = unit_floats(seed)
    return [
        f32le_sample([next(stream) for _ in range(shape.flat_size)], shape)
        for _ in range(count)
    ]


# ---------------------------------------------------------------------------
# gen-model / gen-manifest

def cmd_gen_model(args) -> int:
    if (args.dim is None) == (args.shape is None):
        raise SystemExit("flexctl: exactly one of --dim or --shape is required")
    if args.shape is not None:
        dims = tuple(int(v) for v in args.shape.split(","))
    else:
        dims = (args.dim,)
    classes = "binary" if args.binary else args.classes
    try:
        data = gen_model(args.seed, dims, classes, args.id)
    except (ValueError, GatewayError) as exc:
        raise SystemExit(f"flexctl: {exc}")
    Path(args.output).write_bytes(data)
    print(f"wrote {args.output}")
    return 0


def cmd_gen_manifest(args) -> int:
    out_path = Path(args.output)
    mean = [float(v) for v in args.mean.split(",")]
    std = [float(v) for v in args.std.split(",")]
    try:
        data = gen_manifest(
            args.models,
            budget=args.budget,
            max_batch=args.max_batch,
            out_dir=out_path.parent,
            mean=mean,
            std=std,
            pixel_scale=args.pixel_scale,
        )
    except (OSError, ValueError, GatewayError) as exc:
        raise SystemExit(f"flexctl: {exc}")
    out_path.write_bytes(data)
    print(f"wrote {out_path}")
    return 0


# ---------------------------------------------------------------------------
# predict

def cmd_predict(args) -> int:
    policy = _policy_from_args(args)
    if args.files:
        samples = []
        for name in args.files:
            raw = Path(name).read_bytes()
            try:
                parse_pgm(raw)
            except ValueError as exc:
                print(f"flexctl: {name}: {exc}", file=sys.stderr)
                return 1
            samples.append(pgm_sample(raw))
    else:
        try:
            info = fetch_ensemble_info(args.endpoint)
        except (OSError, RuntimeError, ValueError) as exc:
            print(f"flexctl: {exc}", file=sys.stderr)
            return 1
        shape = info["models"][0]["input_shape"]
        samples = random_f32_samples(shape, args.batch, seed=args.seed)
    body = encode_request(samples, policy)
    try:
        status, response = http_post(f"{args.endpoint.rstrip('/')}/v1/predict", body)
    except OSError as exc:
        print(f"flexctl: cannot reach {args.endpoint}: {exc}", file=sys.stderr)
        return 1
    if 200 <= status < 300:
        print(json.dumps(json.loads(response), indent=2, sort_keys=True))
        return 0
    print(response.decode("utf-8", "replace"), file=sys.stderr)
    return 1


# ---------------------------------------------------------------------------
# track

def chronological_windows(frames: list, window: int) -> list[list]:
    """Partition frames into consecutive windows of size <= window.

    The final window keeps the remainder instead of dropping it, so a 7-frame
    directory with window 3 produces batches of 3, 3 and 1.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    return [frames[i : i + window] for i in range(0, len(frames), window)]


def cmd_track(args) -> int:
    frame_dir = Path(args.frames)
    frames = sorted(p for p in frame_dir.glob("*.pgm") if p.is_file())
    if not frames:
        print(f"flexctl: no .pgm frames in {frame_dir}", file=sys.stderr)
        return 1
    for frame in frames:
        try:
            parse_pgm(frame.read_bytes())
        except ValueError as exc:
            print(f"flexctl: undecodable frame {frame.name}: {exc}", file=sys.stderr)
            return 1
    policy = _policy_from_args(args)
    url = f"{args.endpoint.rstrip('/')}/v1/predict"
    for index, chunk in enumerate(chronological_windows(frames, args.window)):
        body = encode_request([pgm_sample(p.read_bytes()) for p in chunk], policy)
        try:
            status, response = http_post(url, body)
        except OSError as exc:
            print(f"flexctl: cannot reach {args.endpoint}: {exc}", file=sys.stderr)
            return 1
        if not 200 <= status < 300:
            print(response.decode("utf-8", "replace"), file=sys.stderr)
            return 1
        doc = json.loads(response)
        span = f"{chunk[0].name}..{chunk[-1].name}"
        if "_combined" in doc:
            cells = f"combined={','.join(doc['_combined'])}"
        else:
            cells = " ".join(
                f"{key}={','.join(doc[key])}" for key in sorted(doc) if not key.startswith("_")
            )
        print(f"window {index} frames={span} n={len(chunk)} {cells}")
    return 0


# ---------------------------------------------------------------------------
# bench

@dataclass
class RequestRecord:
    index: int
    batch_size: int
    status: str
    ok: bool
    latency_ms: float


@dataclass
class LoadReport:
    """Client-observed load statistics; the counting identities hold exactly."""

    requests: int
    successes: int
    failures: int
    total_samples: int
    batch_sizes: list[int]
    latency_ms: dict
    per_size: dict[int, dict]
    throughput_samples_per_s: float
    failure_statuses: dict[str, int]
    aborted: bool
    elapsed_s: float
    records: list[RequestRecord] = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {
            "requests": self.requests,
            "successes": self.successes,
            "failures": self.failures,
            "total_samples": self.total_samples,
            "batch_sizes": self.batch_sizes,
            "latency_ms": self.latency_ms,
            "per_size": {str(size): stats for size, stats in self.per_size.items()},
            "throughput_samples_per_s": self.throughput_samples_per_s,
            "failure_statuses": self.failure_statuses,
            "aborted": self.aborted,
            "elapsed_s": self.elapsed_s,
            "log": [
                {
                    "index": r.index,
                    "batch_size": r.batch_size,
                    "status": r.status,
                    "ok": r.ok,
                    "latency_ms": r.latency_ms,
                }
                for r in self.records
            ],
        }


def percentile(sorted_values: list[float], q: float) -> float:
    """Nearest-rank percentile of an ascending list (q in [0, 100])."""
    if not sorted_values:
        raise ValueError("no values")
    rank = max(1, math.ceil(q / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


def _latency_stats(latencies: list[float]) -> dict:
    if not latencies:
        return {"min": None, "mean": None, "p50": None, "p95": None, "max": None}
    ordered = sorted(latencies)
    return {
        "min": ordered[0],
        "mean": sum(ordered) / len(ordered),
        "p50": percentile(ordered, 50),
        "p95": percentile(ordered, 95),
        "max": ordered[-1],
    }


def _timed_post(url: str, body: bytes, index: int, batch_size: int,
                timeout: float) -> RequestRecord:
    start = time.perf_counter()
    try:
        status, _ = http_post(url, body, timeout=timeout)
        ok = 200 <= status < 300
        label = str(status)
    except OSError as exc:
        ok = False
        label = f"unreachable:{type(exc).__name__}"
    latency_ms = (time.perf_counter() - start) * 1000.0
    return RequestRecord(index, batch_size, label, ok, latency_ms)


def run_bench(
    endpoint: str,
    batch_sizes: list[int],
    requests_per_size: int,
    concurrency: int,
    seed: int = 0,
    timeout: float = DEFAULT_TIMEOUT_S,
) -> LoadReport:
    """Issue the request matrix and merge results by request index.

    Aborts early (reporting the partial results) if more than 10% of the
    completed requests have failed.
    """
    if concurrency < 1:
        raise ValueError(f"concurrency must be >= 1, got {concurrency}")
    info = fetch_ensemble_info(endpoint, timeout=timeout)
    shape = info["models"][0]["input_shape"]
    url = f"{endpoint.rstrip('/')}/v1/predict"
    plan = [(index, size)
            for index, size in enumerate(s for s in batch_sizes for _ in range(requests_per_size))]
    payloads = {
        index: encode_request(random_f32_samples(shape, size, seed=seed + index))
        for index, size in plan
    }

    completed: dict[int, RequestRecord] = {}
    failures = 0
    aborted = False
    started = time.perf_counter()
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        pending = {
            pool.submit(_timed_post, url, payloads[index], index, size, timeout)
            for index, size in plan
        }
        while pending:
            done, pending = wait(pending, return_when=FIRST_COMPLETED)
            for future in done:
                record = future.result()
                completed[record.index] = record
                if not record.ok:
                    failures += 1
            if completed and failures > ABORT_FAILURE_RATE * len(completed):
                aborted = True
                for future in pending:
                    future.cancel()
                pending = set()
    elapsed = time.perf_counter() - started

    records = [completed[i] for i in sorted(completed)]
    successes = [r for r in records if r.ok]
    failed = [r for r in records if not r.ok]
    total_samples = sum(r.batch_size for r in successes)
    failure_statuses: dict[str, int] = {}
    for r in failed:
        failure_statuses[r.status] = failure_statuses.get(r.status, 0) + 1
    per_size = {}
    for size in batch_sizes:
        size_records = [r for r in records if r.batch_size == size]
        size_ok = [r.latency_ms for r in size_records if r.ok]
        per_size[size] = {
            "requests": len(size_records),
            "successes": len(size_ok),
            "latency_ms": _latency_stats(size_ok),
        }
    return LoadReport(
        requests=len(records),
        successes=len(successes),
        failures=len(failed),
        total_samples=total_samples,
        batch_sizes=list(batch_sizes),
        latency_ms=_latency_stats([r.latency_ms for r in successes]),
        per_size=per_size,
        throughput_samples_per_s=total_samples / elapsed if elapsed > 0 else 0.0,
        failure_statuses=failure_statuses,
        aborted=aborted,
        elapsed_s=elapsed,
        records=records,
    )


def _format_ms(value) -> str:
    return "-" if value is None else f"{value:8.2f}"


def print_report(report: LoadReport, out=None) -> None:
    out = out if out is not None else sys.stdout
    print(
        f"requests: {report.requests} (successes {report.successes}, "
        f"failures {report.failures})",
        file=out,
    )
    print(f"total samples: {report.total_samples}", file=out)
    print(f"elapsed: {report.elapsed_s:.3f}s  "
          f"throughput: {report.throughput_samples_per_s:.1f} samples/s", file=out)
    stats = report.latency_ms
    print(
        f"latency ms: min {_format_ms(stats['min'])} mean {_format_ms(stats['mean'])} "
        f"p50 {_format_ms(stats['p50'])} p95 {_format_ms(stats['p95'])} "
        f"max {_format_ms(stats['max'])}",
        file=out,
    )
    for size in report.batch_sizes:
        row = report.per_size[size]
        s = row["latency_ms"]
        print(
            f"  batch {size:5d}: n={row['requests']} ok={row['successes']} "
            f"p50={_format_ms(s['p50'])} p95={_format_ms(s['p95'])} max={_format_ms(s['max'])}",
            file=out,
        )
    if report.failure_statuses:
        breakdown = ", ".join(f"{k}: {v}" for k, v in sorted(report.failure_statuses.items()))
        print(f"failures by status: {breakdown}", file=out)
    if report.aborted:
        print("aborted: failure rate exceeded 10%, results are partial", file=out)


def cmd_bench(args) -> int:
    try:
        batch_sizes = [int(v) for v in args.batch_sizes.split(",")]
    except ValueError:
        raise SystemExit(f"flexctl: bad --batch-sizes {args.batch_sizes!r}")
    if not batch_sizes or any(b < 1 for b in batch_sizes):
        raise SystemExit("flexctl: batch sizes must be >= 1")
    try:
        report = run_bench(
            args.endpoint,
            batch_sizes,
            requests_per_size=args.requests,
            concurrency=args.concurrency,
            seed=args.seed,
        )
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"flexctl: {exc}", file=sys.stderr)
        return 1
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    else:
        print_report(report)
    return 2 if report.aborted else 0


# ---------------------------------------------------------------------------
# CLI wiring

def _add_policy_args(parser):
    parser.add_argument("--policy", choices=["any", "all", "at-least", "at_least"],
                        help="server-side combination of binary model outputs")
    parser.add_argument("--k", type=int, default=None,
                        help="vote threshold for --policy at-least")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="flexctl", description="Fixture generation and client tooling for ensemblegate."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-model", help="generate a deterministic LIN1 model file")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--dim", type=int, default=None, help="flat input dimension D")
    gen.add_argument("--shape", default=None, help="image shape C,H,W (alternative to --dim)")
    group = gen.add_mutually_exclusive_group(required=True)
    group.add_argument("--classes", type=int, help="number of class labels (K >= 2)")
    group.add_argument("--binary", action="store_true",
                       help="use the labels ['absent', 'present']")
    gen.add_argument("--id", required=True, help="model id")
    gen.add_argument("-o", "--output", required=True)
    gen.set_defaults(func=cmd_gen_model)

    man = sub.add_parser("gen-manifest", help="generate a manifest for existing model files")
    man.add_argument("--models", nargs="+", required=True, help="LIN1 files to include, in order")
    man.add_argument("--budget", type=int, required=True, help="memory budget in bytes")
    man.add_argument("--max-batch", type=int, required=True)
    man.add_argument("--mean", default="0.0", help="comma-separated channel means")
    man.add_argument("--std", default="1.0", help="comma-separated channel stds")
    man.add_argument("--pixel-scale", type=float, default=255.0)
    man.add_argument("-o", "--output", required=True)
    man.set_defaults(func=cmd_gen_manifest)

    pred = sub.add_parser("predict", help="send one prediction request")
    pred.add_argument("--endpoint", required=True)
    pred.add_argument("--batch", type=int, default=1, help="random-sample batch size")
    pred.add_argument("--files", nargs="+", default=None, help="PGM files to send instead")
    pred.add_argument("--seed", type=int, default=0)
    _add_policy_args(pred)
    pred.set_defaults(func=cmd_predict)

    track = sub.add_parser("track", help="send chronological PGM frame windows")
    track.add_argument("--endpoint", required=True)
    track.add_argument("--frames", required=True, help="directory of .pgm frames")
    track.add_argument("--window", type=int, required=True, help="frames per request")
    _add_policy_args(track)
    track.set_defaults(func=cmd_track)

    bench = sub.add_parser("bench", help="measure client-observed latency and throughput")
    bench.add_argument("--endpoint", required=True)
    bench.add_argument("--batch-sizes", default="1", help="comma-separated batch sizes")
    bench.add_argument("--requests", type=int, default=10, help="requests per batch size")
    bench.add_argument("--concurrency", type=int, default=1)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--json", action="store_true", help="emit the machine-readable report")
    bench.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
