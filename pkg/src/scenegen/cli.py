"""Command-line client for the benchmark service.

Every subcommand is a thin HTTP call: by default the service app is mounted
in-process (no socket, same filesystem), while ``--server URL`` points the
same requests at a remote instance. Exit codes: 0 ok, 1 usage error,
2 missing/corrupt data, 3 internal or transport failure.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from typing import Optional

import httpx

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

_STATUS_EXIT = {400: EXIT_USAGE, 422: EXIT_USAGE, 404: EXIT_DATA,
                409: EXIT_DATA}


def _exit_for(status: int) -> int:
    if 200 <= status < 300:
        return EXIT_OK
    return _STATUS_EXIT.get(status, EXIT_INTERNAL)


def _request(method: str, path: str, server: Optional[str],
             body: Optional[dict] = None,
             params: Optional[dict] = None) -> httpx.Response:
    async def go() -> httpx.Response:
        if server:
            client = httpx.AsyncClient(base_url=server, timeout=None)
        else:
            from .service.app import create_app
            client = httpx.AsyncClient(
                transport=httpx.ASGITransport(app=create_app()),
                base_url="http://scenegen", timeout=None)
        async with client:
            return await client.request(method, path, json=body, params=params)

    return asyncio.run(go())


def _fail(response: httpx.Response) -> int:
    try:
        detail = response.json().get("detail")
    except json.JSONDecodeError:
        detail = response.text
    if isinstance(detail, dict):
        print(f"error ({detail.get('kind', 'unknown')}): "
              f"{detail.get('message', '')}", file=sys.stderr)
    else:
        print(f"error: {detail}", file=sys.stderr)
    return _exit_for(response.status_code)


def _call(args, method: str, path: str, body: Optional[dict] = None,
          params: Optional[dict] = None):
    try:
        response = _request(method, path, args.server, body, params)
    except httpx.HTTPError as exc:
        print(f"error (transport): {exc}", file=sys.stderr)
        return None, EXIT_INTERNAL
    if response.status_code >= 300:
        return None, _fail(response)
    return response.json(), EXIT_OK


def _print_cells(payload: dict) -> None:
    for c in payload["cells"]:
        if c["note"]:
            print(f"{c['task']}  train={c['train_factors']}  "
                  f"eval={c['eval_factor']}  {c['note']}")
        else:
            print(f"{c['task']}  train={c['train_factors']}  "
                  f"eval={c['eval_factor']}  {c['successes']}/{c['rollouts']}"
                  f"  rate={c['rate']}")
    if payload.get("csv_path"):
        print(f"csv written to {payload['csv_path']}")


def _maybe_write_markdown(payload: dict, path: Optional[str]) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as f:
            f.write(payload["markdown"])
        print(f"markdown written to {path}")


def cmd_generate(args) -> int:
    body = {"task": args.task, "factors": args.factors,
            "episodes": args.episodes, "seed": args.seed, "out": args.out,
            "config": args.config, "workers": args.workers}
    payload, code = _call(args, "POST", "/generate", body)
    if payload is None:
        return code
    print(f"generated {payload['episodes']} episodes in "
          f"{payload['attempts']} attempts "
          f"(success rate {payload['success_rate']:.3f})")
    print(f"dataset: {payload['path']}")
    print(f"content hash: {payload['content_hash']}")
    return EXIT_OK


def cmd_train(args) -> int:
    body = {"dataset": args.dataset, "out": args.out, "seed": args.seed,
            "epochs": args.epochs}
    payload, code = _call(args, "POST", "/train", body)
    if payload is None:
        return code
    hold = (f", holdout {payload['holdout_loss']:.4f}"
            if payload.get("holdout_loss") is not None else "")
    print(f"trained {payload['task']} "
          f"[{'+'.join(payload['train_factors']) or 'none'}] on "
          f"{payload['pairs']} pairs: loss {payload['initial_loss']:.4f} -> "
          f"{payload['final_loss']:.4f}{hold}")
    print(f"checkpoint: {payload['checkpoint']}")
    return EXIT_OK


def cmd_eval(args) -> int:
    body = {"checkpoint": args.checkpoint, "factors": args.factors,
            "rollouts": args.rollouts, "seed": args.seed, "task": args.task,
            "out": args.out, "config": args.config,
            "max_steps": args.max_steps}
    payload, code = _call(args, "POST", "/eval", body)
    if payload is None:
        return code
    _print_cells(payload)
    _maybe_write_markdown(payload, args.markdown)
    return EXIT_OK


def _parse_checkpoints(text: str) -> dict:
    out = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(
                f"checkpoint spec {part!r} is not of the form label=path")
        label, path = part.split("=", 1)
        out[label.strip()] = path.strip()
    if not out:
        raise ValueError("no checkpoints given")
    return out


def cmd_ablation(args) -> int:
    try:
        checkpoints = _parse_checkpoints(args.checkpoints)
    except ValueError as exc:
        print(f"error (usage): {exc}", file=sys.stderr)
        return EXIT_USAGE
    body = {"checkpoints": checkpoints,
            "eval_factors": [f.strip() for f in args.factors.split(",")
                             if f.strip()],
            "rollouts": args.rollouts, "seed": args.seed, "out": args.out,
            "task": args.task, "config": args.config,
            "max_steps": args.max_steps}
    payload, code = _call(args, "POST", "/ablation", body)
    if payload is None:
        return code
    _print_cells(payload)
    print(payload["markdown"], end="")
    _maybe_write_markdown(payload, args.markdown)
    if payload["skipped"]:
        print(f"error (data): {payload['skipped']} cells skipped "
              f"(missing checkpoints)", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_stats(args) -> int:
    payload, code = _call(args, "GET", "/stats",
                          params={"path": args.dataset})
    if payload is None:
        return code
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenegen",
        description="Generate scene-randomized manipulation datasets, train "
                    "diffusion policies on them, and run the evaluation "
                    "matrix.")
    parser.add_argument("--server", default=None,
                        help="base URL of a running service (default: run "
                             "in-process)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a demonstration dataset")
    p.add_argument("--task", required=True)
    p.add_argument("--factors", default="none",
                   help="comma list of randomization factors, or 'none'")
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--config", default=None,
                   help="YAML randomization config path")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel generation workers (default: "
                        "$SCENEGEN_WORKERS or 1)")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("train", help="train a policy on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint under one "
                                    "eval-factor setting")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--factors", default="none",
                   help="factors randomized during evaluation")
    p.add_argument("--rollouts", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task", default=None,
                   help="override the task recorded in the checkpoint")
    p.add_argument("--out", default=None, help="CSV output path")
    p.add_argument("--config", default=None)
    p.add_argument("--max-steps", type=int, default=200)
    p.add_argument("--markdown", default=None, help="markdown output path")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablation",
                       help="train-regime x eval-factor success matrix")
    p.add_argument("--checkpoints", required=True,
                   help="comma list of label=path entries, e.g. "
                        "none=a.ckpt,camera=b.ckpt")
    p.add_argument("--factors", required=True,
                   help="comma list of eval factors, e.g. none,camera")
    p.add_argument("--rollouts", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV output path")
    p.add_argument("--task", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--max-steps", type=int, default=200)
    p.add_argument("--markdown", default=None)
    p.set_defaults(fn=cmd_ablation)

    p = sub.add_parser("stats", help="summarize a stored dataset")
    p.add_argument("--dataset", required=True)
    p.set_defaults(fn=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
