"""Command-line entry points: serve a checkpoint, or fine-tune one."""

from __future__ import annotations

import argparse
import sys

from hfbridge.model import BridgeServerConfig, finetune
from hfbridge.server import serve


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hfbridge",
        description="Transformer classifier server for the trace-bridge line protocol.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve_p = sub.add_parser("serve", help="serve a checkpoint over stdio or TCP")
    serve_p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    serve_p.add_argument("--device", default="cpu")
    serve_p.add_argument("--max-length", type=int, default=512)
    serve_p.add_argument("--tcp", action="store_true", help="listen on TCP instead of stdio")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=0, help="0 picks a free port")

    tune_p = sub.add_parser("finetune", help="fine-tune a base checkpoint on labeled JSONL")
    tune_p.add_argument("--base", required=True, help="base checkpoint directory")
    tune_p.add_argument("--corpus", required=True, help="labeled JSONL corpus file")
    tune_p.add_argument("--out", required=True, help="output checkpoint directory")
    tune_p.add_argument("--lr", type=float, default=2e-5)
    tune_p.add_argument("--n-layers", type=int, default=None,
                        help="keep only the bottom n encoder layers")
    tune_p.add_argument("--epochs", type=int, default=3)
    tune_p.add_argument("--batch-size", type=int, default=16)
    tune_p.add_argument("--seed", type=int, default=0)
    tune_p.add_argument("--device", default="cpu")
    tune_p.add_argument("--max-length", type=int, default=512)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            serve(
                BridgeServerConfig(
                    checkpoint=args.checkpoint,
                    device=args.device,
                    max_length=args.max_length,
                    transport="tcp" if args.tcp else "stdio",
                    host=args.host,
                    port=args.port,
                )
            )
        else:
            log = finetune(
                base=args.base,
                corpus_path=args.corpus,
                out=args.out,
                lr=args.lr,
                n_layers=args.n_layers,
                epochs=args.epochs,
                batch_size=args.batch_size,
                seed=args.seed,
                device=args.device,
                max_length=args.max_length,
            )
            for epoch, loss in enumerate(log["epoch_losses"], start=1):
                print(f"epoch {epoch}: loss {loss:.4f}")
            print(f"saved checkpoint to {args.out}")
    except (RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
