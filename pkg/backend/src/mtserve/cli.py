"""Command line entrypoints: serve and finetune."""

from __future__ import annotations

import argparse
import sys

from .errors import BadTrainingFile, OutOfMemory
from .settings import BackendSettings, Precision


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtserve")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the /translate HTTP server")
    serve.add_argument("--echo", action="store_true", help="answer without a model")
    serve.add_argument("--proxy-model", help="directory with a saved proxy model")
    serve.add_argument("--adapter-dir", help="directory with trained adapters")
    serve.add_argument("--model-id", default="proxy-lm")
    serve.add_argument("--precision", choices=["half", "full"], default="half")
    serve.add_argument("--device", default="cpu")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8080)

    tune = sub.add_parser("finetune", help="train LoRA adapters on a JSONL file")
    tune.add_argument("--train-file", required=True)
    tune.add_argument("--config", help="run config JSON with trainer fields")
    tune.add_argument("--out-dir", required=True)
    tune.add_argument("--proxy-model", help="directory with a saved proxy model")
    tune.add_argument("--epochs", type=int, default=None)
    tune.add_argument("--seed", type=int, default=13)

    init = sub.add_parser("init-proxy", help="create and save a fresh proxy model")
    init.add_argument("--out-dir", required=True)
    init.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app

    settings = BackendSettings(
        model_id=args.model_id,
        adapter_dir=args.adapter_dir,
        precision=Precision(args.precision),
        device=args.device,
        echo_mode=args.echo,
    )
    if settings.echo_mode:
        app = create_app(settings)
    else:
        if not args.proxy_model:
            print("serve needs --echo or --proxy-model", file=sys.stderr)
            return 1
        from .lora import load_adapters
        from .model import load_model

        model = load_model(args.proxy_model)
        if settings.adapter_dir:
            load_adapters(model, settings.adapter_dir)
        # CPU decoding stays float32; half only pays off on accelerators.
        if settings.precision is Precision.HALF and settings.device != "cpu":
            model = model.half()
        model = model.to(settings.device)
        app = create_app(settings, model=model)
    uvicorn.run(app, host=args.host, port=args.port, log_level="error")
    return 0


def _cmd_finetune(args: argparse.Namespace) -> int:
    from .finetune import TrainerConfig, finetune, load_trainer_config
    from .model import load_model

    config = TrainerConfig()
    if args.config:
        config = load_trainer_config(args.config)
    model = load_model(args.proxy_model) if args.proxy_model else None
    result = finetune(
        args.train_file,
        args.out_dir,
        config=config,
        model=model,
        epochs=args.epochs,
        seed=args.seed,
    )
    print(f"adapters={result.adapter_dir} log={result.log_path}")
    return 0


def _cmd_init_proxy(args: argparse.Namespace) -> int:
    from .model import new_model, save_model

    save_model(new_model(args.seed), args.out_dir)
    print(f"model={args.out_dir}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "serve": _cmd_serve,
        "finetune": _cmd_finetune,
        "init-proxy": _cmd_init_proxy,
    }
    try:
        return handlers[args.command](args)
    except FileNotFoundError as exc:
        print(f"file not found: {exc.filename or exc}", file=sys.stderr)
        return 1
    except (BadTrainingFile, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except OutOfMemory as exc:
        print(f"out of memory: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
