"""Server command line.

  mcrise-server serve --backend synthetic:constant:0.7 --port 8008
  mcrise-server serve --backend classifier:mobilenet_v3_small --seed 1
  mcrise-server conformance http://127.0.0.1:8008
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backends import backend_from_string
from .conformance import conformance_check


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mcrise-server", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the scoring server")
    serve.add_argument("--backend", required=True,
                       help="synthetic:<spec> or classifier:<torchvision name>")
    serve.add_argument("--weights", help="local weights file for the classifier")
    serve.add_argument("--labels", help="comma-separated advertised labels")
    serve.add_argument("--labels-file", help="file with one label per line")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8008)
    serve.add_argument("--batch-cap", type=int, default=256)
    serve.add_argument("--device", default="cpu")
    serve.add_argument("--seed", type=int, default=0,
                       help="initialization seed when no weights are given")

    conf = sub.add_parser("conformance", help="replay golden fixtures against a server")
    conf.add_argument("url")
    conf.add_argument("--fixtures", help="alternative fixtures JSON file")
    conf.add_argument("--repeats", type=int, default=2)

    args = parser.parse_args(argv)
    if args.command == "serve":
        return _cmd_serve(args)
    return _cmd_conformance(args)


def _parse_labels(args):
    if args.labels:
        return [v for v in args.labels.split(",") if v]
    if args.labels_file:
        return [line.strip() for line in Path(args.labels_file).read_text().splitlines()
                if line.strip()]
    return None


def _cmd_serve(args) -> int:
    import uvicorn

    from .app import make_app

    try:
        backend = backend_from_string(
            args.backend, weights=args.weights, labels=_parse_labels(args),
            device=args.device, seed=args.seed,
        )
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    app = make_app(backend, batch_cap=args.batch_cap)
    print(f"serving {backend.description} on {args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_conformance(args) -> int:
    fixtures = json.loads(Path(args.fixtures).read_text()) if args.fixtures else None
    report = conformance_check(args.url, fixtures=fixtures, repeats=args.repeats)
    print(report.summary())
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
