"""Command-line entry points: generate, serve, make-demo-scene."""

from __future__ import annotations

import argparse
import logging
import sys

from .demoscene import make_demo
from .pipeline import load_config, run_pipeline


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="meshtext",
        description="Synthesize annotated scene-text images from 3D mesh worlds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="run the full dataset pipeline from a config file")
    gen.add_argument("--config", required=True, help="pipeline config JSON")
    gen.add_argument("--seed", type=int, default=None, help="override the config master seed")
    gen.add_argument("--dump-gbuffer", action="store_true", help="write per-anchor G-buffer PNGs")
    gen.add_argument("--dump-regions", action="store_true", help="write boundary maps and region JSON")
    gen.add_argument("--dump-decals", action="store_true", help="write deformed decal meshes as OBJ")

    srv = sub.add_parser("serve", help="run the preview/anchor HTTP service")
    srv.add_argument("--scene", required=True, help="scene JSON to serve")
    srv.add_argument("--port", type=int, default=8000)
    srv.add_argument("--host", default="127.0.0.1")

    demo = sub.add_parser("make-demo-scene", help="emit the bundled procedural scenes and config")
    demo.add_argument("--out", required=True, help="output directory")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "generate":
        config = load_config(args.config, seed_override=args.seed)
        manifest = run_pipeline(
            config,
            dump_gbuffer_maps=args.dump_gbuffer,
            dump_region_maps=args.dump_regions,
            dump_decal_meshes=args.dump_decals,
        )
        print(f"wrote {len(manifest.records)} samples to {config.output_dir}")
        return 0

    if args.command == "serve":
        import uvicorn

        from .service import create_app

        app = create_app(args.scene)
        uvicorn.run(app, host=args.host, port=args.port, log_level="info")
        return 0

    if args.command == "make-demo-scene":
        paths = make_demo(args.out)
        for name, path in paths.items():
            print(f"{name}: {path}")
        return 0

    parser.error("unknown command")
    return 2


if __name__ == "__main__":
    sys.exit(main())
