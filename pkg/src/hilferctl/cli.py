"""hilferctl verify|sweep|optimal|inclusion|problem1 [--config PATH] [overrides]

Precedence: command-line flag > configuration file > built-in default.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError
from .runner import RUNS, config_from_dict, configure_logging, parse_config_text, run_experiment, write_error


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hilferctl", description="Fractional evolution control experiments.")
    p.add_argument("run", choices=RUNS)
    p.add_argument("--config", type=Path, help="JSON configuration file")
    p.add_argument("--alpha", type=float)
    p.add_argument("--psi", choices=("linear", "power", "exponential", "logarithmic"))
    p.add_argument("--out", type=str, help="output directory")
    p.add_argument("--seed", type=int)
    return p


def main(argv=None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    raw, text = {}, ""
    try:
        if args.config is not None:
            text = args.config.read_text()
            raw = parse_config_text(text)
        raw["run"] = args.run
        for name in ("alpha", "psi", "out", "seed"):
            v = getattr(args, name)
            if v is not None:
                raw[name] = v
        cfg = config_from_dict(raw, text)
    except (ConfigError, OSError, ValueError) as exc:
        out = raw.get("out") if isinstance(raw, dict) and isinstance(raw.get("out"), str) else "hilferctl_out"
        doc = write_error(Path(out), exc)
        print(json.dumps(doc), file=sys.stderr)
        return 2
    return run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())
