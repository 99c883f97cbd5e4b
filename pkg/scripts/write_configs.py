"""Write the fixture configs as JSON so they can be fed to ``pfedlia run``.

    python scripts/write_configs.py [--out scripts/configs]
"""

import argparse
import json
from pathlib import Path

from pfedlia import fixtures
from pfedlia.config import METHODS, bench_to_dict, dump_config


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--out", default=str(Path(__file__).parent / "configs"))
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for fixture in ("pathological", "noisy"):
        for method in METHODS:
            dump_config(getattr(fixtures, fixture)(method), out / f"{fixture}_{method}.json")
    (out / "bench.json").write_text(json.dumps(bench_to_dict(fixtures.bench()), indent=2) + "\n")
    print(f"configs written to {out}")


if __name__ == "__main__":
    main()
