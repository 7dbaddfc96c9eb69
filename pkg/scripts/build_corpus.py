"""Regenerate the golden ``.metric`` files."""

import argparse
from dataclasses import dataclass
from pathlib import Path

from weylscope.corpus import write_golden


@dataclass
class Config:
    out: Path = Path(__file__).resolve().parents[1] / "corpus"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Config.out)
    cfg = Config(**vars(ap.parse_args()))
    for path in write_golden(cfg.out):
        print(path)


if __name__ == "__main__":
    main()
