"""Argument handling shared by the experiment scripts."""

import argparse
import os


def parser(description: str, default_out: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--out", default=os.path.join("runs", default_out))
    return p


def out_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
