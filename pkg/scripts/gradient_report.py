#!/usr/bin/env python3
"""Print max relative error vs central finite differences for every kernel."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from test_acceptance import (  # noqa: E402
    _check_batchnorm,
    _check_composed,
    _check_gru_cell,
    _check_lstm_cell,
    _check_mlp,
    _check_stack,
)


def main() -> int:
    checks = {
        "mlp": _check_mlp,
        "lstm-cell": _check_lstm_cell,
        "lstm-stack-bptt": lambda s: _check_stack("lstm", s),
        "gru-stack-bptt": lambda s: _check_stack("gru", s),
        "rnn-stack-bptt": lambda s: _check_stack("rnn", s),
        "gru-cell": _check_gru_cell,
        "batchnorm": _check_batchnorm,
        "actor-through-critic": _check_composed,
    }
    for name, fn in checks.items():
        errs = [fn(seed) for seed in range(20)]
        print(f"{name:22s} max {max(errs):.3e}  median {sorted(errs)[10]:.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
