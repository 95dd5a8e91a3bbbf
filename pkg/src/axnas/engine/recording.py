"""Operation-cost instrumentation.

A CostRecorder captures one entry per primitive executed while it is
active, used to derive per-layer MAC/FLOP counts from a real forward pass.
Costs include the batch factor of the tensors actually processed; callers
that want per-inference counts run with batch 1.
"""

from __future__ import annotations

from dataclasses import dataclass

_STACK: list = []


@dataclass
class CostEntry:
    kind: str        # conv | linear | bn | pool | act | gap | add
    detail: str
    ops: int         # MACs for conv/linear, FLOPs otherwise
    approximable: bool = False


class CostRecorder:
    def __init__(self):
        self.entries: list[CostEntry] = []

    def __enter__(self):
        _STACK.append(self)
        return self

    def __exit__(self, *exc):
        _STACK.pop()
        return False


def record(kind: str, detail: str, ops: int, approximable: bool = False):
    if _STACK:
        _STACK[-1].entries.append(CostEntry(kind, detail, int(ops), approximable))
