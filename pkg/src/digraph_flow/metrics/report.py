"""Evaluation report assembly and serialisation."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

from ..isomorphism import DEFAULT_TIMEOUT
from .descriptors import KINDS
from .joint import joint_metrics
from .mmd import ratio_summary
from .vun import vun

METRIC_GROUPS = ("mmd", "vun", "joint")


@dataclass
class EvalReport:
    mmd: dict = field(default_factory=dict)
    ratio: float | None = None
    ratio_floored: list = field(default_factory=list)
    validity: float | None = None
    uniqueness: float | None = None
    novelty: float | None = None
    vun: float | None = None
    joint: dict | None = None
    num_generated: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: v for k, v in d.items() if v is not None and v != {} or k == "num_generated"}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def flat(self) -> dict:
        row = {"num_generated": self.num_generated}
        for k, v in sorted(self.mmd.items()):
            row[f"mmd_{k}"] = v
        for k in ("ratio", "validity", "uniqueness", "novelty", "vun"):
            if getattr(self, k) is not None:
                row[k] = getattr(self, k)
        for k, v in sorted((self.joint or {}).items()):
            row[f"joint_{k}"] = v
        return row

    def to_csv(self) -> str:
        row = self.flat()
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        writer.writeheader()
        writer.writerow(row)
        return buf.getvalue()


def evaluate(gen, test, train, metrics=METRIC_GROUPS, validity_fn=None, num_node_classes: int = 1,
             num_edge_classes: int = 2, kinds=KINDS, timeout: float = DEFAULT_TIMEOUT, seed: int = 0) -> EvalReport:
    """Run the selected metric groups; ``vun`` needs ``validity_fn``."""
    unknown = set(metrics) - set(METRIC_GROUPS)
    if unknown:
        raise ValueError(f"unknown metric groups {sorted(unknown)}")
    report = EvalReport(num_generated=len(gen))
    if "mmd" in metrics:
        rs = ratio_summary(gen, test, train, kinds)
        report.mmd = {k: v[0] for k, v in rs.per_kind.items()}
        report.ratio = rs.ratio
        report.ratio_floored = rs.floored
    if "vun" in metrics:
        if validity_fn is None:
            raise ValueError("V.U.N. needs a validity function")
        res = vun(gen, train, validity_fn, timeout)
        report.validity, report.uniqueness = res.validity, res.uniqueness
        report.novelty, report.vun = res.novelty, res.vun
    if "joint" in metrics and (num_node_classes > 1 or num_edge_classes > 2):
        report.joint = asdict(joint_metrics(gen, test, num_node_classes, num_edge_classes, seed))
    return report
