"""Discrete error norms and convergence rates."""

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class ErrorReport:
    """l_inf / l_2 errors at one resolution; orders are relative to the previous row"""
    n: int
    h: float
    l_inf: float
    l_2: float
    order_inf: Optional[float] = None
    order_2: Optional[float] = None
    steps: int = 0

    @classmethod
    def from_errors(cls, errors, h, n, steps=0):
        errors = np.abs(np.asarray(errors, dtype=float).ravel())
        if errors.size == 0:
            raise ValueError("no errors to measure")
        return cls(n=n, h=h, l_inf=float(errors.max()),
                   l_2=float(math.sqrt(h * h * np.sum(errors * errors))), steps=steps)

    def with_orders(self, previous):
        if previous is None:
            return self
        return replace(
            self,
            order_inf=convergence_rate(previous.l_inf, self.l_inf, previous.h, self.h),
            order_2=convergence_rate(previous.l_2, self.l_2, previous.h, self.h),
        )

    def resolution_label(self):
        """'81x81x4' with a step count, '81x81' without"""
        base = f"{self.n}x{self.n}"
        return f"{base}x{self.steps}" if self.steps else base


def convergence_rate(e_coarse, e_fine, h_coarse, h_fine):
    """log(e_coarse / e_fine) / log(h_coarse / h_fine); log2 ratio when h halves"""
    if e_coarse <= 0.0 or e_fine <= 0.0:
        return None
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


def chain_orders(reports):
    """Fill in orders of a sequence of reports ordered coarse to fine"""
    out = []
    previous = None
    for report in reports:
        report = report.with_orders(previous)
        out.append(report)
        previous = report
    return out


def fitted_slope(hs, errors):
    """Least-squares slope of log(error) against log(h)"""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(hs) < 2:
        raise ValueError("a slope needs at least two resolutions")
    slope, _ = np.polyfit(np.log(hs), np.log(errors), 1)
    return float(slope)


def table_rows(reports, scheme=None):
    """Rows for the convergence CSV"""
    rows = []
    for r in reports:
        row = {}
        if scheme is not None:
            row["scheme"] = scheme
        row.update({
            "resolution": r.resolution_label(),
            "l_inf": f"{r.l_inf:.6e}",
            "order_inf": "" if r.order_inf is None else f"{r.order_inf:.4f}",
            "l_2": f"{r.l_2:.6e}",
            "order_2": "" if r.order_2 is None else f"{r.order_2:.4f}",
        })
        rows.append(row)
    return rows
