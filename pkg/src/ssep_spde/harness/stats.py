"""Ensemble statistics with jackknife errors.

Sums go through ``math.fsum``, which rounds the exact sum once; results
therefore do not depend on the order of the records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError


def _fsum_cols(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, float)
    flat = a.reshape(a.shape[0], -1)
    out = np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])])
    return out.reshape(a.shape[1:])


@dataclass
class StatsBundle:
    n: int
    mean: np.ndarray
    var: np.ndarray
    cov: np.ndarray
    se_mean: np.ndarray
    se_var: np.ndarray
    se_cov: np.ndarray


def ensemble_stats(records) -> StatsBundle:
    """Per-column mean, variance (ddof 1) and covariance of ``records`` (shape ``(R, p)``).

    Standard errors are delete-one jackknife; the leave-one-out moments have
    closed forms, so no resampling loop is needed.
    """
    x = np.asarray(records, float)
    if x.ndim == 1:
        x = x[:, None]
    R = x.shape[0]
    if R < 2:
        raise ValidationError("ensemble statistics need at least two records")
    mean = _fsum_cols(x) / R
    c = x - mean
    cc = c[:, :, None] * c[:, None, :]
    C = _fsum_cols(cc)
    cov = C / (R - 1)
    var = np.diag(cov).copy()
    se_mean = np.sqrt(var / R)
    if R < 3:
        nan = np.full_like(cov, np.nan)
        return StatsBundle(R, mean, var, cov, se_mean, np.diag(nan).copy(), nan)
    loo = (C[None] - R / (R - 1) * cc) / (R - 2)
    dev = loo - _fsum_cols(loo) / R
    se_cov = np.sqrt((R - 1) / R * _fsum_cols(dev * dev))
    return StatsBundle(R, mean, var, cov, se_mean, np.diag(se_cov).copy(), se_cov)


def jackknife_se(values, stat=np.mean) -> float:
    """Delete-one jackknife error of a scalar statistic."""
    v = np.asarray(values, float)
    R = v.shape[0]
    if R < 2:
        raise ValidationError("jackknife needs at least two records")
    loo = np.array([stat(np.delete(v, i, axis=0)) for i in range(R)])
    return float(np.sqrt((R - 1) / R * np.sum((loo - loo.mean()) ** 2)))


def z_score(estimate, target, se):
    return (np.asarray(estimate) - target) / np.asarray(se)


def z_two(a, se_a, b, se_b):
    """Two independent estimates: ``(a - b) / sqrt(se_a^2 + se_b^2)``."""
    return (np.asarray(a) - b) / np.sqrt(np.asarray(se_a) ** 2 + np.asarray(se_b) ** 2)
