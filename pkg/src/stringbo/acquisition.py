"""Expected improvement over GP posteriors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .gp import GpModel, predict
from .kernels import Tokens

VAR_FLOOR = 1e-12


@dataclass
class AcquisitionContext:
    model: GpModel
    incumbent: float

    @classmethod
    def from_model(cls, model: GpModel) -> "AcquisitionContext":
        if len(model.data) == 0:
            raise ValueError("acquisition context needs at least one observation")
        return cls(model=model, incumbent=float(np.max(model.data.values)))


def ei_values(means: np.ndarray, variances: np.ndarray, incumbent: float) -> np.ndarray:
    """Closed-form EI; degenerate (zero-variance) posteriors fall back to
    max(mean - incumbent, 0)."""
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    improve = means - incumbent
    out = np.maximum(improve, 0.0)
    live = variances > VAR_FLOOR
    if np.any(live):
        s = np.sqrt(variances[live])
        z = improve[live] / s
        pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        out[live] = improve[live] * special.ndtr(z) + s * pdf
    return out


def expected_improvement(ctx: AcquisitionContext, query: Tokens) -> float:
    post = predict(ctx.model, query)
    return float(ei_values(np.array([post.mean]), np.array([post.variance]), ctx.incumbent)[0])


def expected_improvement_batch(ctx: AcquisitionContext, queries) -> np.ndarray:
    means, variances = ctx.model.predict_batch(queries)
    return ei_values(means, variances, ctx.incumbent)
