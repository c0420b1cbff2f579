"""Test-time perturbations applied to raw volumes before preprocessing:
gamma contrast shift, Gibbs ringing via k-space truncation, and a smooth
multiplicative bias field. One perturbation per evaluated volume; all are
pure functions of (volume, spec).
"""

from dataclasses import dataclass

import numpy as np

from ._kernels import fft as F
from .errors import ConfigError
from .mriio import Volume

GAMMA_GRID = (0.5, 0.8, 1.0, 1.2, 1.5, 2.0)
GIBBS_GRID = (0.0, 0.1, 0.2, 0.3, 0.4)
BIAS_GRID = (0.0, 0.1, 0.2, 0.3, 0.4)

KINDS = ("gamma", "gibbs", "bias")


@dataclass
class PerturbSpec:
    kind: str
    severity: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"perturb kind {self.kind!r} not in {KINDS}")
        if self.kind == "gamma" and self.severity <= 0:
            raise ConfigError("gamma severity must be positive")
        if self.kind == "gibbs" and not 0.0 <= self.severity < 1.0:
            raise ConfigError("gibbs severity must lie in [0, 1)")
        if self.kind == "bias" and self.severity < 0:
            raise ConfigError("bias severity must be non-negative")

    def is_identity(self):
        return ((self.kind == "gamma" and self.severity == 1.0)
                or (self.kind == "gibbs" and self.severity == 0.0)
                or (self.kind == "bias" and self.severity == 0.0))


def canonical_specs(seed=0):
    """The standard severity sweep, one spec per grid point."""
    specs = [PerturbSpec("gamma", g) for g in GAMMA_GRID]
    specs += [PerturbSpec("gibbs", a) for a in GIBBS_GRID]
    specs += [PerturbSpec("bias", s, seed=seed) for s in BIAS_GRID]
    return specs


def gamma_correct(volume, gamma):
    """Min-max normalize, raise to gamma, rescale to the original range."""
    if gamma <= 0:
        raise ConfigError("gamma_correct: gamma must be positive")
    data = volume.data
    if gamma == 1.0:
        return Volume(data=data.copy(), spacing=volume.spacing,
                      source_id=volume.source_id)
    lo, hi = float(data.min()), float(data.max())
    if hi <= lo:
        return Volume(data=data.copy(), spacing=volume.spacing,
                      source_id=volume.source_id)
    x = (data.astype(np.float64) - lo) / (hi - lo)
    out = (x ** gamma) * (hi - lo) + lo
    return Volume(data=out.astype(np.float32), spacing=volume.spacing,
                  source_id=volume.source_id)


def _gibbs_band(n, alpha):
    # symmetric per-edge cut in the centered spectrum; nested across the
    # canonical grid so retained energy is monotone in alpha
    return int(round(alpha * n / 2.0))


def gibbs_truncate(volume, alpha):
    """Zero the outer alpha fraction of frequencies per axis, slice-wise."""
    if not 0.0 <= alpha < 1.0:
        raise ConfigError("gibbs_truncate: alpha must lie in [0, 1)")
    data = volume.data
    nx, ny, nz = data.shape
    cx, cy = _gibbs_band(nx, alpha), _gibbs_band(ny, alpha)
    out = np.empty_like(data)
    for z in range(nz):
        spec = F.fftshift(F.fft2(data[:, :, z].astype(np.complex128)))
        if cx:
            spec[:cx, :] = 0
            spec[nx - cx:, :] = 0
        if cy:
            spec[:, :cy] = 0
            spec[:, ny - cy:] = 0
        out[:, :, z] = np.real(F.ifft2(F.ifftshift(spec))).astype(np.float32)
    return Volume(data=out, spacing=volume.spacing, source_id=volume.source_id)


# trivariate monomials of total degree <= 3: (i, j, k) exponent triples
_POLY_EXPONENTS = [(i, j, k) for i in range(4) for j in range(4) for k in range(4)
                   if i + j + k <= 3]


def bias_field_components(shape, severity, seed):
    """Random degree-3 log-polynomial field over [-1, 1]^3 coordinates.

    Returns (field, coeffs); field = exp(P(x, y, z)).
    """
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(-severity, severity, size=len(_POLY_EXPONENTS))
    axes = [np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1) for n in shape]
    x, y, z = np.meshgrid(*axes, indexing="ij")
    p = np.zeros(shape, np.float64)
    for c, (i, j, k) in zip(coeffs, _POLY_EXPONENTS):
        p += c * (x ** i) * (y ** j) * (z ** k)
    return np.exp(p), coeffs


def bias_field(volume, severity, seed=0):
    """Multiply by a smooth positive field; zero voxels stay zero."""
    if severity < 0:
        raise ConfigError("bias_field: severity must be non-negative")
    if severity == 0:
        return Volume(data=volume.data.copy(), spacing=volume.spacing,
                      source_id=volume.source_id)
    field, _ = bias_field_components(volume.data.shape, severity, seed)
    out = (volume.data.astype(np.float64) * field).astype(np.float32)
    return Volume(data=out, spacing=volume.spacing, source_id=volume.source_id)


def apply_perturbation(volume, spec):
    if spec.kind == "gamma":
        return gamma_correct(volume, spec.severity)
    if spec.kind == "gibbs":
        return gibbs_truncate(volume, spec.severity)
    return bias_field(volume, spec.severity, spec.seed)


def run_sweep(test_volumes, specs, extract_fn, evaluate_fn, include_clean=True):
    """Severity-vs-metric table under a frozen extractor and trained head.

    extract_fn: Volume -> 1-D feature vector (frozen encoder pipeline).
    evaluate_fn: (n, d) feature matrix -> {metric: value | (value, lo, hi)}.
    Returns rows of dicts (kind, severity, metric, value, ci_low, ci_high);
    the clean condition is evaluated on the untouched volumes.
    """
    if evaluate_fn is None:
        raise ConfigError("run_sweep: no trained head / evaluation provided")

    def eval_rows(kind, severity, volumes):
        feats = np.stack([np.asarray(extract_fn(v), np.float32) for v in volumes])
        rows = []
        for metric, val in evaluate_fn(feats).items():
            if isinstance(val, tuple):
                v, lo, hi = val
            else:
                v, lo, hi = val, None, None
            rows.append({"kind": kind, "severity": severity, "metric": metric,
                         "value": float(v),
                         "ci_low": None if lo is None else float(lo),
                         "ci_high": None if hi is None else float(hi)})
        return rows

    out = []
    if include_clean:
        out += eval_rows("clean", 0.0, test_volumes)
    for spec in specs:
        vols = [apply_perturbation(v, spec) for v in test_volumes]
        out += eval_rows(spec.kind, spec.severity, vols)
    return out
