"""Synthetic test volumes: ellipsoid "brain" plus Gaussian-blob "lesions".

Three shape classes (documented parameters, not anatomy):
  0 - round ellipsoid, sparse lesions
  1 - ellipsoid elongated along y, moderate lesions
  2 - ellipsoid elongated along x, dense lesions

Each phantom also carries synthetic targets so every downstream task has
signal: a size-derived continuous value ("age"), survival time generated
from lesion burden (heavier burden -> shorter time), and a censoring flag.
Background voxels are exactly zero, mimicking pre-masked inputs.
"""

from dataclasses import dataclass, field

import numpy as np

from .mriio import Volume

N_CLASSES = 3

# in-plane radii fractions (x, y) per class; z fraction shared
_RADII = {0: (0.36, 0.36), 1: (0.24, 0.42), 2: (0.42, 0.24)}
_Z_FRAC = 0.38
_LESION_RATE = {0: 1, 1: 2, 2: 4}


@dataclass
class PhantomRecord:
    source_id: str
    cls: int
    age: float
    surv_time: int
    surv_event: int
    lesion_burden: float
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"source_id": self.source_id, "cls": self.cls, "age": self.age,
                "surv_time": self.surv_time, "surv_event": self.surv_event,
                "lesion_burden": self.lesion_burden, **self.meta}


def make_phantom(cls, size=64, rng=None):
    """Build one phantom volume. Returns (Volume, PhantomRecord)."""
    rng = rng or np.random.default_rng(0)
    cls = int(cls) % N_CLASSES
    scale = float(rng.uniform(0.85, 1.1))
    rx = _RADII[cls][0] * size * scale
    ry = _RADII[cls][1] * size * scale
    rz = _Z_FRAC * size * scale
    cx, cy, cz = (size / 2 + rng.uniform(-2, 2) for _ in range(3))

    x, y, z = np.meshgrid(np.arange(size), np.arange(size), np.arange(size),
                          indexing="ij")
    r2 = ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 + ((z - cz) / rz) ** 2
    inside = r2 <= 1.0
    vol = np.zeros((size, size, size), np.float32)
    # radial intensity falloff plus mild voxel noise
    vol[inside] = (1.0 - 0.45 * r2[inside] +
                   0.02 * rng.standard_normal(int(inside.sum()))).astype(np.float32)

    n_lesions = int(rng.poisson(_LESION_RATE[cls]))
    burden = 0.0
    for _ in range(n_lesions):
        for _try in range(20):
            lx, ly, lz = (rng.uniform(0.25, 0.75) * size for _ in range(3))
            if ((lx - cx) / rx) ** 2 + ((ly - cy) / ry) ** 2 + ((lz - cz) / rz) ** 2 < 0.6:
                break
        sig = float(rng.uniform(1.5, 3.5))
        blob = np.exp(-(((x - lx) ** 2 + (y - ly) ** 2 + (z - lz) ** 2)
                        / (2 * sig ** 2)))
        amp = float(rng.uniform(0.5, 0.9))
        vol[inside] += (amp * blob[inside]).astype(np.float32)
        burden += amp * sig ** 3

    vol = np.clip(vol, 0.0, None)
    vol[~inside] = 0.0

    age = float(np.clip(15 + 70 * (scale - 0.85) / 0.25 + rng.normal(0, 3), 1, 95))
    risk = 0.004 * burden + 0.25 * cls + rng.normal(0, 0.2)
    t = 1500.0 * np.exp(-risk)
    event = int(rng.random() < 0.65)
    if not event:
        t *= rng.uniform(0.2, 0.9)  # censored before the event would occur
    surv_time = int(max(1, round(t)))
    rec = PhantomRecord(source_id="", cls=cls, age=age, surv_time=surv_time,
                        surv_event=event, lesion_burden=float(burden))
    return Volume(data=vol, source_id=""), rec


def generate(count, size=64, seed=0, class_cycle=True):
    """A corpus of phantoms. Returns (volumes, records); deterministic."""
    volumes, records = [], []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        cls = i % N_CLASSES if class_cycle else int(rng.integers(N_CLASSES))
        vol, rec = make_phantom(cls, size=size, rng=rng)
        vol.source_id = rec.source_id = f"phantom_{i:05d}"
        volumes.append(vol)
        records.append(rec)
    return volumes, records
