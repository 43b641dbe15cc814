"""Phase-space paths, ordered displacement products and their geometric phase."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from geomgate import fock

CLOSURE_TOL = 1e-12


class DegeneratePath(ValueError):
    """Path has fewer than two samples."""


@dataclass(frozen=True)
class DisplacementPath:
    """Ordered phase-space samples alpha_0 .. alpha_N joined by straight segments."""

    samples: np.ndarray
    closure_tol: float = CLOSURE_TOL

    def __post_init__(self):
        samples = np.array(self.samples, dtype=complex).ravel()
        if not np.all(np.isfinite(samples)):
            raise ValueError("path samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.samples)

    @property
    def closed(self) -> bool:
        return len(self) >= 2 and abs(self.samples[-1] - self.samples[0]) <= self.closure_tol

    def reversed(self) -> "DisplacementPath":
        return DisplacementPath(self.samples[::-1], self.closure_tol)

    def then(self, other: "DisplacementPath") -> "DisplacementPath":
        """Concatenate; ``other`` is translated so it starts where ``self`` ends."""
        shift = self.samples[-1] - other.samples[0]
        return DisplacementPath(
            np.concatenate([self.samples, other.samples[1:] + shift]), self.closure_tol
        )


@dataclass(frozen=True)
class PathPhaseResult:
    theta: float
    net_displacement: complex
    signed_area: float


def circle_path(radius: float, n_segments: int, center: complex = 0.0,
                start_angle: float = 0.0, turns: float = 1.0) -> DisplacementPath:
    """Counterclockwise polygon inscribed in a circle (negative ``turns`` for clockwise)."""
    angles = start_angle + np.linspace(0.0, 2 * np.pi * turns, n_segments + 1)
    samples = center + radius * np.exp(1j * angles)
    if float(turns).is_integer():
        samples[-1] = samples[0]
    return DisplacementPath(samples)


def polygon_path(vertices, close: bool = True) -> DisplacementPath:
    vertices = list(vertices)
    if close and vertices[-1] != vertices[0]:
        vertices.append(vertices[0])
    return DisplacementPath(vertices)


def _require_segments(path: DisplacementPath) -> None:
    if len(path) < 2:
        raise DegeneratePath(f"path needs at least 2 samples, got {len(path)}")


def path_phase(path: DisplacementPath) -> PathPhaseResult:
    """Geometric phase Im sum_k conj(alpha_k) (alpha_{k+1} - alpha_k).

    Left-endpoint sampling mirrors the operator ordering of a displacement
    product, so for a path starting at the origin (or any closed path) the
    result equals the phase of :func:`compose_displacements` at every N.
    The shoelace area uses the same sums, hence ``theta == 2 * signed_area``
    up to round-off.
    """
    _require_segments(path)
    z = path.samples
    cross = np.conj(z[:-1]) * z[1:]
    theta = float(np.sum(np.imag(cross)))
    x, y = z.real, z.imag
    area = 0.5 * float(np.sum(x[:-1] * y[1:] - y[:-1] * x[1:]))
    return PathPhaseResult(theta, complex(z[-1] - z[0]), area)


def product_phase(path: DisplacementPath) -> float:
    """Phase of D(d_N)...D(d_1) relative to D(sum d_k): sum_{k<j} Im(d_j conj(d_k))."""
    _require_segments(path)
    d = path.steps
    partial = np.concatenate([[0.0], np.cumsum(d)[:-1]])
    return float(np.sum(np.imag(d * np.conj(partial))))


def compose_displacements(path: DisplacementPath, n_max: int) -> tuple[np.ndarray, float]:
    """Ordered product D(d_N)...D(d_1) of segment displacements and its phase.

    The phase is :func:`product_phase`; it coincides with ``path_phase(path).theta``
    for closed paths and for paths starting at the origin.
    """
    _require_segments(path)
    dim = fock.check_n_max(n_max) + 1
    peak = float(np.max(np.abs(path.samples - path.samples[0])))
    fock.truncation_guard(peak, n_max)
    a = fock.annihilation(n_max)
    adag = a.conj().T
    # i(d a+ - d* a) is Hermitian
    prod = np.eye(dim, dtype=complex)
    for d in path.steps:
        gen = 1j * (d * adag - np.conj(d) * a)
        w, v = np.linalg.eigh(gen)
        prod = (v * np.exp(-1j * w)) @ v.conj().T @ prod
    return prod, product_phase(path)


def write_csv(path: DisplacementPath, target=None) -> str:
    """Serialize as ``index,re,im`` rows; returns the text and writes it if ``target`` given."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", "re", "im"])
    for k, z in enumerate(path.samples):
        writer.writerow([k, f"{z.real + 0.0:.12g}", f"{z.imag + 0.0:.12g}"])
    text = buf.getvalue()
    if target is not None:
        Path(target).write_text(text, encoding="utf-8")
    return text


def read_csv(source) -> DisplacementPath:
    """Parse ``index,re,im`` CSV text or file; ``#`` comment lines are skipped."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and Path(source).exists()):
        source = Path(source).read_text(encoding="utf-8")
    lines = [ln for ln in source.splitlines() if ln.strip() and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames != ["index", "re", "im"]:
        raise ValueError(f"expected header index,re,im, got {reader.fieldnames}")
    rows = sorted(reader, key=lambda r: int(r["index"]))
    return DisplacementPath([complex(float(r["re"]), float(r["im"])) for r in rows])
