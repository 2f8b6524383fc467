"""JSON encoding of problems, run configurations and run reports.

Complex scalars are written as ``[re, im]``; matrices are row-major nested
lists whose entries are either plain numbers or ``[re, im]`` pairs. Density
operators may be given as a matrix or as ``{"purification": psi, "n": n}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Any, Optional

import numpy as np

from .blockenc import PurifiedAccess, access_from_state, purify
from .errors import ContractError

MODES = ("classical", "quantum-exact", "quest", "extract", "sweep")


def encode_complex(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def decode_complex(v) -> complex:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(t, (int, float)) for t in v):
        return complex(v[0], v[1])
    raise ContractError(f"expected a number or [re, im], got {v!r}")


def encode_matrix(M) -> list:
    M = np.asarray(M)
    if np.iscomplexobj(M):
        return [[encode_complex(z) for z in row] for row in M]
    return M.astype(float).tolist()


def decode_matrix(rows) -> np.ndarray:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ContractError("matrix must be a non-empty list of rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ContractError("matrix rows have different lengths")
    return np.array([[decode_complex(z) for z in r] for r in rows], dtype=complex)


def encode_vector(v) -> list:
    v = np.asarray(v)
    if np.iscomplexobj(v):
        return [encode_complex(z) for z in v]
    return v.astype(float).tolist()


def decode_real_vector(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    return np.atleast_1d(a)


def encode_density(rho) -> Any:
    return encode_matrix(rho)


def decode_density(obj) -> np.ndarray:
    if isinstance(obj, dict):
        return decode_access(obj).density()
    return decode_matrix(obj)


def decode_access(obj) -> PurifiedAccess:
    """Purified access from either form; a matrix is purified canonically."""
    if isinstance(obj, dict):
        psi = np.array([decode_complex(z) for z in obj["purification"]], dtype=complex)
        return access_from_state(psi, int(obj["n"]))
    return purify(decode_matrix(obj))


def encode_problem(inst: dict) -> dict:
    """JSON form of a problem dictionary from :mod:`qesscher.instances`."""
    out = {}
    for k, v in inst.items():
        if k in ("rho",):
            out[k] = encode_density(v)
        elif k == "H":
            out[k] = [encode_matrix(H) for H in v]
        elif k == "X":
            out[k] = np.asarray(v, dtype=float).tolist()
        elif isinstance(v, np.ndarray):
            out[k] = encode_vector(v)
        else:
            out[k] = v
    return out


def _clean(obj):
    """Recursively convert numpy values to JSON-native ones; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(encode_matrix(obj) if obj.ndim == 2 else encode_vector(obj))
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else ("inf" if f > 0 else "-inf" if f < 0 else "nan")
    if isinstance(obj, complex):
        return encode_complex(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


@dataclass
class RunConfig:
    mode: str
    problem: dict
    epsilon: Optional[float] = None
    seed: int = 0
    output_path: Optional[str] = None
    tol: Optional[float] = None
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"mode", "problem", "epsilon", "seed", "output_path", "tol", "options"}
        extra = set(d) - known
        if extra:
            raise ContractError(f"unknown config fields: {', '.join(sorted(extra))}")
        return cls(**d)

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class RunReport:
    mode: str
    inputs: dict
    defaults: dict
    solution: dict
    audit: list
    cost: Optional[dict]
    wall_ms: float
    library_version: str
    seed: int
    status: str = "ok"

    def __post_init__(self):
        # store JSON-native values only, so emit/parse is an exact round trip
        for name in ("inputs", "defaults", "solution", "audit", "cost"):
            setattr(self, name, _clean(getattr(self, name)))
        self.wall_ms = float(self.wall_ms)
        self.seed = int(self.seed)

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(**d)

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))

    def deterministic_view(self) -> dict:
        """Everything except wall-clock timing."""
        d = self.to_dict()
        d.pop("wall_ms", None)
        return d


def load_schema(name: str) -> dict:
    text = resources.files("qesscher").joinpath("schemas", f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)
