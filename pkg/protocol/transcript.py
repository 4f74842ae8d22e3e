"""Per-round record of everything exchanged, plus a JSON-lines writer."""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from crypto.he_base import CiphertextVector
from fairness.masks import Mask

Reports = Dict[int, Tuple[Tuple[int, float], ...]]


@dataclass(frozen=True)
class RoundTranscript:
    """One round of any scheme.

    Plaintext schemes fill fl_gradient; GBPPFFL fills uploads and encrypted
    (fl_gradient, s_00, s_ii, s_i0, rewards) and phi_reports instead.
    """
    round: int
    scheme: str
    r_prev: np.ndarray
    r: np.ndarray
    phi: np.ndarray
    q: np.ndarray
    masks: Tuple[Mask, ...] = ()
    rewards: Tuple[np.ndarray, ...] = ()
    fl_gradient: Optional[np.ndarray] = None
    phi_reports: Reports = field(default_factory=dict)
    uploads: Tuple[CiphertextVector, ...] = ()
    encrypted: Dict[str, Any] = field(default_factory=dict)

    def ciphertexts(self) -> List[CiphertextVector]:
        """Every ciphertext produced in the round."""
        found = list(self.uploads)
        for value in self.encrypted.values():
            if isinstance(value, CiphertextVector):
                found.append(value)
            elif isinstance(value, (list, tuple)):
                found.extend(v for v in value if isinstance(v, CiphertextVector))
        return found

    def lowest_level(self) -> Optional[int]:
        levels = [c.level for c in self.ciphertexts()]
        return min(levels) if levels else None

    def to_record(self) -> Dict[str, Any]:
        """JSON-friendly summary; ciphertexts are described, never dumped."""
        record: Dict[str, Any] = {
            "round": self.round,
            "scheme": self.scheme,
            "r_prev": _floats(self.r_prev),
            "r": _floats(self.r),
            "phi": _floats(self.phi),
            "q": _floats(self.q),
            "retained": [m.retained_count for m in self.masks],
            "reward_norms": [float(np.linalg.norm(g)) for g in self.rewards],
        }
        if self.fl_gradient is not None:
            record["fl_gradient_norm"] = float(np.linalg.norm(self.fl_gradient))
        if self.phi_reports:
            record["phi_reports"] = {
                str(subject): [[reporter, float(value)] for reporter, value in reports]
                for subject, reports in sorted(self.phi_reports.items())
            }
        if self.uploads or self.encrypted:
            described: Dict[str, Any] = {"uploads": [c.describe() for c in self.uploads]}
            for name, value in self.encrypted.items():
                if isinstance(value, CiphertextVector):
                    described[name] = value.describe()
                else:
                    described[name] = [c.describe() for c in value]
            record["ciphertexts"] = described
            record["lowest_level"] = self.lowest_level()
        return record


def _floats(values: np.ndarray) -> List[Optional[float]]:
    # NaN is not valid JSON
    return [None if np.isnan(v) else float(v) for v in np.asarray(values, dtype=np.float64)]


class TranscriptWriter:
    """Appends one JSON object per round to a file."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = open(self.path, "w", encoding="utf-8")
        self.rounds_written = 0

    def write(self, transcript: RoundTranscript) -> None:
        self._handle.write(json.dumps(transcript.to_record(), sort_keys=True) + "\n")
        self._handle.flush()
        self.rounds_written += 1

    def close(self) -> None:
        if not self._handle.closed:
            self._handle.close()

    def __enter__(self) -> "TranscriptWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_transcript(path: Union[str, Path]) -> List[Dict[str, Any]]:
    """Load the records written by TranscriptWriter."""
    with open(path, "r", encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]
