"""Text formats for sequences, spectra, genealogies and mutation records."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .coalescent import MergerHistory, MutationSet
from .errors import IntegrityError, SchemaError
from .freq import FrequencySequence
from .occupancy import BlockSpectrum

PathLike = Union[str, Path]


def _write(path: PathLike, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _read(path: PathLike) -> str:
    path = Path(path)
    try:
        return path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc


# -- frequency sequences -----------------------------------------------------
# header lines "# dust: <float>", optional "# marked_dust: <float>" and "# provenance: <json>", then one line per
# group: value<TAB>multiplicity[<TAB>marked]


def format_freq(seq: FrequencySequence) -> str:
    lines = [f"# dust: {seq.dust!r}"]
    if seq.marked_dust:
        lines.append(f"# marked_dust: {seq.marked_dust!r}")
    lines += [f"# provenance: {json.dumps(seq.provenance, sort_keys=True, default=str)}"]
    for v, c, m in zip(seq.values.tolist(), seq.counts.tolist(), seq.marked.tolist()):
        row = f"{v!r}\t{int(c)}"
        if int(m):
            row += f"\t{int(m)}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def write_freq(seq: FrequencySequence, path: PathLike) -> Path:
    return _write(path, format_freq(seq))


def _parse_multiplicity(text: str) -> int:
    text = text.strip()
    if text.startswith("log:"):
        # only the rounded count survives; exact counts are always written as integers
        return max(1, int(round(math.exp(float(text[4:])))))
    return int(text)


def parse_freq(text: str) -> FrequencySequence:
    dust: Optional[float] = None
    marked_dust = 0.0
    provenance: dict = {}
    values, counts, marked = [], [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, _, val = s[1:].partition(":")
            key = key.strip()
            if key == "dust":
                dust = float(val)
            elif key == "marked_dust":
                marked_dust = float(val)
            elif key == "provenance":
                provenance = json.loads(val) if val.strip() else {}
            continue
        parts = s.split("\t")
        if len(parts) not in (2, 3):
            raise SchemaError(f"line {lineno}: expected value<TAB>multiplicity[<TAB>marked]")
        values.append(float(parts[0]))
        counts.append(_parse_multiplicity(parts[1]))
        marked.append(int(parts[2]) if len(parts) == 3 else 0)
    return FrequencySequence.from_arrays(values, counts, marked, provenance=provenance, dust=dust,
                                     marked_dust=marked_dust)


def read_freq(path: PathLike) -> FrequencySequence:
    return parse_freq(_read(path))


# -- block spectra -----------------------------------------------------------


def format_spectrum(spec: BlockSpectrum, seed: Optional[int] = None) -> str:
    lines = [f"# n={spec.sample_size}"]
    if seed is not None:
        lines.append(f"# seed={int(seed)}")
    lines.append(f"# singleton_dust={spec.singleton_dust}")
    lines.append("r,count")
    lines += [f"{r},{c}" for r, c in sorted(spec.counts.items())]
    return "\n".join(lines) + "\n"


def write_spectrum(spec: BlockSpectrum, path: PathLike, seed: Optional[int] = None) -> Path:
    return _write(path, format_spectrum(spec, seed))


def parse_spectrum(text: str) -> tuple[BlockSpectrum, Optional[int]]:
    meta, counts = {}, {}
    header_seen = False
    for line in text.splitlines():
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, _, val = s[1:].partition("=")
            meta[key.strip()] = int(val)
            continue
        if not header_seen:
            if s != "r,count":
                raise SchemaError(f"expected header 'r,count', got {s!r}")
            header_seen = True
            continue
        r, c = s.split(",")
        counts[int(r)] = int(c)
    if "n" not in meta:
        raise SchemaError("spectrum file lacks the '# n=' header")
    spec = BlockSpectrum(meta["n"], counts, meta.get("singleton_dust", 0))
    if not spec.check():
        raise IntegrityError("spectrum sizes do not add up to n")
    return spec, meta.get("seed")


def read_spectrum(path: PathLike) -> tuple[BlockSpectrum, Optional[int]]:
    return parse_spectrum(_read(path))


# -- genealogies and mutations -----------------------------------------------


def format_events(history: MergerHistory) -> str:
    lines = [f"# n={history.n}", f"# time_scale={history.time_scale}"]
    if history.gamma is not None:
        lines.append(f"# gamma={history.gamma!r}")
    for e, (t, kids) in enumerate(zip(history.event_times.tolist(), history.event_children)):
        lines.append(f"{t!r}\t{','.join(str(k) for k in kids)}\t{history.n + e}")
    return "\n".join(lines) + "\n"


def write_events(history: MergerHistory, path: PathLike) -> Path:
    return _write(path, format_events(history))


def parse_events(text: str) -> MergerHistory:
    meta, times, children = {}, [], []
    for line in text.splitlines():
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, _, val = s[1:].partition("=")
            meta[key.strip()] = val.strip()
            continue
        t, kids, new = s.split("\t")
        if int(new) != int(meta["n"]) + len(times):
            raise IntegrityError(f"event ids out of sequence at {new}")
        times.append(float(t))
        children.append(tuple(int(k) for k in kids.split(",")))
    gamma = float(meta["gamma"]) if "gamma" in meta else None
    hist = MergerHistory(int(meta["n"]), np.array(times), tuple(children),
                         meta.get("time_scale", "theta"), gamma)
    hist.check()
    return hist


def read_events(path: PathLike) -> MergerHistory:
    return parse_events(_read(path))


def format_mutations(mutations: MutationSet) -> str:
    lines = [f"# theta={mutations.theta!r}"]
    lines += [f"{int(v)}\t{t!r}" for v, t in zip(mutations.lineage.tolist(), mutations.time.tolist())]
    return "\n".join(lines) + "\n"


def write_mutations(mutations: MutationSet, path: PathLike) -> Path:
    return _write(path, format_mutations(mutations))


def parse_mutations(text: str) -> MutationSet:
    theta = None
    lineage, time = [], []
    for line in text.splitlines():
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, _, val = s[1:].partition("=")
            if key.strip() == "theta":
                theta = float(val)
            continue
        v, t = s.split("\t")
        lineage.append(int(v))
        time.append(float(t))
    if theta is None:
        raise SchemaError("mutation file lacks the '# theta=' header")
    return MutationSet(np.array(lineage, dtype=np.int64), np.array(time, dtype=float), theta)


def read_mutations(path: PathLike) -> MutationSet:
    return parse_mutations(_read(path))
