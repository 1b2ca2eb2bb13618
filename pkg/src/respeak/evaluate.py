"""Recognizers, word-error-rate computation, and the three-condition report.

Two recognizers satisfy the same transcribe(Waveform) -> tokens interface:
an offline nearest-centroid template matcher (mean dB-image per vocabulary
word, L2 distance) used for network-free evaluation, and a thin HTTP client
for any external ASR service that accepts posted WAV bytes and answers
{"transcript": "..."}.

The report mirrors a three-condition comparison: clean target-domain speech,
original source-domain speech, and source speech converted through the full
pipeline.
"""

from __future__ import annotations

import json
import time
import urllib.error
import urllib.request
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .audio import Waveform, read_wav, wav_bytes
from .config import Config
from .corpus import Manifest, Utterance
from .errors import ContractError, EvaluationError, TransportError
from .models import Generator
from .pipeline import convert_waveform, image_from_waveform


# ---------------------------------------------------------------------------
# word error rate
# ---------------------------------------------------------------------------

@dataclass
class WerCounts:
    substitutions: int
    deletions: int
    insertions: int
    ref_tokens: int

    @property
    def wer_percent(self) -> float:
        return 100.0 * (self.substitutions + self.deletions + self.insertions) / self.ref_tokens


def _align_pair(ref: Sequence[str], hyp: Sequence[str]) -> Tuple[int, int, int]:
    """Minimum-edit alignment with unit costs; ties prefer substitutions
    over insert+delete pairs (diagonal-first backtrace)."""
    nr, nh = len(ref), len(hyp)
    cost = np.zeros((nr + 1, nh + 1), dtype=np.int32)
    cost[:, 0] = np.arange(nr + 1)
    cost[0, :] = np.arange(nh + 1)
    for i in range(1, nr + 1):
        for j in range(1, nh + 1):
            diag = cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            cost[i, j] = min(diag, cost[i - 1, j] + 1, cost[i, j - 1] + 1)
    s = d = ins = 0
    i, j = nr, nh
    while i > 0 or j > 0:
        if i > 0 and j > 0 and cost[i, j] == cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] != hyp[j - 1]:
                s += 1
            i, j = i - 1, j - 1
        elif i > 0 and cost[i, j] == cost[i - 1, j] + 1:
            d += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return s, d, ins


def wer(refs: Sequence[Sequence[str]], hyps: Sequence[Sequence[str]]) -> WerCounts:
    """Summed edit counts over a set of (reference, hypothesis) pairs."""
    if len(refs) != len(hyps):
        raise ContractError(f"got {len(refs)} references but {len(hyps)} hypotheses")
    total_s = total_d = total_i = total_n = 0
    for ref, hyp in zip(refs, hyps):
        if len(ref) == 0:
            raise ContractError("empty reference transcript")
        s, d, ins = _align_pair(list(ref), list(hyp))
        total_s += s
        total_d += d
        total_i += ins
        total_n += len(ref)
    return WerCounts(total_s, total_d, total_i, total_n)


# ---------------------------------------------------------------------------
# recognizers
# ---------------------------------------------------------------------------

class TemplateRecognizer:
    """Nearest-centroid matcher over the fixed-size dB images.

    Centroids are per-token means of prepared images (normally fit on clean
    target-domain training utterances). transcribe() is a pure function of
    the audio: the image seed is fixed, so identical audio gives identical
    tokens.
    """

    def __init__(self, centroids: Dict[str, np.ndarray], cfg: Optional[Config] = None):
        if not centroids:
            raise ContractError("template recognizer needs at least one centroid")
        self.cfg = cfg or Config()
        self.tokens = sorted(centroids)
        self._stack = np.stack([centroids[t].astype(np.float32) for t in self.tokens])

    @classmethod
    def fit(cls, examples: Sequence[Tuple[Waveform, str]], cfg: Optional[Config] = None) -> "TemplateRecognizer":
        cfg = cfg or Config()
        sums: Dict[str, np.ndarray] = {}
        counts: Dict[str, int] = {}
        for w, token in examples:
            img = image_from_waveform(w, cfg, noise_seed=0)
            sums[token] = sums.get(token, 0.0) + img.pixels.astype(np.float64)
            counts[token] = counts.get(token, 0) + 1
        centroids = {t: (sums[t] / counts[t]).astype(np.float32) for t in sums}
        return cls(centroids, cfg)

    @classmethod
    def fit_manifest(cls, manifest: Manifest, cfg: Optional[Config] = None, domain: str = "B") -> "TemplateRecognizer":
        examples = []
        for u in manifest.by_domain(domain):
            if not u.transcript:
                continue
            examples.append((read_wav(u.path), u.transcript[0]))
        return cls.fit(examples, cfg)

    def transcribe(self, w: Waveform) -> List[str]:
        img = image_from_waveform(w, self.cfg, noise_seed=0)
        dists = np.linalg.norm(
            (self._stack - img.pixels[None]).reshape(len(self.tokens), -1), axis=1
        )
        return [self.tokens[int(np.argmin(dists))]]


class HttpAsrClient:
    """POSTs WAV bytes to an ASR endpoint and whitespace-tokenizes the JSON
    transcript. Failures surface as TransportError, never as empty output."""

    def __init__(
        self,
        endpoint: str,
        auth_token: Optional[str] = None,
        timeout: float = 10.0,
        retries: int = 2,
        backoff: float = 0.5,
    ):
        self.endpoint = endpoint
        self.auth_token = auth_token
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def transcribe(self, w: Waveform) -> List[str]:
        return http_transcribe(self, w)


def http_transcribe(client: HttpAsrClient, w: Waveform) -> List[str]:
    body = wav_bytes(w)
    headers = {"Content-Type": "audio/wav"}
    if client.auth_token:
        headers["Authorization"] = f"Bearer {client.auth_token}"
    last_error = None
    for attempt in range(client.retries + 1):
        if attempt:
            time.sleep(client.backoff * attempt)
        request = urllib.request.Request(client.endpoint, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(request, timeout=client.timeout) as response:
                payload = response.read()
        except urllib.error.HTTPError as exc:
            last_error = f"HTTP {exc.code}"
            continue
        except (urllib.error.URLError, OSError) as exc:
            last_error = str(exc)
            continue
        try:
            obj = json.loads(payload.decode("utf-8"))
            transcript = obj["transcript"]
        except (ValueError, KeyError, UnicodeDecodeError) as exc:
            raise TransportError(f"malformed recognizer response: {exc}") from exc
        return str(transcript).split()
    raise TransportError(
        f"recognizer at {client.endpoint} failed after {client.retries + 1} attempts: {last_error}"
    )


# ---------------------------------------------------------------------------
# three-condition evaluation
# ---------------------------------------------------------------------------

CONDITION_CONTROL = "control"
CONDITION_CONVERTED = "converted"
CONDITION_ORIGINAL = "original"


@dataclass
class WerRow:
    condition: str
    n_utterances: int
    substitutions: int
    deletions: int
    insertions: int
    ref_tokens: int
    wer_percent: float


@dataclass
class WerReport:
    rows: List[WerRow]

    def row(self, condition: str) -> WerRow:
        for r in self.rows:
            if r.condition == condition:
                return r
        raise KeyError(condition)

    def to_json(self) -> str:
        return json.dumps({"rows": [asdict(r) for r in self.rows]}, indent=2) + "\n"


def report_from_counts(counts: Dict[str, Tuple[int, WerCounts]]) -> WerReport:
    rows = []
    for condition in (CONDITION_CONTROL, CONDITION_CONVERTED, CONDITION_ORIGINAL):
        n, c = counts[condition]
        rows.append(WerRow(
            condition=condition,
            n_utterances=n,
            substitutions=c.substitutions,
            deletions=c.deletions,
            insertions=c.insertions,
            ref_tokens=c.ref_tokens,
            wer_percent=round(c.wer_percent, 1),
        ))
    return WerReport(rows)


def render_table(report: WerReport) -> str:
    """Aligned plain-text table, conditions across three columns."""
    cols = [report.row(CONDITION_CONTROL), report.row(CONDITION_CONVERTED), report.row(CONDITION_ORIGINAL)]
    width = 12
    lines = [
        "condition " + "".join(f"{c.condition:>{width}}" for c in cols),
        "utterances" + "".join(f"{c.n_utterances:>{width}}" for c in cols),
        "wer_pct   " + "".join(f"{c.wer_percent:>{width}.1f}" for c in cols),
    ]
    return "\n".join(lines) + "\n"


def evaluate(test: Manifest, generator: Generator, recognizer, cfg: Optional[Config] = None) -> WerReport:
    """Score three conditions on a held-out manifest: clean domain-B audio,
    original domain-A audio, and domain-A audio converted through the full
    image -> generator -> Griffin-Lim chain."""
    cfg = cfg or Config()
    b_utts = test.by_domain("B")
    a_utts = test.by_domain("A")
    if not a_utts or not b_utts:
        raise EvaluationError("evaluation manifest needs utterances in both domains")

    def transcribe_all(utts: List[Utterance], converted: bool) -> Tuple[List, List]:
        refs, hyps = [], []
        for u in utts:
            w = read_wav(u.path)
            if converted:
                w = convert_waveform(w, generator, cfg, tag=u.id)
            try:
                hyp = recognizer.transcribe(w)
            except TransportError as exc:
                raise EvaluationError(f"recognizer failed on utterance {u.id}: {exc}") from exc
            refs.append(u.transcript)
            hyps.append(hyp)
        return refs, hyps

    counts = {}
    refs, hyps = transcribe_all(b_utts, converted=False)
    counts[CONDITION_CONTROL] = (len(b_utts), wer(refs, hyps))
    refs, hyps = transcribe_all(a_utts, converted=True)
    counts[CONDITION_CONVERTED] = (len(a_utts), wer(refs, hyps))
    refs, hyps = transcribe_all(a_utts, converted=False)
    counts[CONDITION_ORIGINAL] = (len(a_utts), wer(refs, hyps))
    return report_from_counts(counts)
