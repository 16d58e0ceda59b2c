"""Extraction driver. The model runtime is supplied through the Backend protocol."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from .formats import transcript_record, write_dataset, write_transcripts

PROMPT_DIR = Path(__file__).resolve().parents[2] / "assets" / "prompts"
_TEMPLATE_FILES = {"PaV": "pav.txt", "PaS": "pas.txt", "PaL": "pal.txt"}


@dataclass
class Generation:
    text: str
    token_logprobs: list[dict] | None = None
    truncated: bool = False


class Backend(Protocol):
    model_name: str
    num_layers: int
    hidden_dim: int

    def generate(self, prompt: str, temperature: float, max_tokens: int, seed: int) -> Generation: ...

    def last_token_states(self, prompt: str, generation: str, layers: Sequence[int]) -> Mapping[int, np.ndarray]:
        """Residual-stream vector at the final generated token for each layer."""
        ...


@dataclass
class ExtractionJob:
    model: str
    formulation: str
    layers: list[int] | str
    output_dir: str
    inputs: str
    temperature: float = 0.7
    max_tokens: int = 1024
    num_samples: int = 10
    confidence_range: str = "0_100"
    seed: int = 0
    dataset_name: str = "extraction"
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExtractionJob":
        return cls(**json.loads(Path(path).read_text()))

    def resolved_layers(self, num_layers: int) -> list[int]:
        layers = list(range(num_layers)) if self.layers == "all" else [int(k) for k in self.layers]
        if not layers:
            raise ValueError("no layers requested")
        bad = [k for k in layers if k < 0 or k >= num_layers]
        if bad:
            raise ValueError(f"layer {bad[0]} out of range for a {num_layers}-layer model")
        return sorted(set(layers))

    def validate(self, num_layers: int) -> list[int]:
        if self.formulation not in _TEMPLATE_FILES:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.confidence_range not in ("0_1", "0_100"):
            raise ValueError("confidence_range must be 0_1 or 0_100")
        return self.resolved_layers(num_layers)


def build_prompt(job: ExtractionJob, record: Mapping) -> str:
    template = (PROMPT_DIR / _TEMPLATE_FILES[job.formulation]).read_text()
    confidence = (PROMPT_DIR / f"confidence_{job.confidence_range}.txt").read_text().strip()
    return (
        template.replace("{question}", record["question"])
        .replace("{response_a}", record["response_a"])
        .replace("{response_b}", record["response_b"])
        .replace("{confidence_instruction}", confidence)
    )


_LIKERT = {"[[A>>B]]": "A", "[[A>B]]": "A", "[[A=B]]": "tie", "[[B>A]]": "B", "[[B>>A]]": "B"}


def _last_tag(text: str, tag: str) -> str | None:
    found = re.findall(rf"<{tag}>(.*?)</{tag}>", text, flags=re.S)
    return found[-1] if found else None


def parse_winner(text: str, formulation: str) -> str | None:
    """Winner label used for correctness labels; mirrors the toolkit's verdict rules."""
    if formulation == "PaV":
        answer = _last_tag(text, "answer")
        for scope in ([answer] if answer is not None else []) + [text]:
            positions = {w: scope.rfind(f"[[{w}]]") for w in ("A", "B")}
            best = max(positions, key=positions.get)
            if positions[best] >= 0:
                return best
        return None
    if formulation == "PaS":
        a, b = _last_tag(text, "score_A"), _last_tag(text, "score_B")
        try:
            sa, sb = float(a.strip()), float(b.strip())
        except (AttributeError, ValueError):
            return None
        if not (0 <= sa <= 10 and 0 <= sb <= 10):
            return None
        return "A" if sa > sb else "B" if sb > sa else "tie"
    positions = {label: text.rfind(label) for label in _LIKERT}
    best = max(positions, key=positions.get)
    return _LIKERT[best] if positions[best] >= 0 else None


def run_extraction(job: ExtractionJob, backend: Backend, records: Sequence[Mapping] | None = None) -> dict:
    """Greedy reference pass (sample_index 0) with activations, then num_samples sampled passes."""
    layers = job.validate(backend.num_layers)
    if records is None:
        records = [json.loads(line) for line in Path(job.inputs).read_text().splitlines() if line.strip()]
    out = Path(job.output_dir)
    examples, transcripts, truncated = [], [], []
    states: dict[int, list[np.ndarray]] = {k: [] for k in layers}
    for i, rec in enumerate(records):
        example_id = str(rec.get("id", f"ex{i}"))
        prompt = build_prompt(job, rec)
        greedy = backend.generate(prompt, 0.0, job.max_tokens, job.seed)
        vectors = backend.last_token_states(prompt, greedy.text, layers)
        for k in layers:
            states[k].append(np.asarray(vectors[k], dtype=np.float32))
        if greedy.truncated:
            truncated.append(example_id)
        transcripts.append(transcript_record(example_id, 0, 0.0, job.formulation, greedy.text, greedy.token_logprobs))
        for s in range(1, job.num_samples + 1):
            g = backend.generate(prompt, job.temperature, job.max_tokens, job.seed + s)
            transcripts.append(transcript_record(example_id, s, job.temperature, job.formulation, g.text, g.token_logprobs))
        winner = parse_winner(greedy.text, job.formulation)
        truth = rec.get("ground_truth")
        examples.append({
            "id": example_id,
            "subset": rec.get("subset", ""),
            "label": None if winner is None or truth is None else int(winner == truth),
            "split": "unassigned",
            **({"ground_truth": truth} if truth is not None else {}),
        })
    write_dataset(out, dataset_name=job.dataset_name, model_name=job.model, examples=examples,
                  layers={k: np.stack(v) for k, v in states.items()})
    write_transcripts(out / "transcripts.jsonl", transcripts)
    return {"examples": len(examples), "transcripts": len(transcripts), "layers": layers, "truncated": truncated}
