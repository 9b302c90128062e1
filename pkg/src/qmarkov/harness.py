"""Experiment orchestration: ingest, synthesise, run a grid, emit reports.

A plan is a flat JSON object whose keys mirror :class:`ExperimentPlan`.
Command-line flags override plan values, and the master seed falls back to
``QMARKOV_SEED`` (then 0) when neither supplies one.

Every grid cell ``(variant, depth, seed index)`` draws its RNG seed from the
master seed and a CRC of the cell id, so cells are independent and a rerun
with the same inputs reproduces the bundle byte for byte. Wall-clock
measurements live in ``timings.json`` and never enter the bundle.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import time
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .amplification import OaaConfig
from .engine import DEFAULT_HORIZONS, ENCODERS, PROPAGATIONS, TRAJECTORY_CSV_FIELDS, QColorsConfig, q_colors_run
from .errors import BadParams, QMarkovError
from .io import load_colour_map, normalise_labels, read_counts, write_counts
from .markov import (
    CountMatrix,
    hub_metrics,
    pad_matrix,
    prune_states,
    smooth_counts,
    spectral_report,
    stationary_power_method,
    synth_hub_chain,
)
from .metrics import CSV_FIELDS, MetricsRow

log = logging.getLogger(__name__)

ALLOWED_DEPTHS = (1, 2, 4, 8, 16, 24, 32)
METRICS_HEADER = ("variant", "depth", "t", *CSV_FIELDS, "status", "error")
CONVERGENCE_HEADER = ("variant", "states", "iterations", "converged", "gap", "lambda_star", "reversible")
HUB_HEADER = ("variant", "state", "h_out", "h_in", "gamma")
LONG_HEADER = ("variant", "depth", "seed", *TRAJECTORY_CSV_FIELDS)


@dataclass(frozen=True)
class Variant:
    name: str
    removed: tuple[str, ...] = ()


def parse_variants(text: str | list) -> tuple[Variant, ...]:
    """``"full;minus-hub=hub_0,hub_1"``; a bare ``minus-<label>`` removes that label."""
    if isinstance(text, list):
        items = text
    else:
        items = [s for s in text.split(";") if s.strip()]
    out = []
    for item in items:
        if isinstance(item, dict):
            out.append(Variant(item["name"], tuple(item.get("removed", ()))))
            continue
        item = item.strip()
        if "=" in item:
            name, rest = item.split("=", 1)
            out.append(Variant(name.strip(), tuple(x.strip() for x in rest.split(",") if x.strip())))
        elif item == "full":
            out.append(Variant("full"))
        elif item.startswith("minus-"):
            out.append(Variant(item, (item[len("minus-"):],)))
        else:
            raise BadParams(f"cannot parse variant {item!r}")
    if not out:
        raise BadParams("at least one variant is required")
    return tuple(out)


def _int_list(x) -> tuple[int, ...]:
    if isinstance(x, str):
        x = [v for v in x.replace(";", ",").split(",") if v.strip()]
    return tuple(int(v) for v in x)


@dataclass(frozen=True)
class ExperimentPlan:
    counts: str | None = None
    colour_map: str | None = None
    synth_m: int = 8
    synth_hubs: int = 1
    synth_strength: float = 0.7
    synth_seed: int = 42
    variants: tuple[Variant, ...] | None = None
    depths: tuple[int, ...] = (4, 8, 16)
    horizons: tuple[int, ...] = DEFAULT_HORIZONS
    shots: int | None = 4096
    seeds: int = 1
    seed: int | None = None
    beta: float = 0.1
    pad: str | int = "auto"
    encoder: str = "lcu"
    propagation: str = "resample_empirical"
    oaa_mode: str = "fixed_point"
    epsilon_oa: float = 1e-2
    prep_threshold: float = 0.0
    lcu_max_terms: int = 32
    initial: tuple[float, ...] | None = None
    c: float = 1.0
    out: str = "out"

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        if self.variants is not None and not all(isinstance(v, Variant) for v in self.variants):
            set_("variants", parse_variants(list(self.variants) if not isinstance(self.variants, str) else self.variants))
        set_("depths", _int_list(self.depths))
        set_("horizons", _int_list(self.horizons))
        if self.initial is not None:
            set_("initial", tuple(float(v) for v in self.initial))
        if isinstance(self.pad, str) and self.pad != "auto":
            set_("pad", int(self.pad))
        if not self.depths or not self.horizons:
            raise BadParams("depths and horizons must be nonempty")
        if min(self.horizons) < 0 or min(self.depths) < 0:
            raise BadParams("depths and horizons must be nonnegative")
        if self.seeds < 1:
            raise BadParams("seeds must be at least 1")
        if self.shots is not None and self.shots < 1:
            raise BadParams("shots must be at least 1 (or null for exact marginals)")
        if self.oaa_mode not in ("fixed_point", "fixed_r"):
            raise BadParams(f"oaa_mode must be fixed_point or fixed_r, not {self.oaa_mode!r}")
        if self.encoder not in ENCODERS:
            raise BadParams(f"encoder must be one of {ENCODERS}")
        if self.propagation not in PROPAGATIONS:
            raise BadParams(f"propagation must be one of {PROPAGATIONS}")
        off = [d for d in self.depths if d not in ALLOWED_DEPTHS]
        if off:
            log.warning("depths %s fall outside the default grid %s", off, ALLOWED_DEPTHS)

    @classmethod
    def from_dict(cls, body: dict) -> "ExperimentPlan":
        known = {f.name for f in fields(cls)}
        unknown = set(body) - known
        if unknown:
            raise BadParams(f"unknown plan keys: {', '.join(sorted(unknown))}")
        return cls(**body)

    @classmethod
    def from_json(cls, path) -> "ExperimentPlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def with_overrides(self, **kw) -> "ExperimentPlan":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def as_dict(self) -> dict:
        d = asdict(self)
        d["variants"] = None if self.variants is None else [asdict(v) for v in self.variants]
        for k in ("depths", "horizons", "initial"):
            if d[k] is not None:
                d[k] = list(d[k])
        d.pop("out")
        return d

    def config_hash(self) -> str:
        text = json.dumps(self.as_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def resolve_seed(flag: int | None, plan_seed: int | None = None, default: int = 0) -> int:
    """Flag, then plan value, then ``QMARKOV_SEED``, then ``default``."""
    for value in (flag, plan_seed):
        if value is not None:
            return int(value)
    env = os.environ.get("QMARKOV_SEED")
    if env not in (None, ""):
        return int(env)
    return default


def cell_seed(master: int, cell_id: str) -> int:
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(cell_id.encode())])
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------- commands


@dataclass(frozen=True)
class IngestResult:
    counts: CountMatrix
    unmapped: tuple[str, ...] = ()
    merged: dict = field(default_factory=dict)


def cmd_ingest(counts_path, colour_map_path=None) -> IngestResult:
    """Read a counts file; with a colour map (``"bundled"`` for the shipped one) normalise labels."""
    c = read_counts(counts_path)
    if colour_map_path is None:
        return IngestResult(c)
    cmap = load_colour_map(None if colour_map_path == "bundled" else colour_map_path)
    norm = normalise_labels(c, cmap)
    if norm.unmapped:
        log.warning("unmapped labels: %s", ", ".join(norm.unmapped))
    return IngestResult(norm.counts, norm.unmapped, norm.merged)


def cmd_synth(m: int = 8, hub_count: int = 1, hub_strength: float = 0.7, seed: int = 42, out=None) -> CountMatrix:
    c = synth_hub_chain(m, hub_count, hub_strength, seed)
    if out is not None:
        write_counts(c, out)
    return c


def _f(x) -> str:
    return repr(float(x))


@dataclass(eq=False)
class ReportBundle:
    meta: dict
    metrics: list[dict]
    convergence: list[dict]
    hubs: list[dict]
    trajectories: list[dict]
    timings: dict = field(default_factory=dict)

    def to_json(self) -> str:
        body = {k: getattr(self, k) for k in ("meta", "metrics", "convergence", "hubs", "trajectories")}
        return json.dumps(body, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ReportBundle":
        body = json.loads(text)
        return cls(body["meta"], body["metrics"], body["convergence"], body["hubs"], body["trajectories"])


def _default_variants(c: CountMatrix, synthetic: bool) -> tuple[Variant, ...]:
    if synthetic:
        hubs = tuple(lab for lab in c.labels if lab.startswith("hub_"))
        if hubs:
            return (Variant("full"), Variant("minus-hub", hubs))
    return (Variant("full"),)


def _load_counts(plan: ExperimentPlan) -> tuple[CountMatrix, bool]:
    if plan.counts:
        return cmd_ingest(plan.counts, plan.colour_map).counts, False
    return cmd_synth(plan.synth_m, plan.synth_hubs, plan.synth_strength, plan.synth_seed), True


def _failed_rows(variant: str, depths, horizons, err: Exception) -> list[dict]:
    msg = f"{type(err).__name__}: {err}"
    return [
        {"variant": variant, "depth": d, "t": t, **{k: None for k in CSV_FIELDS}, "status": "failed", "error": msg}
        for d in depths for t in horizons
    ]


def cmd_run(plan: ExperimentPlan, seed: int | None = None) -> ReportBundle:
    master = resolve_seed(seed, plan.seed)
    counts, synthetic = _load_counts(plan)
    variants = plan.variants or _default_variants(counts, synthetic)
    T = max(plan.horizons)
    meta = {
        "master_seed": master,
        "config_hash": plan.config_hash(),
        "plan": plan.as_dict(),
        "version": __version__,
        "numpy": np.__version__,
        "depth_semantics": "generalized amplitude-amplification iterates per Markov step",
        "states": list(counts.labels),
    }
    metrics: list[dict] = []
    convergence: list[dict] = []
    hubs: list[dict] = []
    trajectories: list[dict] = []
    timings: dict = {}

    for v in variants:
        try:
            cv = prune_states(counts, v.removed) if v.removed else counts
            P = smooth_counts(cv, plan.beta)
            t0 = time.perf_counter()
            power = stationary_power_method(P)
            timings[f"{v.name}/power_method_s"] = time.perf_counter() - t0
            try:
                rep = spectral_report(P, power, with_fundamental=False)
                gap, lam, rev = rep.gap, rep.lambda_star, rep.reversible
            except QMarkovError:
                gap = lam = rev = None
            convergence.append({
                "variant": v.name, "states": cv.size, "iterations": power.iterations,
                "converged": power.converged, "gap": gap, "lambda_star": lam, "reversible": rev,
            })
            hr = hub_metrics(cv, P)
            for lab, rec in hr.records().items():
                hubs.append({"variant": v.name, "state": lab, **rec})
            Pp = pad_matrix(P, plan.pad)
            p0 = None if plan.initial is None else np.asarray(plan.initial)
        except QMarkovError as exc:
            metrics.extend(_failed_rows(v.name, plan.depths, plan.horizons, exc))
            continue

        for depth in plan.depths:
            oaa = (
                OaaConfig(mode="fixed_point", epsilon_oa=plan.epsilon_oa, depth_cap=depth)
                if plan.oaa_mode == "fixed_point"
                else OaaConfig(mode="fixed_r", r=depth)
            )
            per_t: dict[int, list[MetricsRow]] = {t: [] for t in plan.horizons}
            t0 = time.perf_counter()
            try:
                for k in range(plan.seeds):
                    cfg = QColorsConfig(
                        horizons=max(T, 1), shots=plan.shots, oaa=oaa, prep_threshold=plan.prep_threshold,
                        propagation=plan.propagation, encoder=plan.encoder,
                        seed=cell_seed(master, f"{v.name}|{depth}|{k}"), lcu_max_terms=plan.lcu_max_terms,
                    )
                    rec = q_colors_run(Pp, p0, cfg)
                    for t in plan.horizons:
                        per_t[t].append(MetricsRow.compare(rec.p_classical[t], rec.p_hat[t]))
                    trajectories.append({
                        "variant": v.name, "depth": depth, "seed": k, "encoder": rec.encoder,
                        "budget": asdict(rec.budget), "notes": list(rec.notes),
                        "p_hat": rec.p_hat.tolist(), "p_exact_ae": rec.p_exact_ae.tolist(),
                        "p_classical": rec.p_classical.tolist(),
                        "success_prob": [None if np.isnan(x) else float(x) for x in rec.success_prob],
                    })
            except QMarkovError as exc:
                metrics.extend(_failed_rows(v.name, [depth], plan.horizons, exc))
                continue
            finally:
                timings[f"{v.name}/depth{depth}/run_s"] = time.perf_counter() - t0
            for t in plan.horizons:
                row = MetricsRow.mean(per_t[t])
                metrics.append({
                    "variant": v.name, "depth": depth, "t": t,
                    **{k: getattr(row, k) for k in CSV_FIELDS}, "status": "ok", "error": row.support_note,
                })
    return ReportBundle(meta, metrics, convergence, hubs, trajectories, timings)


def _csv(header, rows, fmt=lambda k, v: v) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if r.get(k) is None else fmt(k, r[k]) for k in header])
    return buf.getvalue()


def _num(k, v):
    return _f(v) if isinstance(v, float) else v


def _long_rows(bundle: ReportBundle, labels: list[str]):
    for tr in bundle.trajectories:
        for t, (ph, pa, pc) in enumerate(zip(tr["p_hat"], tr["p_exact_ae"], tr["p_classical"])):
            sp = tr["success_prob"][t]
            for j in range(len(ph)):
                yield {
                    "variant": tr["variant"], "depth": tr["depth"], "seed": tr["seed"], "t": t,
                    "state": labels[tr["variant"]][j], "p_hat": ph[j], "p_exact_ae": pa[j],
                    "p_classical": pc[j], "success_prob": sp,
                }


def cmd_report(bundle: ReportBundle, out_dir, fmt: str = "csv") -> list[Path]:
    """Write the bundle as CSV tables or a single JSON document."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(name: str, text: str):
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    if fmt == "json":
        emit("report.json", bundle.to_json() + "\n")
    elif fmt == "csv":
        emit("metrics.csv", _csv(METRICS_HEADER, bundle.metrics, _num))
        emit("convergence.csv", _csv(CONVERGENCE_HEADER, bundle.convergence, _num))
        emit("hubs.csv", _csv(HUB_HEADER, bundle.hubs, _num))
        labels: dict[str, list[str]] = {}
        for h in bundle.hubs:
            labels.setdefault(h["variant"], []).append(h["state"])
        emit("trajectories.csv", _csv(LONG_HEADER, _long_rows(bundle, labels), _num))
        emit("meta.json", json.dumps(bundle.meta, sort_keys=True, indent=1) + "\n")
    else:
        raise BadParams(f"unknown report format {fmt!r}")
    return written


def write_bundle(bundle: ReportBundle, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bundle.json").write_text(bundle.to_json() + "\n", encoding="utf-8")
    (out / "timings.json").write_text(json.dumps(bundle.timings, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return [out / "bundle.json", out / "timings.json"]
