"""Scenario files: parsing, validation and query execution.

A scenario is a JSON document::

    {
      "description": "...",
      "system": {"d_s": 2},
      "environment": {"d_e": 1},                       # optional
      "initial_state": <matrix> | {"ket": [[re, im], ...]},
      "evolution": {"segments": [{"t_start": 0, "t_end": 5,
                                  "hamiltonian": <matrix>}]},   # optional, frozen if absent
      "instruments": {"Z": {"observable": <matrix>}},           # named, optional
      "schedule": [{"time": 1.0, "instrument": "Z"}, ...],
      "queries": [{"type": "seqprob", "outcomes": ["-1", "1"]}, ...]
    }

Instruments are given as ``{"observable": M}`` (projective, labelled by
eigenvalue), ``{"projectors": {"label": P, ...}}`` or in Kraus form
``{"outcomes": {"label": {"kraus": [K, ...]}}}``.  Hamiltonians, unitaries
and initial states may be given on the system alone, in which case they are
extended by the identity (respectively the environment's
``initial_state``) to ``system ⊗ environment``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import bridge, instruments as instr_mod, process_tensor as pt, qsp
from .config import MAX_DIM, MAX_TREE_LEAVES, PROBABILITY_FLOOR, resolve_tol
from .instruments import QuantumInstrument, projective_instrument, validate
from .linalg import DimensionError, is_hermitian, min_eigenvalue
from .sampling import ginibre
from .serialization import LiteralError, complex_to_pair, fmt_float, matrix_from_literal, matrix_to_literal

QUERY_TYPES = ("kernel", "seqprob", "marginal-gap", "qnd", "pt-eval", "pt-choi", "pt-audit", "bridge-verify")


class ScenarioParseError(ValueError):
    """The scenario file is not well-formed JSON of the expected shape."""


class ScenarioValidationError(ValueError):
    """The scenario parses but is inconsistent."""


@dataclass(frozen=True)
class ScheduleStep:
    time: float
    instrument: QuantumInstrument
    ref: str | None = None


@dataclass(frozen=True)
class Scenario:
    description: str
    d_s: int
    d_e: int
    rho_se: np.ndarray
    evolution: qsp.EvolutionFamily
    schedule: tuple[ScheduleStep, ...]
    queries: tuple[dict, ...]
    instruments: dict[str, QuantumInstrument] = field(default_factory=dict)
    seed: int | None = None

    @property
    def times(self) -> tuple[float, ...]:
        return tuple(s.time for s in self.schedule)

    def dilation(self) -> bridge.Dilation:
        return bridge.Dilation(self.rho_se, self.evolution, self.d_s)

    def process_tensor(self, steps: list[int] | None = None) -> pt.ProcessTensorSpec:
        times = self.times if steps is None else tuple(self.times[k] for k in steps)
        return pt.spec_from_evolution(self.rho_se, self.evolution, times, self.d_s)

    def to_json(self) -> dict:
        segments = []
        for s in self.evolution.segments:
            seg: dict[str, Any] = {"t_start": s.t_start, "t_end": s.t_end if math.isfinite(s.t_end) else "inf"}
            if s.hamiltonian is not None:
                seg["hamiltonian"] = matrix_to_literal(s.hamiltonian)
            else:
                seg["unitary"] = matrix_to_literal(s.unitary)
            segments.append(seg)
        schedule = []
        for step in self.schedule:
            ref = step.ref if step.ref is not None else step.instrument.to_json()
            schedule.append({"time": step.time, "instrument": ref})
        out = {
            "description": self.description,
            "system": {"d_s": self.d_s},
            "environment": {"d_e": self.d_e},
            "initial_state": matrix_to_literal(self.rho_se),
            "evolution": {"segments": segments},
            "instruments": {k: v.to_json() for k, v in self.instruments.items()},
            "schedule": schedule,
            "queries": [dict(q) for q in self.queries],
        }
        if self.seed is not None:
            out["seed"] = self.seed
        return out


# -- parsing -----------------------------------------------------------------

def _require(data: Mapping, key: str, where: str):
    if key not in data:
        raise ScenarioParseError(f"{where}: missing required field {key!r}")
    return data[key]


def _matrix(lit, where: str) -> np.ndarray:
    try:
        return matrix_from_literal(lit)
    except LiteralError as exc:
        raise ScenarioParseError(f"{where}: {exc}") from None


def _lift(m: np.ndarray, d_s: int, d_e: int, where: str) -> np.ndarray:
    if m.shape[0] == d_s * d_e:
        return m
    if m.shape[0] == d_s:
        return np.kron(m, np.eye(d_e))
    raise ScenarioValidationError(f"{where}: dimension {m.shape[0]} fits neither the system ({d_s}) nor system ⊗ environment ({d_s * d_e})")


def _state(raw, where: str) -> np.ndarray:
    if isinstance(raw, Mapping) and "ket" in raw:
        ket = raw["ket"]
        if not isinstance(ket, list) or not ket:
            raise ScenarioParseError(f"{where}: ket must be a non-empty list")
        try:
            vec = np.array([matrix_from_literal([[v]])[0, 0] for v in ket])
        except LiteralError as exc:
            raise ScenarioParseError(f"{where}: {exc}") from None
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ScenarioValidationError(f"{where}: zero ket")
        vec = vec / norm
        return np.outer(vec, vec.conj())
    return _matrix(raw, where)


def parse_instrument(raw, d_s: int, where: str) -> QuantumInstrument:
    if not isinstance(raw, Mapping):
        raise ScenarioParseError(f"{where}: instrument must be an object")
    if "observable" in raw:
        obs = _matrix(raw["observable"], where)
        if not is_hermitian(obs, 1e-9):
            raise ScenarioValidationError(f"{where}: observable is not Hermitian")
        inst = projective_instrument(obs)
    elif "projectors" in raw:
        projs = raw["projectors"]
        if not isinstance(projs, Mapping) or not projs:
            raise ScenarioParseError(f"{where}: projectors must be a non-empty object")
        inst = instr_mod.instrument_from_projectors(
            [_matrix(p, f"{where}.projectors.{lab}") for lab, p in projs.items()], list(projs)
        )
    elif "outcomes" in raw:
        try:
            inst = QuantumInstrument.from_json(raw)
        except LiteralError as exc:
            raise ScenarioParseError(f"{where}: {exc}") from None
        except ValueError as exc:
            raise ScenarioValidationError(f"{where}: {exc}") from None
    else:
        raise ScenarioParseError(f'{where}: instrument needs "observable", "projectors" or "outcomes"')
    if inst.dim != d_s:
        raise ScenarioValidationError(f"{where}: instrument acts on dimension {inst.dim}, system has {d_s}")
    report = validate(inst, 1e-9)
    if not report.passed:
        raise ScenarioValidationError(f"{where}: invalid instrument: {'; '.join(report.messages)}")
    return inst


def _time(value, where: str) -> float:
    if value == "inf":
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioParseError(f"{where}: expected a number, got {value!r}")
    return float(value)


def parse_scenario(data: Mapping) -> Scenario:
    if not isinstance(data, Mapping):
        raise ScenarioParseError("scenario must be a JSON object")
    system = _require(data, "system", "scenario")
    d_s = system.get("d_s") if isinstance(system, Mapping) else None
    if not isinstance(d_s, int) or d_s < 1:
        raise ScenarioParseError("system.d_s must be a positive integer")
    env = data.get("environment") or {}
    d_e = env.get("d_e", 1)
    if not isinstance(d_e, int) or d_e < 1:
        raise ScenarioParseError("environment.d_e must be a positive integer")
    if d_s * d_e > MAX_DIM:
        raise ScenarioValidationError(f"system ⊗ environment dimension {d_s * d_e} exceeds {MAX_DIM}")

    rho = _state(_require(data, "initial_state", "scenario"), "initial_state")
    if rho.shape[0] == d_s and d_e > 1:
        if "initial_state" not in env:
            raise ScenarioValidationError("initial_state is on the system only; environment.initial_state is required")
        rho = np.kron(rho, _state(env["initial_state"], "environment.initial_state"))
    if rho.shape[0] != d_s * d_e:
        raise ScenarioValidationError(f"initial_state has dimension {rho.shape[0]}, expected {d_s * d_e}")
    try:
        rho = qsp.check_state(rho, tol=1e-9)
    except ValueError as exc:
        raise ScenarioValidationError(f"initial_state: {exc}") from None

    evo = data.get("evolution")
    try:
        if evo is None:
            fam = qsp.EvolutionFamily.frozen(d_s * d_e)
        else:
            segs_raw = _require(evo, "segments", "evolution")
            if not isinstance(segs_raw, list) or not segs_raw:
                raise ScenarioParseError("evolution.segments must be a non-empty list")
            segs = []
            for k, s in enumerate(segs_raw):
                where = f"evolution.segments[{k}]"
                t0 = _time(_require(s, "t_start", where), where)
                t1 = _time(_require(s, "t_end", where), where)
                if "hamiltonian" in s:
                    h = _lift(_matrix(s["hamiltonian"], where), d_s, d_e, where)
                    segs.append(qsp.Segment(t0, t1, hamiltonian=h))
                elif "unitary" in s:
                    u = _lift(_matrix(s["unitary"], where), d_s, d_e, where)
                    segs.append(qsp.Segment(t0, t1, unitary=u))
                else:
                    raise ScenarioParseError(f'{where}: needs "hamiltonian" or "unitary"')
            fam = qsp.EvolutionFamily(segs)
    except (ScenarioParseError, ScenarioValidationError):
        raise
    except ValueError as exc:
        raise ScenarioValidationError(f"evolution: {exc}") from None

    named = {}
    for name, raw in (data.get("instruments") or {}).items():
        named[name] = parse_instrument(raw, d_s, f"instruments.{name}")

    schedule = []
    for k, step in enumerate(data.get("schedule") or []):
        where = f"schedule[{k}]"
        t = _time(_require(step, "time", where), where)
        ref = _require(step, "instrument", where)
        if isinstance(ref, str):
            if ref not in named:
                raise ScenarioValidationError(f"{where}: unknown instrument {ref!r}")
            schedule.append(ScheduleStep(t, named[ref], ref))
        else:
            schedule.append(ScheduleStep(t, parse_instrument(ref, d_s, where)))
    try:
        qsp.check_times([s.time for s in schedule])
    except qsp.ScheduleError as exc:
        raise ScenarioValidationError(f"schedule: {exc}") from None
    if schedule and schedule[-1].time > fam.t_max:
        raise ScenarioValidationError(f"schedule time {schedule[-1].time} is beyond the evolution's end {fam.t_max}")

    queries = data.get("queries") or []
    if not isinstance(queries, list):
        raise ScenarioParseError("queries must be a list")
    for k, q in enumerate(queries):
        if not isinstance(q, Mapping) or "type" not in q:
            raise ScenarioParseError(f"queries[{k}]: needs a type")
        if q["type"] not in QUERY_TYPES:
            raise ScenarioValidationError(f"queries[{k}]: unknown type {q['type']!r}; expected one of {QUERY_TYPES}")

    seed = data.get("seed")
    return Scenario(
        str(data.get("description", "")), d_s, d_e, rho, fam, tuple(schedule),
        tuple(dict(q) for q in queries), named, seed,
    )


def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}: invalid JSON: {exc}") from None
    return parse_scenario(data)


# -- query execution ----------------------------------------------------------

class QueryError(ScenarioValidationError):
    """A query refers to something the scenario does not provide."""


def _steps(sc: Scenario, q: Mapping) -> list[int]:
    steps = q.get("steps")
    if steps is None:
        return list(range(len(sc.schedule)))
    if not isinstance(steps, list) or any(not isinstance(k, int) or not 0 <= k < len(sc.schedule) for k in steps):
        raise QueryError(f"steps {steps!r} must index the schedule (0..{len(sc.schedule) - 1})")
    if sorted(set(steps)) != steps:
        raise QueryError("steps must be strictly increasing")
    return steps


def _projective(sc: Scenario, steps: list[int]):
    families = []
    for k in steps:
        projs = sc.schedule[k].instrument.projectors()
        if projs is None:
            raise QueryError(f"schedule step {k} is not a projective instrument")
        families.append([np.kron(p, np.eye(sc.d_e)) for p in projs])
    return families


def _outcome_indices(sc: Scenario, steps: list[int], outcomes, allow_hole=False) -> list[int | None]:
    if not isinstance(outcomes, list) or len(outcomes) != len(steps):
        raise QueryError(f"need {len(steps)} outcomes, got {outcomes!r}")
    out = []
    for k, lab in zip(steps, outcomes):
        if lab is None and allow_hole:
            out.append(None)
            continue
        labels = sc.schedule[k].instrument.labels
        if str(lab) not in labels:
            raise QueryError(f"unknown outcome {lab!r} at schedule step {k}; known: {labels}")
        out.append(labels.index(str(lab)))
    return out


def _ops(sc: Scenario, raw, where) -> list[np.ndarray]:
    if not isinstance(raw, list):
        raise ScenarioParseError(f"{where}: expected a list of matrices")
    mats = [_matrix(m, f"{where}[{k}]") for k, m in enumerate(raw)]
    if any(m.shape[0] != sc.d_s for m in mats):
        raise QueryError(f"{where}: operators must act on the system (dimension {sc.d_s})")
    return mats


def _prob(raw: float, tol: float) -> dict:
    return {"raw": fmt_float(raw), "value": fmt_float(min(max(raw, 0.0), 1.0)), "in_range": -tol <= raw <= 1 + tol}


def _check(name: str, value: float, expected: float, tol: float) -> dict:
    return {"name": name, "value": fmt_float(value), "expected": fmt_float(expected), "tol": tol, "passed": abs(value - expected) <= tol}


def _expect_checks(q: Mapping, values: Mapping[str, float], tol: float) -> list[dict]:
    checks = []
    exp = q.get("expect") or {}
    for key, target in exp.items():
        if key == "tol":
            continue
        if key not in values:
            raise QueryError(f"cannot check unknown quantity {key!r}; available: {sorted(values)}")
        if isinstance(target, bool):
            checks.append({"name": key, "value": bool(values[key]), "expected": target, "passed": bool(values[key]) == target})
        elif isinstance(target, list):
            z = complex(*target)
            v = complex(values[key])
            checks.append({"name": key, "value": complex_to_pair(v), "expected": complex_to_pair(z), "tol": exp.get("tol", tol), "passed": abs(v - z) <= exp.get("tol", tol)})
        else:
            checks.append(_check(key, float(values[key]), float(target), float(exp.get("tol", tol))))
    return checks


def run_query(sc: Scenario, q: Mapping, index: int, tol: float, seed: int) -> dict:
    kind = q["type"]
    rng = np.random.default_rng([seed, index])
    checks: list[dict] = []
    result: dict[str, Any]
    values: dict[str, Any] = {}
    fam = sc.evolution

    if kind == "kernel":
        steps = _steps(sc, q)
        times = q.get("times") or [sc.times[k] for k in steps]
        a = [np.kron(m, np.eye(sc.d_e)) for m in _ops(sc, q.get("a"), "a")]
        b = [np.kron(m, np.eye(sc.d_e)) for m in _ops(sc, q.get("b", q.get("a")), "b")]
        try:
            w = qsp.correlation_kernel(fam, sc.rho_se, times, a, b)
        except (qsp.ScheduleError, DimensionError) as exc:
            raise QueryError(str(exc)) from None
        result = {"value": complex_to_pair(w)}
        values = {"value": w}

    elif kind == "seqprob":
        steps = _steps(sc, q)
        families = _projective(sc, steps)
        idx = _outcome_indices(sc, steps, q.get("outcomes"))
        times = [sc.times[k] for k in steps]
        p = qsp.sequential_probability(fam, sc.rho_se, times, families, idx)
        heis = qsp.pyramidal_probability(fam, sc.rho_se, times, [f[m] for f, m in zip(families, idx)])
        result = {"probability": _prob(p, tol), "heisenberg": fmt_float(heis), "picture_gap": fmt_float(abs(p - heis))}
        checks.append({"name": "probability_in_range", "passed": result["probability"]["in_range"]})
        checks.append({"name": "picture_equivalence", "value": fmt_float(abs(p - heis)), "tol": tol, "passed": abs(p - heis) <= tol})
        values = {"probability": p}

    elif kind == "marginal-gap":
        steps = _steps(sc, q)
        families = _projective(sc, steps)
        idx = _outcome_indices(sc, steps, q.get("outcomes"), allow_hole=True)
        times = [sc.times[k] for k in steps]
        try:
            gap = qsp.marginalization_gap(fam, sc.rho_se, times, families, idx)
        except (qsp.MarginalizationError, qsp.ScheduleError) as exc:
            raise QueryError(str(exc)) from None
        hole = idx.index(None)
        summed = sum(
            qsp.sequential_probability(fam, sc.rho_se, times, families, idx[:hole] + [m] + idx[hole + 1:])
            for m in range(len(families[hole]))
        )
        rest = [i for i in range(len(steps)) if i != hole]
        reduced = qsp.sequential_probability(fam, sc.rho_se, [times[i] for i in rest], [families[i] for i in rest], [idx[i] for i in rest])
        result = {"gap": fmt_float(gap), "marginalized": _prob(summed, tol), "unmeasured": _prob(reduced, tol), "consistent": gap <= tol}
        values = {"gap": gap, "marginalized": summed, "unmeasured": reduced, "consistent": gap <= tol}

    elif kind == "qnd":
        steps = _steps(sc, q)
        families = _projective(sc, steps)
        rep = qsp.qnd_check(fam, [sc.times[k] for k in steps], families)
        result = {"max_commutator": fmt_float(rep.max_commutator), "qnd": rep.is_qnd(tol)}
        values = {"max_commutator": rep.max_commutator, "qnd": rep.is_qnd(tol)}

    elif kind == "pt-eval":
        steps = _steps(sc, q)
        spec = sc.process_tensor(steps)
        insts = [sc.schedule[k].instrument for k in steps]
        outcomes = q.get("outcomes")
        if not isinstance(outcomes, list) or len(outcomes) != len(steps):
            raise QueryError(f"need {len(steps)} outcomes, got {outcomes!r}")
        try:
            sigma = pt.evaluate(spec, [i[str(lab)] for i, lab in zip(insts, outcomes)])
        except KeyError as exc:
            raise QueryError(str(exc.args[0])) from None
        p = float(np.trace(sigma).real)
        result = {"probability": _prob(p, tol), "unnormalized_state": matrix_to_literal(sigma)}
        if p > PROBABILITY_FLOOR:
            result["conditional_state"] = matrix_to_literal(sigma / p)
        checks.append({"name": "probability_in_range", "passed": result["probability"]["in_range"]})
        values = {"probability": p}

    elif kind == "pt-choi":
        spec = sc.process_tensor(_steps(sc, q))
        choi = pt.choi_state(spec)
        lam = min_eigenvalue(choi.matrix)
        result = {
            "dim": choi.matrix.shape[0],
            "leg_layout": choi.leg_layout,
            "trace": fmt_float(np.trace(choi.matrix).real),
            "min_eigenvalue": fmt_float(lam),
        }
        if q.get("export"):
            result["matrix"] = matrix_to_literal(choi.matrix)
        checks.append({"name": "choi_psd", "value": fmt_float(lam), "tol": max(tol, 1e-8), "passed": lam >= -max(tol, 1e-8)})
        values = {"min_eigenvalue": lam}

    elif kind == "pt-audit":
        spec = sc.process_tensor(_steps(sc, q))
        trials = int(q.get("trials", 20))
        rep = pt.audit_properties(spec, trials, rng, tol=max(tol, 1e-8))
        result = {k: (fmt_float(v) if isinstance(v, float) else v) for k, v in rep.to_json().items()}
        checks.append({"name": "properties", "passed": rep.passed})
        values = {"passed": rep.passed}

    elif kind == "bridge-verify":
        steps = _steps(sc, q)
        times = [sc.times[k] for k in steps]
        if q.get("random"):
            a = [ginibre(sc.d_s, rng) for _ in times]
            b = [ginibre(sc.d_s, rng) for _ in times]
        else:
            a = _ops(sc, q.get("a"), "a")
            b = _ops(sc, q.get("b", q.get("a")), "b")
            if len(a) != len(times) or len(b) != len(times):
                raise QueryError(f"need {len(times)} operators in a and b")
        rep = bridge.verify_theorem1(a, b, sc.dilation(), times, tol=max(tol, 1e-8))
        result = rep.to_json()
        checks.append({"name": "identity", "value": fmt_float(rep.abs_error), "tol": rep.tol, "passed": rep.passed})
        values = {"lhs": rep.lhs, "rhs": rep.rhs, "abs_error": rep.abs_error}

    else:  # pragma: no cover - rejected at parse time
        raise QueryError(f"unknown query type {kind!r}")

    checks += _expect_checks(q, values, tol)
    out = {"index": index, "type": kind}
    if "id" in q:
        out["id"] = q["id"]
    out.update({"result": result, "checks": checks, "passed": all(c["passed"] for c in checks)})
    return out


def run_scenario(sc: Scenario, tol: float | None = None, seed: int | None = None, timing: bool = False) -> dict:
    tol = resolve_tol(tol)
    seed = (sc.seed if sc.seed is not None else 0) if seed is None else seed
    results = []
    for k, q in enumerate(sc.queries):
        start = time.perf_counter()
        res = run_query(sc, q, k, tol, seed)
        if timing:
            res["wall_time_s"] = round(time.perf_counter() - start, 6)
        results.append(res)
    return {
        "description": sc.description,
        "seed": seed,
        "tol": tol,
        "queries": results,
        "passed": all(r["passed"] for r in results),
    }


def outcome_table(sc: Scenario, cap: int = MAX_TREE_LEAVES) -> dict[tuple[str, ...], float]:
    spec = sc.process_tensor()
    return pt.outcome_distribution(spec, [s.instrument for s in sc.schedule], cap=cap)
