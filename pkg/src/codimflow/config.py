"""Scenario configuration: flat dotted-key text files -> validated Scenario.

Format: one `key = value` per line, `#` starts a comment, arrays are
comma-separated. Parsing collects every error (with line numbers) instead of
stopping at the first.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .catalog import catalog_names
from .errors import ConfigError
from .flow import FlowConfig, Integrator
from .grid import MIN_RESOLUTION


@dataclass(frozen=True)
class AnalysisSpec:
    kind: str                      # monotonicity | soliton | rescale | classify | lagrangian_report
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PotentialSpec:
    m: int
    S: np.ndarray
    phi_terms: list          # [(coef, [(fn, k, axis), ...]), ...]
    resolution: tuple[int, ...]
    fd_order: int = 2


@dataclass(frozen=True)
class Scenario:
    name: str
    initial_kind: str              # catalog | potential | snapshot
    catalog_name: str | None
    catalog_params: dict
    potential: PotentialSpec | None
    snapshot_path: str | None
    flow: FlowConfig
    analyses: list[AnalysisSpec]
    output_dir: str
    source_text: str = ""


_PHI_TERM = re.compile(
    r"^\s*(?P<coef>[-+]?[\d.eE+-]+)\s*(?P<factors>(\*\s*(sin|cos)\(\s*(\d+\s*\*\s*)?x\d\s*\))+)\s*$"
)
_PHI_FACTOR = re.compile(r"\*\s*(?P<fn>sin|cos)\(\s*(?:(?P<k>\d+)\s*\*\s*)?x(?P<ax>\d)\s*\)")


def parse_phi_term(text: str):
    """Parse one Fourier product term like `0.1*sin(x1)*cos(2*x2)`."""
    m = _PHI_TERM.match(text)
    if not m:
        raise ValueError(f"bad phi term {text!r}; expected like 0.1*sin(x1)*cos(2*x2)")
    coef = float(m.group("coef"))
    factors = []
    for fm in _PHI_FACTOR.finditer(m.group("factors")):
        k = int(fm.group("k") or 1)
        factors.append((fm.group("fn"), k, int(fm.group("ax")) - 1))
    return coef, factors


def evaluate_phi(spec: PotentialSpec, mesh: list[np.ndarray]) -> np.ndarray:
    out = np.zeros(mesh[0].shape)
    for coef, factors in spec.phi_terms:
        term = np.full(mesh[0].shape, coef)
        for fn, k, ax in factors:
            if ax >= len(mesh):
                raise ConfigError(f"phi term references axis x{ax + 1} beyond dimension")
            f = np.sin if fn == "sin" else np.cos
            term = term * f(k * mesh[ax])
        out += term
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.errors: list[str] = []
        self.kv: dict[str, tuple[str, int]] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                self.errors.append(f"line {lineno}: expected 'key = value'")
                continue
            key, value = line.split("=", 1)
            key = key.strip()
            if key in self.kv:
                self.errors.append(f"line {lineno}: duplicate key {key!r}")
            self.kv[key] = (value.strip(), lineno)
        self.used: set[str] = set()

    def err(self, key: str, message: str):
        lineno = self.kv[key][1] if key in self.kv else 0
        where = f"line {lineno}: " if lineno else ""
        self.errors.append(f"{where}{message}")

    def get(self, key: str, default=None):
        self.used.add(key)
        if key not in self.kv:
            return default
        return self.kv[key][0]

    def get_typed(self, key: str, cast, default=None, what: str = "value"):
        raw = self.get(key)
        if raw is None:
            return default
        try:
            return cast(raw)
        except (TypeError, ValueError):
            self.err(key, f"{key}: expected {what}, got {raw!r}")
            return default

    def floats(self, key: str, default=None):
        raw = self.get(key)
        if raw is None:
            return default
        try:
            return [float(x) for x in raw.split(",")]
        except ValueError:
            self.err(key, f"{key}: expected comma-separated numbers, got {raw!r}")
            return default

    def finish_unknown(self):
        for key, (_, lineno) in sorted(self.kv.items(), key=lambda it: it[1][1]):
            if key not in self.used:
                self.errors.append(f"line {lineno}: unknown key {key!r}")


_KNOWN_ANALYSES = ("monotonicity", "soliton", "rescale", "classify", "lagrangian_report")


def parse_config(text: str) -> Scenario:
    """Parse and validate a scenario; raises ConfigError listing every
    problem found (one line each, with line numbers)."""
    p = _Parser(text)
    if p.errors:
        pass  # keep collecting; malformed lines already noted

    name = p.get("name", "scenario")

    # --- initial data -----------------------------------------------------
    sources = []
    catalog_name = p.get("initial.catalog")
    if catalog_name is not None:
        sources.append("catalog")
    snapshot_path = p.get("initial.snapshot")
    if snapshot_path is not None:
        sources.append("snapshot")
    has_potential = any(k.startswith("initial.potential.") for k in p.kv)
    if has_potential:
        sources.append("potential")
    if len(sources) == 0:
        p.errors.append("no initial source: set initial.catalog, "
                        "initial.potential.*, or initial.snapshot")
    elif len(sources) > 1:
        p.errors.append(f"exactly one initial source required, got {sources}")
    initial_kind = sources[0] if len(sources) == 1 else "catalog"

    catalog_params: dict = {}
    if catalog_name is not None:
        if catalog_name not in catalog_names():
            p.err("initial.catalog",
                  f"unknown catalog example {catalog_name!r}; known: {', '.join(catalog_names())}")
        for key in list(p.kv):
            if key.startswith("initial.") and key not in (
                "initial.catalog", "initial.snapshot"
            ) and not key.startswith("initial.potential."):
                pname = key.split(".", 1)[1]
                raw = p.get(key)
                try:
                    catalog_params[pname] = int(raw)
                except ValueError:
                    try:
                        catalog_params[pname] = float(raw)
                    except ValueError:
                        catalog_params[pname] = raw

    potential = None
    if has_potential:
        m = p.get_typed("initial.potential.m", int, 2, "integer")
        res = p.get("initial.potential.resolution", "64")
        try:
            resolution = tuple(int(x) for x in res.split(","))
        except ValueError:
            p.err("initial.potential.resolution", "expected comma-separated integers")
            resolution = (64,)
        if len(resolution) == 1:
            resolution = resolution * m
        for r in resolution:
            if r < MIN_RESOLUTION:
                p.err("initial.potential.resolution",
                      f"resolution below minimum {MIN_RESOLUTION}")
        svals = p.floats("initial.potential.S", [0.0] * (m * m))
        S = np.zeros((m, m))
        if svals is not None:
            if len(svals) == m * m:
                S = np.array(svals).reshape(m, m)
            elif len(svals) == m:
                S = np.diag(svals)
            else:
                p.err("initial.potential.S",
                      f"S needs {m} (diagonal) or {m * m} (full) entries")
        phi_terms = []
        raw_phi = p.get("initial.potential.phi", "")
        if raw_phi:
            for term in raw_phi.split(","):
                try:
                    phi_terms.append(parse_phi_term(term))
                except ValueError as exc:
                    p.err("initial.potential.phi", str(exc))
        fd_order = p.get_typed("initial.potential.fd_order", int, 2, "integer")
        potential = PotentialSpec(m=m, S=S, phi_terms=phi_terms,
                                  resolution=resolution, fd_order=fd_order)

    # --- grid overrides for catalog sources -------------------------------
    res_raw = p.get("grid.resolution")
    if res_raw is not None:
        try:
            res = [int(x) for x in res_raw.split(",")]
        except ValueError:
            p.err("grid.resolution", "expected comma-separated integers")
            res = []
        for r in res:
            if r < MIN_RESOLUTION:
                p.err("grid.resolution", f"resolution below minimum {MIN_RESOLUTION}")
        if len(res) == 1:
            catalog_params.setdefault("n", res[0])
        elif len(res) == 2:
            catalog_params.setdefault("J", res[0])
            catalog_params.setdefault("K", res[1])
    fd_raw = p.get("grid.fd_order")
    if fd_raw is not None:
        fd = p.get_typed("grid.fd_order", int, 2, "integer")
        if fd not in (2, 4):
            p.err("grid.fd_order", "fd_order must be 2 or 4")
        else:
            catalog_params.setdefault("fd_order", fd)

    # --- flow config -------------------------------------------------------
    integ_raw = p.get("flow.integrator", "explicit")
    try:
        integrator = Integrator(integ_raw)
    except ValueError:
        p.err("flow.integrator",
              f"integrator must be one of {[i.value for i in Integrator]}, got {integ_raw!r}")
        integrator = Integrator.EXPLICIT_EULER
    flow_kwargs = dict(
        integrator=integrator,
        cfl_sigma=p.get_typed("flow.cfl_sigma", float, 0.25, "number"),
        curvature_cap_rho=p.get_typed("flow.curvature_cap_rho", float, 0.05, "number"),
        stop_max_A2=p.get_typed("flow.stop_max_A2", float, 1e6, "number"),
        stop_t_max=p.get_typed("flow.stop_t_max", float, math.inf, "number"),
        stop_dt_min=p.get_typed("flow.stop_dt_min", float, 1e-12, "number"),
        record_every=p.get_typed("flow.record_every", int, 1, "integer"),
        snapshot_every=p.get_typed("flow.snapshot_every", int, 0, "integer"),
    )
    fixed_dt = p.get_typed("flow.fixed_dt", float, None, "number")
    if fixed_dt is not None:
        flow_kwargs["fixed_dt"] = fixed_dt
    try:
        flow = FlowConfig(**flow_kwargs)
    except Exception as exc:
        p.errors.append(f"flow configuration invalid: {exc}")
        flow = FlowConfig()

    # --- analyses ----------------------------------------------------------
    analyses: list[AnalysisSpec] = []
    raw = p.get("analyses", "")
    requested = [a.strip() for a in raw.split(",") if a.strip()] if raw else []
    for a in requested:
        if a not in _KNOWN_ANALYSES:
            p.err("analyses", f"unknown analysis {a!r}; known: {', '.join(_KNOWN_ANALYSES)}")
            continue
        params: dict = {}
        if a == "monotonicity":
            q = p.floats("analysis.monotonicity.q", [0.0, 0.0])
            t0 = p.get_typed("analysis.monotonicity.t0", float, None, "number")
            if t0 is None:
                p.errors.append("analysis.monotonicity.t0 is required")
                t0 = 1.0
            params = {"q": q, "t0": t0}
        elif a == "soliton":
            kind = p.get("analysis.soliton.kind", "shrinker")
            if kind not in ("shrinker", "expander", "translator"):
                p.err("analysis.soliton.kind", f"bad soliton kind {kind!r}")
            params = {"kind": kind}
            V = p.floats("analysis.soliton.V")
            if V is not None:
                params["V"] = V
            elif kind == "translator":
                p.errors.append("analysis.soliton.V is required for translator")
        elif a == "rescale":
            mode = p.get("analysis.rescale.mode", "type1")
            if mode not in ("type1", "type2"):
                p.err("analysis.rescale.mode", f"mode must be type1 or type2, got {mode!r}")
            params = {"mode": mode,
                      "k": p.get_typed("analysis.rescale.k", int, 10, "integer")}
        analyses.append(AnalysisSpec(kind=a, params=params))

    if any(a.kind == "lagrangian_report" for a in analyses):
        if initial_kind == "catalog" and catalog_name not in ("whitney", "clifford_torus"):
            even_ok = catalog_name in ("circle",) and catalog_params.get("ambient_dim", 2) % 2 == 0
            if not even_ok:
                p.errors.append(
                    "lagrangian_report requires even ambient dimension "
                    f"(initial {catalog_name!r} does not guarantee it)")

    output_dir = p.get("output.dir", "out")

    p.finish_unknown()
    if p.errors:
        raise ConfigError("configuration errors:\n  " + "\n  ".join(p.errors))
    return Scenario(
        name=name,
        initial_kind=initial_kind,
        catalog_name=catalog_name,
        catalog_params=catalog_params,
        potential=potential,
        snapshot_path=snapshot_path,
        flow=flow,
        analyses=analyses,
        output_dir=output_dir,
        source_text=text,
    )
