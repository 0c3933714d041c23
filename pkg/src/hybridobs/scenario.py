"""Scenario files: the single source of truth for a run.

A scenario is UTF-8 JSON (schema_version 1) holding the plant data, optional
coordinate/gain overrides, the rate targets, timing (with "auto" slots), the
named graphs plus the switching schedule, the operating mode, resilience
events, and initial conditions.  Matrices are row-major nested lists.  Graph
arc lists name ordered pairs [j, i] ("j is a neighbor of i", 1-based); self
arcs are implicit.

Certificates embed a SHA-256 of the scenario file's canonical JSON so a
simulation can refuse a design produced for different data.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .design import DesignCertificate, RateSpec, build_certificate, proof_constants
from .errors import ScenarioError
from .graphs import DiGraph, GraphSchedule
from .plant import LtiPlant, NoiseForcing, decompose_all
from .timing import TimingConfig

SCHEMA_VERSION = 1


def canonical_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def load_raw(path) -> dict:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {raw.get('schema_version')!r}")
    return raw


def _matrix(entry, what):
    try:
        M = np.asarray(entry, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{what} is not numeric") from exc
    if M.ndim == 1:
        M = M.reshape(1, -1)
    if M.ndim != 2:
        raise ScenarioError(f"{what} must be a matrix")
    return M


def _agent_map(entry, m, what):
    out = {}
    for key, val in (entry or {}).items():
        i = int(key)
        if not 1 <= i <= m:
            raise ScenarioError(f"{what} names unknown agent {key}")
        out[i] = _matrix(val, f"{what}[{key}]")
    return out


@dataclass
class Scenario:
    """A loaded scenario plus every resolved object a run needs."""

    raw: dict
    name: str
    plant: LtiPlant
    decs: tuple
    rate: RateSpec
    sched: GraphSchedule
    mode: str
    averaging: str
    events: tuple
    xhat0: np.ndarray
    w0: list
    sample_step: float
    K_overrides: dict
    sha256: str
    timing_spec: dict

    @property
    def m(self) -> int:
        return self.plant.m

    def resolve_timing(self, q: int) -> TimingConfig:
        """Concrete TimingConfig for a given iteration count.

        "auto" delta leaves headroom for the deviation bounds (and for the
        event-clock offsets in mismatch mode); "auto" beta is delta/2.
        """
        ts = self.timing_spec
        T = float(ts["T"])
        eps = ts["epsilons"]
        offs = ts["start_offsets"]
        reserve = float(np.max(eps))
        if self.mode == "mismatch":
            reserve = max(reserve, float(np.max(offs) - np.min(offs)))
        delta = ts["delta"]
        if delta == "auto":
            slack = reserve if reserve > 0 else T * 1e-6
            delta = (T - slack) / q
        beta = ts["beta"]
        if beta == "auto":
            beta = float(delta) / 2.0
        return TimingConfig(
            T=T, Delta=float(delta), beta=float(beta), q=q,
            epsilons=eps, deviation_seed=int(ts["seed"]),
            start_offsets=offs if self.mode == "mismatch" else None,
            mode=self.mode,
        )

    def design(self) -> tuple:
        """Run the design pipeline; returns (certificate, timing).

        beta enters the constants only through g, and auto-beta depends on
        the resolved q, so the certificate is built first and its bound
        constants recomputed once the timing is concrete.
        """
        ts = self.timing_spec
        q_spec = ts["q"]
        vbar = None
        q_override = None
        if isinstance(q_spec, dict):
            vbar = int(q_spec["resilient_vbar"])
        elif q_spec != "auto":
            q_override = int(q_spec)
        cert = build_certificate(
            self.plant, self.decs, self.rate, T=float(ts["T"]), beta=0.0,
            averaging=self.averaging, K_overrides=self.K_overrides,
            q_override=q_override, vbar=vbar, sched=self.sched if vbar is not None else None,
        )
        timing = self.resolve_timing(cert.q)
        cert.const_b, cert.const_d, cert.const_g = proof_constants(
            cert.q, cert.c, self.rate, self.plant.A, timing.T, timing.beta,
            [dec.Q for dec in self.decs],
        )
        return cert, timing


def load_scenario(path) -> Scenario:
    raw = load_raw(path)
    return resolve_scenario(raw)


def resolve_scenario(raw: dict) -> Scenario:
    try:
        pdata = raw["plant"]
        A = _matrix(pdata["A"], "plant.A")
        channels = tuple(_matrix(Ci, f"plant.C[{k}]") for k, Ci in enumerate(pdata["C"]))
        x0 = np.asarray(pdata["x0"], dtype=float)
        noise = None
        ndata = pdata.get("noise")
        if ndata:
            noise = NoiseForcing(
                b=np.asarray(ndata["b"], dtype=float),
                amplitude=float(ndata.get("amplitude", 0.0)),
                omega=float(ndata.get("omega", 0.0)),
                offsets=tuple((float(t), float(v)) for t, v in ndata.get("offsets", [])),
            )
        plant = LtiPlant(A=A, channels=channels, x0=x0, noise=noise)
        m = plant.m

        overrides = raw.get("overrides", {})
        L_overrides = _agent_map(overrides.get("L"), m, "overrides.L")
        K_overrides = _agent_map(overrides.get("K"), m, "overrides.K")
        decs = decompose_all(plant, L_overrides)

        rdata = raw["rate"]
        rate = RateSpec(lam=float(rdata["lambda"]), lam_bar=float(rdata["lambda_bar"]))

        graphs = {}
        for gname, arcs in raw["graphs"].items():
            graphs[gname] = DiGraph.from_arcs(m, [(int(j), int(i)) for j, i in arcs])
        sdata = raw["schedule"]
        horizon = float(sdata["horizon"])
        if "alternate" in sdata:
            period = float(sdata["period"])
            names = sdata["alternate"]
            segments, t, k = [], 0.0, 0
            while t < horizon:
                segments.append((t, graphs[names[k % len(names)]]))
                t += period
                k += 1
        else:
            segments = [(float(t), graphs[gname]) for t, gname in sdata["segments"]]
        sched = GraphSchedule(segments=tuple(segments), horizon=horizon)

        mode = raw.get("mode", "sync")
        averaging = raw.get("averaging", "straight")
        events = tuple(
            (float(t), str(kind), int(agent)) for t, kind, agent in raw.get("events", [])
        )

        idata = raw["init"]
        xhat0 = np.asarray(idata["xhat"], dtype=float)
        if xhat0.shape != (m, plant.n):
            raise ScenarioError(f"init.xhat must be {m} x {plant.n}")
        w0 = [np.asarray(w, dtype=float) for w in idata["w"]]
        if len(w0) != m:
            raise ScenarioError("init.w must list one vector per agent")
        for dec, w in zip(decs, w0):
            if w.size != dec.n_i:
                raise ScenarioError(
                    f"init.w[{dec.agent}] has length {w.size}, expected {dec.n_i}"
                )

        tdata = raw["timing"]
        eps = tdata.get("epsilons", 0.0)
        eps = np.full(m, float(eps)) if np.isscalar(eps) else np.asarray(eps, dtype=float)
        offs = tdata.get("start_offsets")
        offs = np.zeros(m) if offs is None else np.asarray(offs, dtype=float)
        if mode != "mismatch" and np.any(offs != 0.0):
            raise ScenarioError("start_offsets require mode = \"mismatch\"")
        q_spec = tdata["q"]
        if not (q_spec == "auto" or isinstance(q_spec, (int, dict))):
            raise ScenarioError("timing.q must be an integer, \"auto\", or {\"resilient_vbar\": k}")
        timing_spec = {
            "T": float(tdata["T"]),
            "q": q_spec,
            "delta": tdata.get("delta", "auto"),
            "beta": tdata.get("beta", "auto"),
            "epsilons": eps,
            "seed": int(tdata.get("seed", 0)),
            "start_offsets": offs,
        }

        sample_step = float(raw.get("output", {}).get("sample_step", 1e-2))
    except KeyError as exc:
        raise ScenarioError(f"scenario is missing required field {exc}") from exc

    return Scenario(
        raw=raw,
        name=str(raw.get("name", "scenario")),
        plant=plant,
        decs=decs,
        rate=rate,
        sched=sched,
        mode=mode,
        averaging=averaging,
        events=events,
        xhat0=xhat0,
        w0=w0,
        sample_step=sample_step,
        K_overrides=K_overrides,
        sha256=canonical_hash(raw),
        timing_spec=timing_spec,
    )


# ---------------------------------------------------------------------------
# certificate files


def certificate_to_dict(cert: DesignCertificate, timing: TimingConfig, scenario: Scenario) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario_sha256": scenario.sha256,
        "scenario_name": scenario.name,
        "rate": {"lambda": cert.rate.lam, "lambda_bar": cert.rate.lam_bar},
        "rho": cert.rho,
        "rho_certified": cert.rho_certified,
        "alpha": cert.alpha,
        "sigma": cert.sigma,
        "q": cert.q,
        "p": cert.p,
        "q_formula": cert.q_formula,
        "q_symmetric": cert.q_symmetric,
        "q_star": cert.q_star,
        "b": cert.const_b,
        "d": cert.const_d,
        "g": cert.const_g,
        "c": list(cert.obs_constants),
        "gains": {str(i + 1): np.asarray(K).tolist() for i, K in enumerate(cert.gains)},
        "decompositions": {
            str(dec.agent): {
                "n_i": dec.n_i,
                "L": dec.L.tolist(),
                "Abar": dec.Abar.tolist(),
                "Cbar": dec.Cbar.tolist(),
                "Q": dec.Q.tolist(),
                "P": dec.P.tolist(),
            }
            for dec in scenario.decs
        },
        "timing": {
            "T": timing.T,
            "delta": timing.Delta,
            "beta": timing.beta,
            "q": timing.q,
            "epsilons": timing.epsilons.tolist(),
            "seed": timing.deviation_seed,
            "start_offsets": timing.start_offsets.tolist(),
            "mode": timing.mode,
            "timing_certified": timing.timing_certified,
        },
        "notes": list(cert.notes),
    }


def certificate_from_dict(data: dict, scenario: Scenario) -> tuple:
    """Rebuild (certificate, timing) and check the scenario hash."""
    if data.get("scenario_sha256") != scenario.sha256:
        raise ScenarioError(
            "certificate was produced for a different scenario "
            f"(hash {data.get('scenario_sha256', '?')[:12]} != {scenario.sha256[:12]})"
        )
    rate = RateSpec(lam=float(data["rate"]["lambda"]), lam_bar=float(data["rate"]["lambda_bar"]))
    gains = tuple(
        np.asarray(data["gains"][str(i)], dtype=float) for i in range(1, scenario.m + 1)
    )
    cert = DesignCertificate(
        rate=rate,
        gains=gains,
        obs_constants=tuple(float(c) for c in data["c"]),
        rho=float(data["rho"]),
        alpha=float(data["alpha"]),
        q=int(data["q"]),
        p=int(data["p"]),
        q_formula=int(data["q_formula"]),
        sigma=None if data.get("sigma") is None else float(data["sigma"]),
        q_symmetric=None if data.get("q_symmetric") is None else int(data["q_symmetric"]),
        const_b=float(data["b"]),
        const_d=float(data["d"]),
        const_g=float(data["g"]),
        q_star=None if data.get("q_star") is None else int(data["q_star"]),
        rho_certified=bool(data.get("rho_certified", True)),
        notes=tuple(data.get("notes", ())),
    )
    t = data["timing"]
    timing = TimingConfig(
        T=float(t["T"]), Delta=float(t["delta"]), beta=float(t["beta"]), q=int(t["q"]),
        epsilons=np.asarray(t["epsilons"], dtype=float),
        deviation_seed=int(t["seed"]),
        start_offsets=np.asarray(t["start_offsets"], dtype=float),
        mode=t["mode"],
    )
    return cert, timing


def save_certificate(path, cert: DesignCertificate, timing: TimingConfig, scenario: Scenario):
    Path(path).write_text(
        json.dumps(certificate_to_dict(cert, timing, scenario), indent=2) + "\n",
        encoding="utf-8",
    )


def load_certificate(path, scenario: Scenario):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return certificate_from_dict(data, scenario)
