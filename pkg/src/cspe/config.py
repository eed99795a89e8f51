"""Run configuration read from INI-style files.

Sections and keys (all optional; defaults give the full-scale protocol)::

    [run]       data, missing_token, header, row_labels, standardize,
                back_transform, out, k
    [prior]     family = noninformative | exponential | lomax | sse | cspe
                chi; mu1, mu2; delta, kappa1, kappa2; alpha or q (+ elicit_k);
                z_weights = stick | cumulative
    [sampler]   iterations, burn_in, thin, seed, nu1, nu2, target_accept,
                max_tree_depth, adapt_iterations, initial_step_size,
                store_factors
    [schedule]  eta_bar1, eta_bar2, a_eta, b_eta
    [scenario]  J, T, true_ranks, missing_fractions, snr, replications,
                priors, workers

Inline ``;`` or ``#`` comments are allowed.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .chain import ChainConfig
from .errors import ConfigError
from .experiments import Scenario
from .factorization import max_rank
from .nuts import NutsConfig
from .posterior import RelaxationSchedule
from .priors import CSPE, SSE, Exponential, Lomax, Noninformative, elicit_alpha, standard_prior_grid

SECTIONS = ("run", "prior", "sampler", "schedule", "scenario")
PRIOR_FAMILIES = ("noninformative", "exponential", "lomax", "sse", "cspe")


@dataclass(frozen=True)
class PriorBlock:
    family: str = "cspe"
    chi: float = 1.0
    mu1: float = 2.0
    mu2: float = 20.0
    delta: float = 10.0
    kappa1: float = 2.0
    kappa2: float = 20.0
    alpha: float | None = None
    q: float = 0.5
    elicit_k: int | None = None  # default K - 1
    z_weights: str = "stick"

    def build(self, K: int):
        """Instantiate the prior for a model with ``K`` components."""
        if self.family == "noninformative":
            return Noninformative()
        if self.family == "exponential":
            return Exponential(self.chi)
        if self.family == "lomax":
            return Lomax(self.mu1, self.mu2)
        if self.family == "sse":
            return SSE(self.delta, self.kappa1, self.kappa2)
        alpha = self.alpha
        if alpha is None:
            k = self.elicit_k if self.elicit_k is not None else max(K - 1, 1)
            alpha = elicit_alpha(self.q, k)
        return CSPE(alpha, self.delta, self.kappa1, self.kappa2, self.z_weights)


@dataclass(frozen=True)
class ScenarioBlock:
    J: int = 30
    T: int = 30
    true_ranks: tuple = (12, 7, 3)
    missing_fractions: tuple = (0.0, 0.1, 0.9)
    snr: float = 10.0
    replications: int = 80
    priors: tuple = ()  # labels from the comparison grid; empty = all
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    data: str | None = None
    missing_token: str = "NA"
    header: bool = False
    row_labels: bool = False
    standardize: bool = False
    back_transform: bool = False
    out: str = "out"
    k: int | None = None
    prior: PriorBlock = field(default_factory=PriorBlock)
    chain: ChainConfig = field(default_factory=ChainConfig)
    scenario: ScenarioBlock = field(default_factory=ScenarioBlock)

    @property
    def seed(self) -> int:
        return self.chain.seed

    def to_dict(self) -> dict:
        """Plain-dict form for provenance; the output directory is left out."""
        d = asdict(self)
        d.pop("out")
        d["chain"].pop("fixed_tau")
        d["chain"].pop("freeze_theta")
        return d

    def hash(self) -> str:
        """Short SHA-256 of :meth:`to_dict`, so runs differing only in ``out`` share it."""
        d = self.to_dict()
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def scenarios(self) -> list[Scenario]:
        """Expand the scenario block into one :class:`Scenario` per (K*, missing share)."""
        sb = self.scenario
        K = self.k if self.k is not None else max_rank(sb.J, sb.T)
        grid = [_with_z_weights(p, self.prior.z_weights) for p in standard_prior_grid(K)]
        if sb.priors:
            by_label = {p.label: p for p in grid}
            unknown = [x for x in sb.priors if x not in by_label]
            if unknown:
                raise ConfigError(f"unknown prior labels {unknown}; choose from {list(by_label)}")
            grid = [by_label[x] for x in sb.priors]
        out = []
        for miss in sb.missing_fractions:
            for ks in sb.true_ranks:
                try:
                    out.append(Scenario(J=sb.J, T=sb.T, true_rank=ks, snr=sb.snr,
                                        missing_fraction=miss, replications=sb.replications,
                                        priors=tuple(grid), seed=self.seed, chain=self.chain,
                                        K=self.k))
                except ValueError as exc:
                    raise ConfigError(str(exc)) from exc
        return out


def _with_z_weights(prior, mode):
    return replace(prior, z_weights=mode) if isinstance(prior, CSPE) else prior


_BOOL = {"1": True, "yes": True, "true": True, "on": True,
         "0": False, "no": False, "false": False, "off": False}


def _convert(raw: str, kind, key: str):
    raw = raw.strip()
    try:
        if kind is bool:
            return _BOOL[raw.lower()]
        if kind == "int?":
            return None if raw.lower() in ("", "auto", "none") else int(raw)
        if kind == "float?":
            return None if raw.lower() in ("", "auto", "none") else float(raw)
        if kind == "str?":
            return raw or None
        if kind == "ints":
            return tuple(int(x) for x in raw.replace(",", " ").split())
        if kind == "floats":
            return tuple(float(x) for x in raw.replace(",", " ").split())
        if kind == "strs":
            # commas inside parentheses belong to a label such as lomax(mu1=2,mu2=5)
            return tuple(x.strip() for x in re.split(r",(?![^()]*\))", raw) if x.strip())
        return kind(raw)
    except (KeyError, ValueError):
        raise ConfigError(f"invalid value {raw!r} for {key}") from None


_RUN_KEYS = {"data": "str?", "missing_token": str, "header": bool, "row_labels": bool,
             "standardize": bool, "back_transform": bool, "out": str, "k": "int?"}
_PRIOR_KEYS = {"family": str, "chi": float, "mu1": float, "mu2": float, "delta": float,
               "kappa1": float, "kappa2": float, "alpha": "float?", "q": float,
               "elicit_k": "int?", "z_weights": str}
_CHAIN_KEYS = {"iterations": int, "burn_in": int, "thin": int, "seed": int, "nu1": float,
               "nu2": float, "store_factors": bool}
_NUTS_KEYS = {"target_accept": float, "max_tree_depth": int, "adapt_iterations": int,
              "initial_step_size": "float?"}
_SCHEDULE_KEYS = {f.name: float for f in fields(RelaxationSchedule)}
_SCENARIO_KEYS = {"J": int, "T": int, "true_ranks": "ints", "missing_fractions": "floats",
                  "snr": float, "replications": int, "priors": "strs", "workers": int}


def _section(cp, name, schema) -> dict:
    if not cp.has_section(name):
        return {}
    out = {}
    for key, raw in cp.items(name):
        match = next((k for k in schema if k.lower() == key.lower()), None)
        if match is None:
            raise ConfigError(f"unknown key {key!r} in [{name}]; expected one of {sorted(schema)}")
        out[match] = _convert(raw, schema[match], f"[{name}] {key}")
    return out


def parse_config(text: str = "", base_dir: Path | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from INI text; relative data paths resolve against ``base_dir``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    unknown = [s for s in cp.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown sections {unknown}; expected {list(SECTIONS)}")

    run = _section(cp, "run", _RUN_KEYS)
    if base_dir is not None and run.get("data") and not Path(run["data"]).is_absolute():
        run["data"] = str(Path(base_dir) / run["data"])
    prior_kw = _section(cp, "prior", _PRIOR_KEYS)
    sampler = _section(cp, "sampler", {**_CHAIN_KEYS, **_NUTS_KEYS})
    schedule_kw = _section(cp, "schedule", _SCHEDULE_KEYS)
    scenario_kw = _section(cp, "scenario", _SCENARIO_KEYS)
    nuts_kw = {k: sampler.pop(k) for k in list(sampler) if k in _NUTS_KEYS}
    try:
        prior = PriorBlock(**prior_kw)
        validate_prior_block(prior)
        seed = sampler.get("seed", 0)
        chain = ChainConfig(**sampler, nuts=NutsConfig(seed=seed, **nuts_kw),
                            schedule=RelaxationSchedule(**schedule_kw))
        scenario = ScenarioBlock(**scenario_kw)
        validate_scenario_block(scenario)
        cfg = RunConfig(**run, prior=prior, chain=chain, scenario=scenario)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.k is not None and cfg.k < 1:
        raise ConfigError("k must be a positive integer")
    return cfg


def validate_prior_block(p: PriorBlock) -> None:
    if p.family not in PRIOR_FAMILIES:
        raise ConfigError(f"unknown prior family {p.family!r}; expected one of {PRIOR_FAMILIES}")
    if p.z_weights not in ("stick", "cumulative"):
        raise ConfigError("z_weights must be 'stick' or 'cumulative'")
    for name in ("chi", "mu1", "mu2", "delta", "kappa1", "kappa2"):
        if not getattr(p, name) > 0:
            raise ConfigError(f"prior hyperparameter {name} must be positive")
    if p.alpha is not None and not p.alpha > 0:
        raise ConfigError("alpha must be positive")
    if not 0 < p.q < 1:
        raise ConfigError("q must lie in (0, 1)")


def validate_scenario_block(s: ScenarioBlock) -> None:
    if not s.true_ranks or not s.missing_fractions:
        raise ConfigError("true_ranks and missing_fractions must be nonempty")
    if s.workers < 1 or s.replications < 1:
        raise ConfigError("workers and replications must be positive")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


def with_overrides(cfg: RunConfig, *, seed=None, data=None, out=None, k=None,
                   missing_token=None, z_weights=None) -> RunConfig:
    """Apply command-line overrides; ``None`` leaves a field unchanged."""
    if seed is not None:
        chain = replace(cfg.chain, seed=seed, nuts=replace(cfg.chain.nuts, seed=seed))
        cfg = replace(cfg, chain=chain)
    if z_weights is not None:
        cfg = replace(cfg, prior=replace(cfg.prior, z_weights=z_weights))
    updates = {k_: v for k_, v in (("data", data), ("out", out), ("k", k),
                                   ("missing_token", missing_token)) if v is not None}
    return replace(cfg, **updates) if updates else cfg
