"""INI-style run configuration.

Sections and keys mirror :class:`~qpo.loop.CampaignConfig`,
:class:`~qpo.acquisition.PolicyConfig` and :class:`~qpo.surrogate.GpConfig`::

    [campaign]
    init_batch = 50
    batch_size = 25
    iterations = 8
    objective_direction = max
    top_k = 10, 100
    top_fractions = 0.005, 0.01

    [policy]
    M = 10000
    beta_ucb = 1.0
    beta_bucb = 1.7320508075688772
    prefilter_size = 10000
    prefilter_metric = greedy
    seed = 0

    [surrogate]
    similarity = minmax
    restarts = 8
    predictive_noise = false

    [dataset]
    # either a file ...
    path = pool.csv
    dimension = 2048
    # ... or a synthetic generator
    generator = multimodal
    N = 2000
    dimension = 256
    seed = 0

    [run]
    seeds = 0, 1, 2
    policies = qpo, greedy
    out = results
    threads = 1

Command-line flags override file values.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace

from .acquisition import POLICIES, PolicyConfig
from .errors import UsageError
from .fingerprints import SIMILARITY_KINDS
from .loop import GENERATORS, CampaignConfig
from .surrogate import GpConfig


def _int(s):
    return int(s)


def _float(s):
    return float(s)


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s):
    return tuple(int(x) for x in s.replace(",", " ").split())


def _floats(s):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _names(s):
    return tuple(x for x in s.replace(",", " ").split())


_SCHEMA = {
    "campaign": {
        "seed": _int,
        "init_batch": _int,
        "batch_size": _int,
        "iterations": _int,
        "objective_direction": str,
        "top_k": _ints,
        "top_fractions": _floats,
    },
    "policy": {
        "policy": str,
        "m": _int,
        "beta_ucb": _float,
        "beta_bucb": _float,
        "prefilter_size": _int,
        "prefilter_metric": str,
        "seed": _int,
    },
    "surrogate": {"similarity": str, "restarts": _int, "predictive_noise": _bool},
    "dataset": {"path": str, "dimension": _int, "generator": str, "n": _int, "seed": _int},
    "run": {"seeds": _ints, "policies": _names, "out": str, "threads": _int},
}


@dataclass
class DatasetSpec:
    path: str | None = None
    dimension: int | None = None
    generator: str | None = None
    N: int | None = None
    seed: int = 0

    def describe(self) -> str:
        if self.path:
            return f"file:{self.path}"
        return f"synthetic:{self.generator}:N={self.N}:dim={self.dimension}:seed={self.seed}"


@dataclass
class RunManifest:
    campaign: CampaignConfig = field(default_factory=CampaignConfig)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    seeds: tuple = (0,)
    policies: tuple = ("qpo",)
    out: str = "results"
    config_path: str | None = None

    def validate(self) -> None:
        errors = []
        if not self.seeds:
            errors.append("run.seeds: seed list is empty")
        bad = [p for p in self.policies if p not in POLICIES]
        if bad:
            errors.append(f"run.policies: unknown {', '.join(bad)}; valid: {', '.join(POLICIES)}")
        if not self.policies:
            errors.append("run.policies: policy list is empty")
        ds = self.dataset
        if ds.path:
            if not os.path.exists(ds.path):
                errors.append(f"dataset.path: {ds.path} does not exist")
            if not ds.dimension:
                errors.append("dataset.dimension: required with dataset.path")
        elif ds.generator:
            if ds.generator not in GENERATORS:
                errors.append(f"dataset.generator: unknown {ds.generator!r}; valid: {', '.join(GENERATORS)}")
            if not ds.N or ds.N < 1:
                errors.append("dataset.N: required positive integer for a synthetic dataset")
            if not ds.dimension or ds.dimension < 1:
                errors.append("dataset.dimension: required positive integer")
        else:
            errors.append("dataset: give either path or generator")
        try:
            probe = replace(self.campaign, policy=replace(self.campaign.policy, policy=POLICIES[0]))
            probe.validate()
        except UsageError as exc:
            errors.append(f"campaign/policy: {exc}")
        gp = self.campaign.gp
        if gp.similarity not in SIMILARITY_KINDS:
            errors.append(f"surrogate.similarity: unknown {gp.similarity!r}; valid: {', '.join(SIMILARITY_KINDS)}")
        if gp.restarts < 1:
            errors.append("surrogate.restarts: must be >= 1")
        if self.campaign.threads < 1:
            errors.append("run.threads: must be >= 1")
        if errors:
            raise UsageError("invalid configuration:\n  " + "\n  ".join(errors))


def load_config(path: str | None) -> tuple[dict, list[str]]:
    """Parse an INI file into ``{section: {key: value}}`` with per-field errors."""
    values: dict = {s: {} for s in _SCHEMA}
    errors: list[str] = []
    if path is None:
        return values, errors
    if not os.path.exists(path):
        raise UsageError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from None
    for section in parser.sections():
        if section not in _SCHEMA:
            errors.append(f"[{section}]: unknown section")
            continue
        for key, raw in parser.items(section):
            conv = _SCHEMA[section].get(key)
            if conv is None:
                errors.append(f"{section}.{key}: unknown key")
                continue
            try:
                values[section][key] = conv(raw)
            except ValueError as exc:
                errors.append(f"{section}.{key}: {exc}")
    return values, errors


def build_manifest(path: str | None = None, overrides: dict | None = None) -> RunManifest:
    """Merge file values and ``overrides`` (``{"section.key": value}``) into a manifest."""
    values, errors = load_config(path)
    for dotted, v in (overrides or {}).items():
        if v is None:
            continue
        section, key = dotted.split(".", 1)
        values[section][key] = v
    if errors:
        raise UsageError("invalid configuration:\n  " + "\n  ".join(errors))

    c, p, s, d, r = (values[k] for k in ("campaign", "policy", "surrogate", "dataset", "run"))
    pol = PolicyConfig(
        policy=p.get("policy", "qpo"),
        M=p.get("m", 10_000),
        beta_ucb=p.get("beta_ucb", 1.0),
        beta_bucb=p.get("beta_bucb", PolicyConfig().beta_bucb),
        prefilter_size=p.get("prefilter_size", 10_000),
        prefilter_metric=p.get("prefilter_metric", "greedy"),
        seed=p.get("seed", 0),
    )
    gp = GpConfig(
        similarity=s.get("similarity", "minmax"),
        restarts=s.get("restarts", 8),
        predictive_noise=s.get("predictive_noise", False),
    )
    camp = CampaignConfig(
        seed=c.get("seed", 0),
        init_batch=c.get("init_batch", 50),
        batch_size=c.get("batch_size", 50),
        iterations=c.get("iterations", 10),
        policy=pol,
        objective_direction=c.get("objective_direction", "max"),
        gp=gp,
        top_k=c.get("top_k", (10, 100)),
        top_fractions=c.get("top_fractions", (0.005, 0.01)),
        threads=r.get("threads", 1),
    )
    ds = DatasetSpec(
        path=d.get("path"),
        dimension=d.get("dimension"),
        generator=d.get("generator"),
        N=d.get("n"),
        seed=d.get("seed", 0),
    )
    man = RunManifest(
        campaign=camp,
        dataset=ds,
        seeds=tuple(r.get("seeds", (0,))),
        policies=tuple(r.get("policies", (pol.policy,))),
        out=r.get("out", "results"),
        config_path=path,
    )
    man.validate()
    return man
