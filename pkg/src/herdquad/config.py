"""Experiment configuration: a strict JSON schema, unknown keys rejected."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError, InputError
from .gmm import GaussianMixture, default_gmm
from .kernel import RbfKernel, default_lengthscale
from .linalg import DEFAULT_JITTER
from .selectors import METHODS

FAMILIES = ("none", "rkhs", "bumps")

_TOP_KEYS = {
    "gmm", "kernel", "jitter", "pool_size", "max_samples", "methods", "seeds",
    "function_family", "num_functions", "output_dir", "record_timing",
    "weight_checkpoints", "bench",
}
_KERNEL_KEYS = {"type", "lengthscale"}
_BENCH_KEYS = {"sizes", "repeats", "batch"}


@dataclass(frozen=True)
class BenchConfig:
    sizes: tuple = (50, 100, 200, 400)
    repeats: int = 7
    batch: int = 2000


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment settings.

    ``gmm`` is the loaded target; ``lengthscale`` defaults to 1/20 of the
    target's extent when the config omits it.
    """

    gmm: GaussianMixture
    lengthscale: float
    gmm_source: object = "default"
    jitter: float = DEFAULT_JITTER
    pool_size: int = 10000
    max_samples: int = 200
    methods: tuple = METHODS
    seeds: tuple = (0,)
    function_family: str = "none"
    num_functions: int = 250
    output_dir: str = "results"
    record_timing: bool = False
    weight_checkpoints: tuple = (20, 100)
    bench: BenchConfig = field(default_factory=BenchConfig)

    @property
    def kernel(self) -> RbfKernel:
        return RbfKernel(self.lengthscale)

    def with_overrides(self, seed: int | None = None, output_dir: str | None = None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seeds=(int(seed),))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=str(output_dir))
        return cfg

    def to_dict(self) -> dict:
        gmm = self.gmm_source if isinstance(self.gmm_source, str) else self.gmm.to_dict()
        return {
            "gmm": gmm,
            "kernel": {"type": "rbf", "lengthscale": self.lengthscale},
            "jitter": self.jitter,
            "pool_size": self.pool_size,
            "max_samples": self.max_samples,
            "methods": list(self.methods),
            "seeds": list(self.seeds),
            "function_family": self.function_family,
            "num_functions": self.num_functions,
            "output_dir": self.output_dir,
            "record_timing": self.record_timing,
            "weight_checkpoints": list(self.weight_checkpoints),
            "bench": {"sizes": list(self.bench.sizes), "repeats": self.bench.repeats, "batch": self.bench.batch},
        }

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        _reject_unknown(data, _TOP_KEYS, "config")
        base_dir = Path(base_dir or ".")

        source = data.get("gmm", "default")
        try:
            if source == "default":
                gmm = default_gmm()
            elif isinstance(source, str):
                path = Path(source)
                gmm = GaussianMixture.load(path if path.is_absolute() else base_dir / path)
            elif isinstance(source, dict):
                gmm = GaussianMixture.from_dict(source)
            else:
                raise ConfigError("gmm must be 'default', a path, or an inline mixture")
        except InputError as exc:
            raise ConfigError(f"gmm: {exc}") from exc

        kernel = data.get("kernel", {})
        if not isinstance(kernel, dict):
            raise ConfigError("kernel must be an object")
        _reject_unknown(kernel, _KERNEL_KEYS, "kernel")
        if kernel.get("type", "rbf") != "rbf":
            raise ConfigError(f"unsupported kernel type {kernel.get('type')!r}")
        ls = kernel.get("lengthscale", "auto")
        lengthscale = default_lengthscale(gmm) if ls == "auto" else _positive_float(ls, "kernel.lengthscale")

        bench = data.get("bench", {})
        if not isinstance(bench, dict):
            raise ConfigError("bench must be an object")
        _reject_unknown(bench, _BENCH_KEYS, "bench")
        bench_cfg = BenchConfig(
            sizes=tuple(_positive_int(v, "bench.sizes") for v in bench.get("sizes", BenchConfig.sizes)),
            repeats=_positive_int(bench.get("repeats", BenchConfig.repeats), "bench.repeats"),
            batch=_positive_int(bench.get("batch", BenchConfig.batch), "bench.batch"),
        )

        methods = tuple(data.get("methods", METHODS))
        for m in methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; expected one of {METHODS}")
        if not methods or len(set(methods)) != len(methods):
            raise ConfigError("methods must be a non-empty list without repeats")

        seeds = data.get("seeds", [0])
        if not isinstance(seeds, list) or not seeds:
            raise ConfigError("seeds must be a non-empty list")
        seeds = tuple(_nonnegative_int(s, "seeds") for s in seeds)
        if len(set(seeds)) != len(seeds):
            raise ConfigError("seeds must be distinct")

        family = data.get("function_family", "none")
        if family not in FAMILIES:
            raise ConfigError(f"function_family must be one of {FAMILIES}")

        pool_size = _positive_int(data.get("pool_size", 10000), "pool_size")
        max_samples = _positive_int(data.get("max_samples", 200), "max_samples")
        if pool_size < max_samples:
            raise ConfigError("pool_size must be at least max_samples")

        jitter = data.get("jitter", DEFAULT_JITTER)
        if not isinstance(jitter, (int, float)) or isinstance(jitter, bool) or jitter < 0:
            raise ConfigError("jitter must be a nonnegative number")

        record_timing = data.get("record_timing", False)
        if not isinstance(record_timing, bool):
            raise ConfigError("record_timing must be a boolean")
        output_dir = data.get("output_dir", "results")
        if not isinstance(output_dir, str):
            raise ConfigError("output_dir must be a string")

        return cls(
            gmm=gmm,
            lengthscale=lengthscale,
            gmm_source=source if isinstance(source, str) else "inline",
            jitter=float(jitter),
            pool_size=pool_size,
            max_samples=max_samples,
            methods=methods,
            seeds=seeds,
            function_family=family,
            num_functions=_positive_int(data.get("num_functions", 250), "num_functions"),
            output_dir=output_dir,
            record_timing=record_timing,
            weight_checkpoints=tuple(_positive_int(v, "weight_checkpoints") for v in data.get("weight_checkpoints", [20, 100])),
            bench=bench_cfg,
        )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data, base_dir=path.parent)


def _reject_unknown(data: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")


def _positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return value


def _nonnegative_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ConfigError(f"{name} must be a nonnegative integer, got {value!r}")
    return value


def _positive_float(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise ConfigError(f"{name} must be a positive number, got {value!r}")
    return float(value)
