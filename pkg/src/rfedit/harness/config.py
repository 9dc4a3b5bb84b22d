"""Flat key-value experiment configuration with dotted sections.

Format: one ``section.key = value`` per line, ``#`` comments, blank lines
ignored.  Unknown keys are rejected.  Vectors are comma-separated floats.

Schema (defaults in parentheses):

    model.sigma = float > 0                     (1.0)
    model.means.<id> = comma-separated floats   (src = -2,0 and tgt = 2,0)
    field.kind = rf | vp                        (rf)
    field.schedule = cosine | linear            (cosine)
    field.alpha_min = float in (0,1)            (1e-4)
    field.windows = int >= 1                    (4)
    field.straighten = true | false             (true)
    field.hook_scale = float >= 0               (0.4)
    grid.n_steps = int >= 1                     (4)
    grid.k_start = int                          (n_steps)
    method.inversion = perrfi | ddim            (perrfi)
    method.strategy = ili | nsli | nli          (ili)
    method.guidance = dpg | pg | none           (dpg)
    method.w = float >= 0                       (2.5)
    method.alpha = float in [0,1]               (0.4)
    method.mask = true | false                  (true)
    method.mask_fixed = true | false            (false)
    method.source = condition id                (src)
    method.target = condition id                (tgt)
    run.seed = non-negative int                 (unset; mandatory at run time)
    run.samples = int >= 0                      (128)
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

from ..editing import GuidanceMode, RegenStrategy
from ..errors import ConfigurationError

_DEFAULT_MEANS = {"src": (-2.0, 0.0), "tgt": (2.0, 0.0)}


@dataclass(frozen=True)
class ExperimentConfig:
    means: dict[str, tuple[float, ...]]
    sigma: float = 1.0
    field_kind: str = "rf"
    schedule_name: str = "cosine"
    alpha_min: float = 1e-4
    n_windows: int = 4
    straighten_field: bool = True
    hook_scale: float = 0.4
    n_steps: int = 4
    k_start: int = 4
    inversion: str = "perrfi"
    strategy: RegenStrategy = RegenStrategy.ILI
    guidance: GuidanceMode = GuidanceMode.DPG
    w: float = 2.5
    alpha: float = 0.4
    mask_enabled: bool = True
    mask_fixed: bool = False
    source: str = "src"
    target: str = "tgt"
    seed: int | None = None
    samples: int = 128

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigurationError("no seed: set run.seed in the config or pass --seed")
        return self.seed

    def canonical_lines(self) -> list[str]:
        """Normalized key=value dump of the effective configuration."""
        lines = [f"model.sigma = {self.sigma!r}"]
        for cid in sorted(self.means):
            vec = ", ".join(repr(v) for v in self.means[cid])
            lines.append(f"model.means.{cid} = {vec}")
        lines += [
            f"field.kind = {self.field_kind}",
            f"field.schedule = {self.schedule_name}",
            f"field.alpha_min = {self.alpha_min!r}",
            f"field.windows = {self.n_windows}",
            f"field.straighten = {str(self.straighten_field).lower()}",
            f"field.hook_scale = {self.hook_scale!r}",
            f"grid.n_steps = {self.n_steps}",
            f"grid.k_start = {self.k_start}",
            f"method.inversion = {self.inversion}",
            f"method.strategy = {self.strategy.value}",
            f"method.guidance = {self.guidance.value}",
            f"method.w = {self.w!r}",
            f"method.alpha = {self.alpha!r}",
            f"method.mask = {str(self.mask_enabled).lower()}",
            f"method.mask_fixed = {str(self.mask_fixed).lower()}",
            f"method.source = {self.source}",
            f"method.target = {self.target}",
            f"run.seed = {self.seed}",
            f"run.samples = {self.samples}",
        ]
        return lines

    def fingerprint(self) -> str:
        digest = hashlib.sha256("\n".join(self.canonical_lines()).encode()).hexdigest()
        return digest[:12]


def _parse_bool(key: str, raw: str) -> bool:
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    raise ConfigurationError(f"{key}: expected true/false, got {raw!r}")


def _parse_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigurationError(f"{key}: expected a number, got {raw!r}") from None


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigurationError(f"{key}: expected an integer, got {raw!r}") from None


def _parse_vector(key: str, raw: str) -> tuple[float, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigurationError(f"{key}: empty vector")
    return tuple(_parse_float(key, p) for p in parts)


def parse_config(text: str) -> ExperimentConfig:
    values: dict[str, str] = {}
    means: dict[str, tuple[float, ...]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key.startswith("model.means."):
            cid = key[len("model.means."):]
            if not cid:
                raise ConfigurationError(f"line {lineno}: empty condition id")
            if cid in means:
                raise ConfigurationError(f"line {lineno}: duplicate mean for {cid!r}")
            means[cid] = _parse_vector(key, raw)
            continue
        if key in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        values[key] = raw

    known = {
        "model.sigma", "field.kind", "field.schedule", "field.alpha_min",
        "field.windows", "field.straighten", "field.hook_scale",
        "grid.n_steps", "grid.k_start", "method.inversion", "method.strategy",
        "method.guidance", "method.w", "method.alpha", "method.mask",
        "method.mask_fixed", "method.source", "method.target",
        "run.seed", "run.samples",
    }
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")

    cfg = ExperimentConfig(means=means or dict(_DEFAULT_MEANS))
    if "model.sigma" in values:
        cfg = cfg.replace(sigma=_parse_float("model.sigma", values["model.sigma"]))
    if "field.kind" in values:
        kind = values["field.kind"]
        if kind not in ("rf", "vp"):
            raise ConfigurationError(f"field.kind must be rf or vp, got {kind!r}")
        cfg = cfg.replace(field_kind=kind)
    if "field.schedule" in values:
        cfg = cfg.replace(schedule_name=values["field.schedule"])
    if "field.alpha_min" in values:
        cfg = cfg.replace(alpha_min=_parse_float("field.alpha_min", values["field.alpha_min"]))
    if "field.windows" in values:
        cfg = cfg.replace(n_windows=_parse_int("field.windows", values["field.windows"]))
    if "field.straighten" in values:
        cfg = cfg.replace(straighten_field=_parse_bool("field.straighten", values["field.straighten"]))
    if "field.hook_scale" in values:
        cfg = cfg.replace(hook_scale=_parse_float("field.hook_scale", values["field.hook_scale"]))
    if "grid.n_steps" in values:
        cfg = cfg.replace(n_steps=_parse_int("grid.n_steps", values["grid.n_steps"]))
    cfg = cfg.replace(k_start=cfg.n_steps)
    if "grid.k_start" in values:
        cfg = cfg.replace(k_start=_parse_int("grid.k_start", values["grid.k_start"]))
    if "method.inversion" in values:
        inv = values["method.inversion"]
        if inv not in ("perrfi", "ddim"):
            raise ConfigurationError(f"method.inversion must be perrfi or ddim, got {inv!r}")
        cfg = cfg.replace(inversion=inv)
    if "method.strategy" in values:
        try:
            cfg = cfg.replace(strategy=RegenStrategy(values["method.strategy"]))
        except ValueError:
            raise ConfigurationError(f"method.strategy must be one of ili/nsli/nli") from None
    if "method.guidance" in values:
        try:
            cfg = cfg.replace(guidance=GuidanceMode(values["method.guidance"]))
        except ValueError:
            raise ConfigurationError(f"method.guidance must be one of dpg/pg/none") from None
    if "method.w" in values:
        cfg = cfg.replace(w=_parse_float("method.w", values["method.w"]))
    if "method.alpha" in values:
        cfg = cfg.replace(alpha=_parse_float("method.alpha", values["method.alpha"]))
    if "method.mask" in values:
        cfg = cfg.replace(mask_enabled=_parse_bool("method.mask", values["method.mask"]))
    if "method.mask_fixed" in values:
        cfg = cfg.replace(mask_fixed=_parse_bool("method.mask_fixed", values["method.mask_fixed"]))
    if "method.source" in values:
        cfg = cfg.replace(source=values["method.source"])
    if "method.target" in values:
        cfg = cfg.replace(target=values["method.target"])
    if "run.seed" in values:
        seed = _parse_int("run.seed", values["run.seed"])
        if seed < 0:
            raise ConfigurationError("run.seed must be non-negative")
        cfg = cfg.replace(seed=seed)
    if "run.samples" in values:
        samples = _parse_int("run.samples", values["run.samples"])
        if samples < 0:
            raise ConfigurationError("run.samples must be non-negative")
        cfg = cfg.replace(samples=samples)

    _validate(cfg)
    return cfg


def parse_config_file(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.sigma <= 0:
        raise ConfigurationError("model.sigma must be positive")
    if not cfg.means:
        raise ConfigurationError("at least one model.means.<id> entry is required")
    dims = {len(v) for v in cfg.means.values()}
    if len(dims) != 1:
        raise ConfigurationError("all component means must share one dimension")
    for cid in (cfg.source, cfg.target):
        if cid not in cfg.means:
            raise ConfigurationError(f"condition {cid!r} has no model.means entry")
    if cfg.n_steps < 1:
        raise ConfigurationError("grid.n_steps must be >= 1")
    if not 0 <= cfg.k_start <= cfg.n_steps:
        raise ConfigurationError("grid.k_start must lie in [0, n_steps]")
    if cfg.n_windows < 1 or cfg.n_steps % cfg.n_windows != 0:
        raise ConfigurationError("grid.n_steps must be divisible by field.windows")
    if cfg.hook_scale < 0:
        raise ConfigurationError("field.hook_scale must be >= 0")
    if not 0.0 <= cfg.alpha <= 1.0:
        raise ConfigurationError("method.alpha must lie in [0, 1]")
    if cfg.w < 0:
        raise ConfigurationError("method.w must be >= 0")
    if cfg.schedule_name not in ("cosine", "linear"):
        raise ConfigurationError(f"unknown field.schedule {cfg.schedule_name!r}")
    if not 0.0 < cfg.alpha_min < 1.0:
        raise ConfigurationError("field.alpha_min must lie in (0, 1)")
