"""Experiment commands: reconstruct, edit, compare, sweep, plot.

Each command expands a configuration into paired-seed per-sample runs,
assembles one RunRow per (config, sample), evaluates its documented
assertions, and renders optional trajectory SVGs.  Rows are ordered by
(config fingerprint, method, sample index) so output never depends on
completion order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..editing import GuidanceConfig, GuidanceMode, RegenStrategy, edit
from ..errors import ConfigurationError, RfeditError
from ..fields import (GaussianEpsField, GaussianModel, GaussianRFField, GaussianVPField,
                      NoiseSchedule, make_schedule, straighten)
from ..flow_core import NfeCounter, TimeGrid, ddim_invert, ddim_sample, invert, make_uniform_grid, sample
from ..metrics import alignment, consistency, default_peak, mse, psnr
from .config import ExperimentConfig
from .io import timings_csv  # noqa: F401  (re-exported for CLI/service use)
from .seeds import per_sample_seed, rng_for_sample
from .svg import PALETTE, Curve, Marker, trajectory_svg


@dataclass(frozen=True)
class AssertionOutcome:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class RunRow:
    fingerprint: str
    experiment: str
    method: str
    sample_index: int
    seed: int
    inversion: str
    strategy: str
    guidance: str
    w: float
    alpha: float
    mask_enabled: bool
    mask_fixed: bool
    hook_scale: float
    field_kind: str
    straightened: bool
    sigma: float
    n_steps: int
    k_start: int
    n_windows: int
    mse: float
    psnr: float
    consistency: float
    alignment: float
    alignment_ref: float
    roundtrip: float
    nfe: int
    guidance_norm_mean: float
    ortho_abs_max: float
    per_step_guidance_norms: tuple[float, ...]
    wall_s: float


@dataclass
class ExperimentResult:
    experiment: str
    rows: list[RunRow]
    assertions: list[AssertionOutcome]
    svgs: dict[str, str]

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)


def build_model(cfg: ExperimentConfig) -> GaussianModel:
    return GaussianModel(means={cid: np.asarray(v, dtype=float) for cid, v in cfg.means.items()},
                         sigma=cfg.sigma)


def build_schedule(cfg: ExperimentConfig) -> NoiseSchedule:
    return make_schedule(cfg.schedule_name, cfg.alpha_min)


def build_grid(cfg: ExperimentConfig, n_steps: int | None = None) -> TimeGrid:
    n = cfg.n_steps if n_steps is None else n_steps
    return make_uniform_grid(n, 0.0, 1.0, cfg.n_windows)


def build_velocity_field(cfg: ExperimentConfig, model: GaussianModel,
                         schedule: NoiseSchedule, grid: TimeGrid):
    base = GaussianRFField(model) if cfg.field_kind == "rf" else GaussianVPField(model, schedule)
    return straighten(base, grid) if cfg.straighten_field else base


def draw_source(cfg: ExperimentConfig, model: GaussianModel, rng: np.random.Generator) -> np.ndarray:
    return model.means[cfg.source] + model.sigma * rng.standard_normal(model.dim)


def edit_region_mask(model: GaussianModel, source: str, target: str) -> np.ndarray:
    """Ground-truth edit region: dimensions where the component means differ.
    Used by the consistency metric independently of the method's own gating."""
    return (np.abs(model.means[target] - model.means[source]) > 0).astype(float)


def analytic_edit_nfe(cfg: ExperimentConfig) -> int:
    """Documented evaluation plan for one edit.

    Inversion costs k_start (skipped for NSLI); per regeneration step ILI
    costs 2 (cached source branch), NSLI costs 3 (nothing cacheable), NLI
    costs 1 unguided and 2 under guidance or masking.
    """
    k = cfg.k_start
    if cfg.strategy is RegenStrategy.ILI:
        return k + 2 * k
    if cfg.strategy is RegenStrategy.NSLI:
        return 3 * k
    pure = cfg.guidance is GuidanceMode.NONE and not cfg.mask_enabled
    return k + (k if pure else 2 * k)


def _guidance_config(cfg: ExperimentConfig) -> GuidanceConfig:
    return GuidanceConfig(mode=cfg.guidance, w=cfg.w, mask_enabled=cfg.mask_enabled,
                          threshold=cfg.alpha, mask_fixed=cfg.mask_fixed)


def _make_row(cfg, experiment, method, i, z0, output, nfe, model, c_tgt, gt_mask,
              peak, g_norms=(), ortho=(), wall_s=0.0) -> RunRow:
    return RunRow(
        fingerprint=cfg.fingerprint(), experiment=experiment, method=method,
        sample_index=i, seed=per_sample_seed(cfg.require_seed(), i),
        inversion=cfg.inversion, strategy=cfg.strategy.value, guidance=cfg.guidance.value,
        w=cfg.w, alpha=cfg.alpha, mask_enabled=cfg.mask_enabled, mask_fixed=cfg.mask_fixed,
        hook_scale=cfg.hook_scale, field_kind=cfg.field_kind,
        straightened=cfg.straighten_field, sigma=cfg.sigma, n_steps=cfg.n_steps,
        k_start=cfg.k_start, n_windows=cfg.n_windows,
        mse=mse(output, z0), psnr=psnr(output, z0, peak),
        consistency=consistency(output, z0, gt_mask),
        alignment=alignment(output, model, c_tgt),
        alignment_ref=alignment(z0, model, c_tgt),
        roundtrip=float(np.linalg.norm(np.asarray(output) - np.asarray(z0))),
        nfe=nfe, guidance_norm_mean=float(np.mean(g_norms)) if g_norms else 0.0,
        ortho_abs_max=float(np.max(ortho)) if ortho else 0.0,
        per_step_guidance_norms=tuple(g_norms), wall_s=wall_s,
    )


def _edit_rows(cfg: ExperimentConfig, experiment: str, method: str,
               target_override: str | None = None) -> list[RunRow]:
    model = build_model(cfg)
    schedule = build_schedule(cfg)
    grid = build_grid(cfg)
    field = build_velocity_field(cfg, model, schedule, grid)
    c_src = model.condition(cfg.source)
    target = cfg.target if target_override is None else target_override
    c_tgt = model.condition(target)
    gt_mask = edit_region_mask(model, cfg.source, target)
    peak = default_peak(model)
    g = _guidance_config(cfg)
    master = cfg.require_seed()
    rows = []
    for i in range(cfg.samples):
        t0 = time.perf_counter()
        rng = rng_for_sample(master, i)
        z0 = draw_source(cfg, model, rng)
        res = edit(field, z0, c_src, c_tgt, cfg.strategy, g, grid, cfg.k_start,
                   schedule=schedule, seed=rng, hook_scale=cfg.hook_scale)
        rows.append(_make_row(cfg, experiment, method, i, z0, res.output, res.nfe,
                              model, c_tgt, gt_mask, peak,
                              g_norms=res.per_step_guidance_norms,
                              ortho=res.per_step_ortho_residual,
                              wall_s=time.perf_counter() - t0))
    return rows


def _nfe_assertion(rows: list[RunRow], expected: dict[str, int]) -> AssertionOutcome:
    bad = [(r.method, r.sample_index, r.nfe, expected[r.method])
           for r in rows if r.nfe != expected[r.method]]
    if bad:
        m, i, got, want = bad[0]
        return AssertionOutcome("nfe_accounting", False,
                                f"{m} sample {i}: nfe {got} != analytic {want} ({len(bad)} rows)")
    detail = "; ".join(f"{m}={n}" for m, n in sorted(expected.items()))
    return AssertionOutcome("nfe_accounting", True, detail)


def _mean(rows, method, attr):
    vals = [getattr(r, attr) for r in rows if r.method == method]
    return float(np.mean(vals)) if vals else float("nan")


def _sorted_rows(rows: list[RunRow]) -> list[RunRow]:
    return sorted(rows, key=lambda r: (r.fingerprint, r.method, r.sample_index))


def run_edit(cfg: ExperimentConfig, include_svg: bool = False) -> ExperimentResult:
    """Run the configured edit over sampled source points."""
    rows = _edit_rows(cfg, "edit", "edit")
    assertions = [_nfe_assertion(rows, {"edit": analytic_edit_nfe(cfg)})]
    svgs = {}
    if include_svg and cfg.samples > 0:
        svgs["traj_edit.svg"] = _edit_svg(cfg)
    return ExperimentResult("edit", _sorted_rows(rows), assertions, svgs)


def run_reconstruct(cfg: ExperimentConfig) -> ExperimentResult:
    """Round-trip comparison: straight-path inversion on the configured
    velocity field, one-shot DDIM inversion on the schedule field, and the
    configured identity edit, on paired samples."""
    model = build_model(cfg)
    schedule = build_schedule(cfg)
    grid = build_grid(cfg)
    field = build_velocity_field(cfg, model, schedule, grid)
    eps_field = GaussianEpsField(model, schedule)
    c_src = model.condition(cfg.source)
    gt_mask = edit_region_mask(model, cfg.source, cfg.source)
    peak = default_peak(model)
    master = cfg.require_seed()
    k = cfg.k_start

    rows: list[RunRow] = []
    for i in range(cfg.samples):
        rng = rng_for_sample(master, i)
        z0 = draw_source(cfg, model, rng)

        t0 = time.perf_counter()
        ctr = NfeCounter()
        rec = invert(field, z0, c_src, grid, k, ctr)
        out = sample(field, rec.latents[k], c_src, grid, k, ctr)[-1]
        rows.append(_make_row(cfg, "reconstruct", "perrfi", i, z0, out, ctr.count,
                              model, c_src, gt_mask, peak, wall_s=time.perf_counter() - t0))

        t0 = time.perf_counter()
        ctr = NfeCounter()
        rec = ddim_invert(eps_field, z0, c_src, grid, k, ctr)
        out = ddim_sample(eps_field, rec.latents[k], c_src, grid, k, ctr)[-1]
        rows.append(_make_row(cfg, "reconstruct", "ddim", i, z0, out, ctr.count,
                              model, c_src, gt_mask, peak, wall_s=time.perf_counter() - t0))

    id_rows = _edit_rows(cfg, "reconstruct", "identity_edit", target_override=cfg.source)
    rows.extend(id_rows)

    assertions = [_nfe_assertion(rows, {"perrfi": 2 * k, "ddim": 2 * k,
                                        "identity_edit": analytic_edit_nfe(cfg)})]
    per = np.asarray([r.roundtrip for r in rows if r.method == "perrfi"])
    ddm = np.asarray([r.roundtrip for r in rows if r.method == "ddim"])
    if per.size >= 2:
        diffs = ddm - per
        se = float(diffs.std(ddof=1) / np.sqrt(diffs.size))
        gap = float(diffs.mean())
        ok = per.mean() < ddm.mean() and gap > 2.0 * se
        assertions.append(AssertionOutcome(
            "inversion_error_ordering", bool(ok),
            f"mean roundtrip perrfi {per.mean():.3e} vs ddim {ddm.mean():.3e}, "
            f"paired gap {gap:.3e} ({gap / se if se > 0 else float('inf'):.1f} se)"))
        ident = np.asarray([r.roundtrip for r in rows if r.method == "identity_edit"])
        scale = max(float(np.linalg.norm(model.means[cfg.source])), 1.0)
        ok_id = bool(np.max(ident) / scale <= 1e-9)
        assertions.append(AssertionOutcome(
            "identity_edit_roundtrip", ok_id,
            f"max identity-edit roundtrip {np.max(ident):.3e} (rel tol 1e-9)"))
    return ExperimentResult("reconstruct", _sorted_rows(rows), assertions, {})


COMPARE_VARIANTS = ("full", "regen_nsli", "guidance_pg", "guidance_dpg_nomask", "no_hook")


def compare_variant(cfg: ExperimentConfig, name: str) -> ExperimentConfig:
    if name == "full":
        return cfg
    if name == "regen_nsli":
        return cfg.replace(strategy=RegenStrategy.NSLI)
    if name == "guidance_pg":
        return cfg.replace(guidance=GuidanceMode.PG)
    if name == "guidance_dpg_nomask":
        return cfg.replace(guidance=GuidanceMode.DPG, mask_enabled=False)
    if name == "no_hook":
        return cfg.replace(hook_scale=0.0)
    raise ConfigurationError(f"unknown compare variant {name!r}")


def run_compare(cfg: ExperimentConfig) -> ExperimentResult:
    """Paired-seed ablation matrix: strategy, guidance, masking, and hook
    variants of the configured edit, with directional assertions on the
    means."""
    rows: list[RunRow] = []
    expected: dict[str, int] = {}
    for name in COMPARE_VARIANTS:
        variant = compare_variant(cfg, name)
        rows.extend(_edit_rows(variant, "compare", name))
        expected[name] = analytic_edit_nfe(variant)

    assertions = [_nfe_assertion(rows, expected)]
    mse_of = {name: _mean(rows, name, "mse") for name in COMPARE_VARIANTS}
    align_of = {name: _mean(rows, name, "alignment") for name in COMPARE_VARIANTS}
    cons_of = {name: _mean(rows, name, "consistency") for name in COMPARE_VARIANTS}

    assertions.append(AssertionOutcome(
        "ili_beats_nsli_consistency", mse_of["full"] < mse_of["regen_nsli"],
        f"mean mse full {mse_of['full']:.4f} vs nsli {mse_of['regen_nsli']:.4f}"))
    assertions.append(AssertionOutcome(
        "dpg_beats_pg_consistency", mse_of["full"] < mse_of["guidance_pg"],
        f"mean mse full {mse_of['full']:.4f} vs pg {mse_of['guidance_pg']:.4f}"))
    gap = abs(align_of["full"] - align_of["guidance_pg"])
    bound = 0.05 * abs(align_of["guidance_pg"])
    assertions.append(AssertionOutcome(
        "dpg_vs_pg_alignment_within_5pct", gap <= bound,
        f"mean alignment dpg {align_of['full']:.4f} vs pg {align_of['guidance_pg']:.4f} "
        f"(gap {gap:.4f}, bound {bound:.4f})"))
    assertions.append(AssertionOutcome(
        "mask_improves_consistency", cons_of["full"] < cons_of["guidance_dpg_nomask"],
        f"mean edit-region-excluded mse full {cons_of['full']:.3e} vs "
        f"no-mask {cons_of['guidance_dpg_nomask']:.3e}"))
    assertions.append(AssertionOutcome(
        "hook_improves_consistency", mse_of["full"] < mse_of["no_hook"],
        f"mean mse full {mse_of['full']:.4f} vs no-hook {mse_of['no_hook']:.4f}"))
    return ExperimentResult("compare", _sorted_rows(rows), assertions, {})


SWEEP_PARAMS = ("w", "alpha", "hook_scale", "n_steps")


def sweep_variant(cfg: ExperimentConfig, param: str, value: float) -> ExperimentConfig:
    if param == "w":
        return cfg.replace(w=float(value))
    if param == "alpha":
        return cfg.replace(alpha=float(value))
    if param == "hook_scale":
        return cfg.replace(hook_scale=float(value))
    if param == "n_steps":
        n = int(value)
        if n != value or n < 1:
            raise ConfigurationError(f"n_steps sweep values must be positive integers, got {value}")
        return cfg.replace(n_steps=n, k_start=n)
    raise ConfigurationError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")


def _monotone(label: str, means: list[tuple[float, float]], decreasing: bool) -> AssertionOutcome:
    ok = all((b < a) if decreasing else (b > a)
             for (_, a), (_, b) in zip(means, means[1:]))
    arrow = "decreasing" if decreasing else "increasing"
    detail = ", ".join(f"{v:g}: {m:.4f}" for v, m in means)
    return AssertionOutcome(label, ok, f"expected strictly {arrow}: {detail}")


def run_sweep(cfg: ExperimentConfig, param: str, values: list[float]) -> ExperimentResult:
    """One row group per swept value, paired seeds, with the documented
    monotone-direction assertions on the means."""
    if param not in SWEEP_PARAMS:
        raise ConfigurationError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")
    if len(values) < 2:
        raise ConfigurationError("sweep needs at least two values")
    if len(set(values)) != len(values):
        raise ConfigurationError("sweep values must be distinct")
    ordered = sorted(values)
    rows: list[RunRow] = []
    expected: dict[str, int] = {}
    means_mse: list[tuple[float, float]] = []
    means_align: list[tuple[float, float]] = []
    for v in ordered:
        variant = sweep_variant(cfg, param, v)
        method = f"{param}={v:g}"
        group = _edit_rows(variant, "sweep", method)
        rows.extend(group)
        expected[method] = analytic_edit_nfe(variant)
        means_mse.append((v, float(np.mean([r.mse for r in group]))))
        means_align.append((v, float(np.mean([r.alignment for r in group]))))

    assertions = [_nfe_assertion(rows, expected)]
    if param == "w":
        assertions.append(_monotone("consistency_degrades_with_w", means_mse, decreasing=False))
        assertions.append(_monotone("alignment_improves_with_w", means_align, decreasing=False))
    elif param == "alpha":
        assertions.append(_monotone("consistency_improves_with_alpha", means_mse, decreasing=True))
    elif param == "hook_scale":
        assertions.append(_monotone("consistency_improves_with_hook", means_mse, decreasing=True))
    else:
        assertions.append(_monotone("consistency_improves_with_steps", means_mse, decreasing=True))
    return ExperimentResult("sweep", _sorted_rows(rows), assertions, {})


def plot_curves(cfg: ExperimentConfig, dense_steps: int = 64) -> dict[str, list[np.ndarray]]:
    """Trajectory polylines for plotting: inversion and regeneration on the
    straightened field and on the schedule-driven curved field, for up to
    three paired samples."""
    model = build_model(cfg)
    if model.dim != 2:
        raise ConfigurationError("trajectory plots need 2-D latents")
    schedule = build_schedule(cfg)
    grid = build_grid(cfg)
    straight = straighten(GaussianRFField(model), grid)
    curved = GaussianVPField(model, schedule)
    dense = make_uniform_grid(dense_steps, 0.0, 1.0, 1)
    c_src = model.condition(cfg.source)
    master = cfg.require_seed()
    out: dict[str, list[np.ndarray]] = {
        "straight_inversion": [], "straight_regen": [],
        "curved_inversion": [], "curved_regen": [],
    }
    for i in range(min(cfg.samples, 3)):
        rng = rng_for_sample(master, i)
        z0 = draw_source(cfg, model, rng)
        rec = invert(straight, z0, c_src, grid, cfg.k_start)
        out["straight_inversion"].append(rec.latents)
        out["straight_regen"].append(sample(straight, rec.latents[cfg.k_start], c_src, grid, cfg.k_start))
        rec = invert(curved, z0, c_src, dense, dense_steps)
        out["curved_inversion"].append(rec.latents)
        out["curved_regen"].append(sample(curved, rec.latents[dense_steps], c_src, dense, dense_steps))
    return out


def _component_markers(model: GaussianModel) -> list[Marker]:
    return [Marker(center=model.means[cid], radius=model.sigma, color="#555555", label=cid)
            for cid in sorted(model.means)]


def run_plot(cfg: ExperimentConfig) -> ExperimentResult:
    """Straight-vs-curved trajectory figure; an empty sample set yields a
    valid empty-axes SVG."""
    model = build_model(cfg)
    curves: list[Curve] = []
    if cfg.samples > 0:
        data = plot_curves(cfg)
        for i in range(len(data["straight_inversion"])):
            color = PALETTE[i % len(PALETTE)]
            curves.append(Curve(points=data["straight_inversion"][i], color=color, dashed=True))
            curves.append(Curve(points=data["straight_regen"][i], color=color, dashed=False))
            curves.append(Curve(points=data["curved_inversion"][i], color="#aaaaaa",
                                dashed=True, width=1.0))
            curves.append(Curve(points=data["curved_regen"][i], color="#aaaaaa",
                                dashed=False, width=1.0))
    markers = _component_markers(model) if model.dim == 2 else []
    svg = trajectory_svg(curves, markers, title="windowed straight field vs curved field")
    return ExperimentResult("plot", [], [], {"traj_fields.svg": svg})


def _edit_svg(cfg: ExperimentConfig) -> str:
    model = build_model(cfg)
    if model.dim != 2:
        raise ConfigurationError("trajectory plots need 2-D latents")
    schedule = build_schedule(cfg)
    grid = build_grid(cfg)
    field = build_velocity_field(cfg, model, schedule, grid)
    c_src = model.condition(cfg.source)
    c_tgt = model.condition(cfg.target)
    rng = rng_for_sample(cfg.require_seed(), 0)
    z0 = draw_source(cfg, model, rng)
    res = edit(field, z0, c_src, c_tgt, cfg.strategy, _guidance_config(cfg), grid,
               cfg.k_start, schedule=schedule, seed=rng, hook_scale=cfg.hook_scale)
    curves = []
    if res.record is not None:
        curves.append(Curve(points=res.record.latents, color=PALETTE[0], dashed=True))
    elif res.anchors is not None:
        curves.append(Curve(points=res.anchors.latents, color=PALETTE[0], dashed=True))
    curves.append(Curve(points=res.trajectory, color=PALETTE[1], dashed=False))
    return trajectory_svg(curves, _component_markers(model),
                          title=f"{cfg.strategy.value} + {cfg.guidance.value} edit")


def require_known_experiment(name: str) -> None:
    if name not in ("reconstruct", "edit", "compare", "sweep", "plot"):
        raise RfeditError(f"unknown experiment {name!r}")
