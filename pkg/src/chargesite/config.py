"""Pipeline configuration: defaults, profiles and the flat ``key = value`` file format.

A config file holds one setting per line, keys carrying a dotted section
prefix::

    # comment
    seed = 7
    chain.max_gap_min = 5
    congestion.windows = 07:00-09:00, 18:00-20:00

Unknown keys and malformed values raise :class:`ConfigError`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from datetime import datetime, time
from pathlib import Path
from typing import Any, Callable

from .cluster import KmeansParams
from .cost import RUSH_HOURS, CongestionPolicy
from .errors import SitingError
from .geo import DEFAULT_RINGS, FIFTH_RING, BoundingBox, DegreeScale, GeoPoint, RingConfig
from .ingest import CleaningParams
from .solve import Method, SolveParams
from .tripchain import ChainParams

ENV_VAR = "CHARGE_SITING_CONFIG"


class ConfigError(SitingError):
    pass


@dataclass(frozen=True)
class Hotspot:
    center: GeoPoint
    weight: float
    spread_km: float

    def __post_init__(self):
        if not (self.weight > 0 and self.weight != float("inf")):
            raise ValueError("hotspot weight must be positive and finite")
        if self.spread_km < 0:
            raise ValueError("hotspot spread must be non-negative")


# Rough demand centres inside the fifth ring: Tiananmen/Wangfujing, CBD,
# Zhongguancun, Wangjing, Beijing South Station, Xidan, Fengtai, plus a broad
# city-wide background.
BEIJING_HOTSPOTS = (
    Hotspot(GeoPoint(116.405, 39.912), 3.0, 2.5),
    Hotspot(GeoPoint(116.460, 39.912), 2.0, 2.0),
    Hotspot(GeoPoint(116.320, 39.982), 1.5, 2.5),
    Hotspot(GeoPoint(116.475, 39.995), 1.0, 2.5),
    Hotspot(GeoPoint(116.380, 39.866), 1.0, 2.0),
    Hotspot(GeoPoint(116.370, 39.910), 1.5, 2.0),
    Hotspot(GeoPoint(116.290, 39.855), 0.8, 3.0),
    Hotspot(GeoPoint(116.375, 39.895), 2.0, 6.0),
)


@dataclass(frozen=True)
class SynthParams:
    seed: int | None = None
    n_vehicles: int = 200
    records_per_vehicle: int = 120
    hotspots: tuple[Hotspot, ...] = BEIJING_HOTSPOTS
    start: datetime = datetime(2016, 5, 4, 0, 0, 0)
    start_spread_h: float = 24.0
    trip_median_km: float = 9.0
    trip_sigma: float = 0.55
    max_trip_km: float = 45.0
    min_trip_km: float = 0.5
    p_link: float = 0.96
    p_short_gap: float = 0.96
    speed_kmh: tuple[float, float] = (18.0, 35.0)
    detour: tuple[float, float] = (1.1, 1.35)
    bbox: BoundingBox = FIFTH_RING

    def __post_init__(self):
        if self.n_vehicles < 0 or self.records_per_vehicle < 0:
            raise ValueError("vehicle and record counts must be non-negative")
        if not self.hotspots:
            raise ValueError("at least one hotspot is required")
        if not (0 <= self.p_link <= 1 and 0 <= self.p_short_gap <= 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.detour[0] < 1 or self.detour[1] < self.detour[0]:
            raise ValueError("detour factor range must satisfy 1 <= low <= high")
        if not 0 < self.speed_kmh[0] <= self.speed_kmh[1]:
            raise ValueError("speed range must be positive")


@dataclass(frozen=True)
class ChainFilter:
    min_total_km: float = 0.0
    max_count: int | None = None
    period: str = "all"  # all | offpeak | rush

    def __post_init__(self):
        if self.period not in ("all", "offpeak", "rush"):
            raise ValueError(f"chain period must be all, offpeak or rush, got {self.period!r}")
        if self.max_count is not None and self.max_count < 1:
            raise ValueError("max_count must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int | None = None
    input_path: str = "records.csv"
    output_dir: str = "out"
    profile: str = "custom"
    scale: DegreeScale = DegreeScale()
    bbox: BoundingBox = FIFTH_RING
    rings: RingConfig = DEFAULT_RINGS
    cleaning: CleaningParams = field(default_factory=CleaningParams)
    chain: ChainParams = ChainParams()
    chain_filter: ChainFilter = ChainFilter()
    kmeans: KmeansParams = KmeansParams()
    congestion: CongestionPolicy = CongestionPolicy()
    congestion_enabled: bool = False
    solve_m: int = 30
    solve_method: Method = Method.AUTO
    exact_limit: int = 25
    comb_budget: int = 2_000_000
    node_limit: int = 10_000_000
    restarts: int = 2
    sweep_from: int = 30
    sweep_to: int = 60
    synth: SynthParams = SynthParams()
    jobs: int = 1

    def __post_init__(self):
        # the study area is also where synthetic records are drawn
        if self.synth.bbox != self.bbox:
            object.__setattr__(self, "synth", replace(self.synth, bbox=self.bbox))

    def solve_params(self, m: int | None = None, method: Method | None = None) -> SolveParams:
        return SolveParams(
            m=self.solve_m if m is None else m,
            method=self.solve_method if method is None else method,
            seed=self.seed if self.seed is not None else 0,
            exact_limit=self.exact_limit,
            comb_budget=self.comb_budget,
            node_limit=self.node_limit,
            restarts=self.restarts,
        )

    def with_seed(self, seed: int | None) -> "PipelineConfig":
        """Override the seed everywhere it is consumed."""
        if seed is None:
            return self
        return replace(self, seed=seed, kmeans=replace(self.kmeans, seed=seed),
                       synth=replace(self.synth, seed=seed))


def beijing_profile(seed: int = 20160504) -> PipelineConfig:
    """Desk-scale stand-in for the Beijing case study: 3,000 chains, 6,000 demand points, 100 sites."""
    return PipelineConfig(
        profile="beijing",
        chain_filter=ChainFilter(min_total_km=120.0, max_count=3000),
        kmeans=KmeansParams(k=100),
        synth=SynthParams(n_vehicles=560, records_per_vehicle=120),
        solve_m=30,
        sweep_from=30,
        sweep_to=60,
    ).with_seed(seed)


def tiny_profile(seed: int = 7) -> PipelineConfig:
    """About 40 demand points and 10 candidates, small enough for the exact solvers."""
    return PipelineConfig(
        profile="tiny",
        chain_filter=ChainFilter(min_total_km=0.0, max_count=20),
        kmeans=KmeansParams(k=10),
        synth=SynthParams(n_vehicles=6, records_per_vehicle=40),
        solve_m=3,
        solve_method=Method.EXACT,
        sweep_from=1,
        sweep_to=10,
    ).with_seed(seed)


PROFILES: dict[str, Callable[..., PipelineConfig]] = {
    "custom": PipelineConfig, "beijing": beijing_profile, "tiny": tiny_profile}


# ---------------------------------------------------------------------------
# flat key = value format
# ---------------------------------------------------------------------------

def _parse_windows(text: str) -> tuple[tuple[time, time], ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        start, _, end = part.partition("-")
        out.append((time.fromisoformat(start.strip()), time.fromisoformat(end.strip())))
    return tuple(out)


def _format_windows(windows) -> str:
    return ", ".join(f"{a.strftime('%H:%M')}-{b.strftime('%H:%M')}" for a, b in windows)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none") else int(text)


def _box_keys(prefix: str, attr_path: tuple[str, ...]):
    return {f"{prefix}.{edge}": (attr_path + (edge,), float)
            for edge in ("lon_min", "lon_max", "lat_min", "lat_max")}


# key -> (attribute path inside PipelineConfig, parser)
_KEYS: dict[str, tuple[tuple[str, ...], Callable[[str], Any]]] = {
    "seed": (("seed",), _opt_int),
    "profile": (("profile",), str),
    "jobs": (("jobs",), int),
    "paths.input": (("input_path",), str),
    "paths.output_dir": (("output_dir",), str),
    "scale.lat_km": (("scale", "lat_km"), float),
    "scale.lon_km": (("scale", "lon_km"), float),
    **_box_keys("bbox", ("bbox",)),
    **_box_keys("rings.ring3", ("rings", "ring3")),
    **_box_keys("rings.ring4", ("rings", "ring4")),
    "clean.max_silence_min": (("cleaning", "max_silence_min"), float),
    **_box_keys("clean.sanity_box", ("cleaning", "sanity_box")),
    "chain.max_gap_min": (("chain", "max_gap_min"), float),
    "chain.max_link_km": (("chain", "max_link_km"), float),
    "chain.range_cap_km": (("chain", "range_cap_km"), float),
    "chain.min_total_km": (("chain_filter", "min_total_km"), float),
    "chain.max_count": (("chain_filter", "max_count"), _opt_int),
    "chain.period": (("chain_filter", "period"), str),
    "kmeans.k": (("kmeans", "k"), int),
    "kmeans.max_iters": (("kmeans", "max_iters"), int),
    "kmeans.tol": (("kmeans", "tol"), float),
    "congestion.enabled": (("congestion_enabled",), _parse_bool),
    "congestion.windows": (("congestion", "windows"), _parse_windows),
    "congestion.sigma_inner3": (("congestion", "sigma_inner3"), float),
    "congestion.sigma_ring34": (("congestion", "sigma_ring34"), float),
    "congestion.sigma_other": (("congestion", "sigma_other"), float),
    "solve.m": (("solve_m",), int),
    "solve.method": (("solve_method",), Method),
    "solve.exact_limit": (("exact_limit",), int),
    "solve.comb_budget": (("comb_budget",), int),
    "solve.node_limit": (("node_limit",), int),
    "solve.restarts": (("restarts",), int),
    "sweep.from": (("sweep_from",), int),
    "sweep.to": (("sweep_to",), int),
    "synth.n_vehicles": (("synth", "n_vehicles"), int),
    "synth.records_per_vehicle": (("synth", "records_per_vehicle"), int),
    "synth.start": (("synth", "start"), lambda s: datetime.strptime(s.strip(), "%Y%m%d %H:%M:%S")),
    "synth.start_spread_h": (("synth", "start_spread_h"), float),
    "synth.trip_median_km": (("synth", "trip_median_km"), float),
    "synth.trip_sigma": (("synth", "trip_sigma"), float),
    "synth.max_trip_km": (("synth", "max_trip_km"), float),
    "synth.min_trip_km": (("synth", "min_trip_km"), float),
    "synth.p_link": (("synth", "p_link"), float),
    "synth.p_short_gap": (("synth", "p_short_gap"), float),
}


def _apply(obj, tree: dict):
    """Replace nested dataclass fields so that each object is rebuilt (and validated) once."""
    changes = {k: _apply(getattr(obj, k), v) if isinstance(v, dict) else v for k, v in tree.items()}
    return replace(obj, **changes)


def parse_config(text: str, source: str = "<config>") -> PipelineConfig:
    """Build a config from flat ``key = value`` text.

    A ``profile`` key, if present, selects the base defaults (``beijing`` or
    ``tiny``) before the remaining keys are applied.
    """
    cfg = PipelineConfig()
    tree: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        if key == "profile":
            if value not in PROFILES:
                raise ConfigError(f"{source}:{lineno}: unknown profile '{value}'")
            cfg = PROFILES[value]()
        path, conv = _KEYS[key]
        try:
            parsed = conv(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
        node = tree
        for attr in path[:-1]:
            node = node.setdefault(attr, {})
        node[path[-1]] = parsed
    try:
        cfg = _apply(cfg, tree)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: invalid configuration: {exc}") from exc
    if "seed" in tree:
        seed = tree["seed"]
        cfg = cfg.with_seed(seed) if seed is not None else replace(
            cfg, kmeans=replace(cfg.kmeans, seed=None), synth=replace(cfg.synth, seed=None))
    validate(cfg)
    return cfg


def validate(cfg: PipelineConfig) -> None:
    if cfg.jobs < 1:
        raise ConfigError("jobs must be at least 1")
    if cfg.solve_m < 1:
        raise ConfigError("solve.m must satisfy 1 <= m <= |J|")
    if cfg.kmeans.k < cfg.solve_m:
        raise ConfigError(f"solve.m = {cfg.solve_m} exceeds kmeans.k = {cfg.kmeans.k}; need 1 <= m <= |J|")
    if not 1 <= cfg.sweep_from <= cfg.sweep_to:
        raise ConfigError("sweep range must satisfy 1 <= from <= to")


def load_config(path: str | os.PathLike | None = None) -> PipelineConfig:
    """Read a config file; fall back to ``$CHARGE_SITING_CONFIG``, then built-in defaults.

    Relative paths inside the file resolve against the file's directory.
    """
    if path is None:
        path = os.environ.get(ENV_VAR)
    if path is None:
        return PipelineConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    cfg = parse_config(text, str(p))
    base = p.resolve().parent
    return replace(cfg, input_path=os.path.normpath(base / cfg.input_path),
                   output_dir=os.path.normpath(base / cfg.output_dir))


def dump_config(cfg: PipelineConfig) -> str:
    """Render every recognised key with its current value."""
    lines = []
    for key, (path, _) in _KEYS.items():
        obj = cfg
        for attr in path:
            obj = getattr(obj, attr)
        if key == "congestion.windows":
            value = _format_windows(obj)
        elif isinstance(obj, Method):
            value = obj.value
        elif isinstance(obj, bool):
            value = str(obj).lower()
        elif isinstance(obj, datetime):
            value = obj.strftime("%Y%m%d %H:%M:%S")
        elif obj is None:
            value = "none"
        else:
            value = str(obj)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"

