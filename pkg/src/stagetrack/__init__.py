"""UWB stage tracking: ranging, multilateration, fusion, zones, show control."""

from .errors import (
    CoincidentPoint,
    ConfigError,
    DegenerateGeometry,
    FieldRange,
    FrameOrder,
    InsufficientAnchors,
    NegativeTof,
    NoConvergence,
    NumericalBreakdown,
    StageTrackError,
    UnknownScene,
    UnknownZone,
    Unobservable,
)
from .fusion import FilterParams, ImuSample, TrackState, predict, tilt_compensated_heading, update_position
from .geometry import Anchor, Box, CoverageGrid, DopResult, StageConfig, Vec3, coverage_map, dop
from .ranging import (
    SPEED_OF_LIGHT,
    ClockModel,
    RangeMeasurement,
    TwrExchange,
    ds_twr_distance,
    simulate_exchange,
    ss_twr_distance,
)
from .show import END, Requirement, SceneDef, SceneTransition, ShowState, force_scene, show_step
from .sim import MotionScript, NoiseModel, SimWorld, run_simulation, segment_intersects_box, sim_tick
from .solver import PositionFix, SolveOptions, multilaterate, residuals
from .wire import (
    DecodeDiagnostics,
    ImuReport,
    PositionReport,
    RangeReport,
    Status,
    decode_stream,
    encode_frame,
)
from .zones import Containment, ZoneDef, ZoneEvent, ZoneEventKind, ZoneTracker, containment, zone_step

__version__ = "0.1.0"
