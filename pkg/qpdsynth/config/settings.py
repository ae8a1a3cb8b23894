import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Type, TypeVar

from click import MissingParameter, UsageError
from typer import BadParameter

from ..core.decomposition import BMConfig
from ..core.gates import ARITY
from ..core.noise import NoiseMode, NoiseModel
from ..core.stinespring import StinespringConfig
from ..exceptions.base import BaseError
from ..exceptions.config import ConfigError
from ..utils.utils import load_json_file
from .tolerances import Tolerances

T = TypeVar("T")

BASES = ("standard", "pauli")


def _section(cls: Type[T], data: Any, hint: str) -> T:
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise BadParameter(message=f"Section '{hint}' must be a JSON object.", param_hint=f"'{hint}'")
    known = {item.name for item in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise BadParameter(message=f"Unknown keys in '{hint}': {sorted(unknown)}.", param_hint=f"'{hint}'")
    return cls(**data)


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, Path):
        return str(value)
    return value


@dataclass
class GateConfig:
    name: str = "CNOT"
    angle: Optional[float] = None

    def validate(self, hint: str = "target") -> None:
        if not self.name:
            raise MissingParameter(param_hint=f"'{hint}.name'", param_type="option")
        key = self.name.upper()
        if key not in ARITY or key == "P0":
            raise BadParameter(message=f"Unknown target gate '{self.name}'.", param_hint=f"'{hint}.name'")
        if key in ("RX", "RY", "RZ") and self.angle is None:
            raise MissingParameter(param_hint=f"'{hint}.angle'", param_type="option")


@dataclass
class NoiseConfig:
    p2: float = 0.0
    p1: Optional[float] = None
    gamma_ad: float = 0.0
    gamma_pd: float = 0.0
    measurement_error: float = 0.0
    mode: str = NoiseMode.PER_GATE.value

    def validate(self) -> None:
        if self.mode not in {m.value for m in NoiseMode}:
            raise BadParameter(message=f"Unknown noise mode '{self.mode}'.", param_hint="'noise.mode'")
        try:
            self.model()
        except BaseError as e:
            raise BadParameter(message=str(e), param_hint="'noise'")

    def model(self) -> NoiseModel:
        return NoiseModel(self.p2, self.p1, self.gamma_ad, self.gamma_pd, self.measurement_error)


@dataclass
class TradeoffSection:
    basis: str = "standard"
    budgets: Optional[List[float]] = None
    enforce_cp: bool = False
    enforce_tp: bool = False


@dataclass
class DecomposeSection:
    basis: str = "standard"
    method: str = "exact"
    budget: Optional[float] = None
    enforce_cp: bool = False
    enforce_tp: bool = False


@dataclass
class StinespringSection:
    threshold: float = 1e-7
    max_iterations: int = 15
    rank: int = 2
    depth: Optional[int] = None
    fit_restarts: int = 5
    bm: Dict[str, Any] = field(default_factory=dict)

    def build(self, seed: int) -> StinespringConfig:
        data = {key: value for key, value in asdict(self).items() if key != "bm"}
        try:
            bm = BMConfig.from_dict({"rank": self.rank, **self.bm})
            config = StinespringConfig(bm=bm, seed=seed, **data)
            config.validate()
        except ConfigError as e:
            raise BadParameter(message=e.message, param_hint="'stinespring'")
        return config


@dataclass
class SampleSection:
    basis: str = "pauli"
    shots: int = 100_000
    mode: str = "expectation"
    observable: str = "Z"
    state: str = "0"
    gates: List[Dict[str, Any]] = field(default_factory=list)


@dataclass
class BudgetSection:
    gates: List[Dict[str, Any]] = field(default_factory=lambda: [{"name": "RY", "angle": 0.5}, {"name": "CNOT"}])
    totals: List[float] = field(default_factory=list)
    basis: str = "standard"


@dataclass
class DiamondSection:
    second: Optional[Dict[str, Any]] = None
    formulation: str = "dual"


@dataclass
class VariationalSection:
    n_qubits: int = 3
    depths: List[int] = field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    restarts: int = 5
    unitary_seed: int = 0


@dataclass
class RunConfig:
    """Merged run configuration: defaults, then the JSON file, then command-line flags."""

    target: GateConfig = field(default_factory=GateConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    tradeoff: TradeoffSection = field(default_factory=TradeoffSection)
    decompose: DecomposeSection = field(default_factory=DecomposeSection)
    stinespring: StinespringSection = field(default_factory=StinespringSection)
    sample: SampleSection = field(default_factory=SampleSection)
    budget: BudgetSection = field(default_factory=BudgetSection)
    diamond: DiamondSection = field(default_factory=DiamondSection)
    variational: VariationalSection = field(default_factory=VariationalSection)
    seed: int = 0
    jobs: int = 1
    out: Path = Path("qpd_output")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        known = {item.name for item in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise BadParameter(message=f"Unknown configuration keys: {sorted(unknown)}.", param_hint="'--config'")
        return cls(
            target=_section(GateConfig, data.get("target"), "target"),
            noise=_section(NoiseConfig, data.get("noise"), "noise"),
            tolerances=Tolerances.from_dict(data.get("tolerances") or {}),
            tradeoff=_section(TradeoffSection, data.get("tradeoff"), "tradeoff"),
            decompose=_section(DecomposeSection, data.get("decompose"), "decompose"),
            stinespring=_section(StinespringSection, data.get("stinespring"), "stinespring"),
            sample=_section(SampleSection, data.get("sample"), "sample"),
            budget=_section(BudgetSection, data.get("budget"), "budget"),
            diamond=_section(DiamondSection, data.get("diamond"), "diamond"),
            variational=_section(VariationalSection, data.get("variational"), "variational"),
            seed=int(data.get("seed", 0)),
            jobs=int(data.get("jobs", 1)),
            out=Path(data.get("out", "qpd_output")),
        )

    @classmethod
    def load(
        cls,
        path: Optional[Path] = None,
        seed: Optional[int] = None,
        jobs: Optional[int] = None,
        out: Optional[Path] = None,
    ) -> "RunConfig":
        data: Dict[str, Any] = {}
        if path is not None:
            if not path.is_file():
                raise BadParameter(
                    message=f"The configuration file '{path}' does not exist.",
                    param_hint="'--config' / '-c'",
                )
            data = load_json_file(str(path))
            if not isinstance(data, dict):
                raise ConfigError(f"The file '{path.name}' must hold a JSON object")
        overrides = {"seed": seed, "jobs": jobs, "out": out}
        data.update({key: value for key, value in overrides.items() if value is not None})
        config = cls.from_dict(data)
        config.validate()
        return config

    def validate(self) -> None:
        self.target.validate()
        self.noise.validate()
        self.tolerances.validate()
        for hint, basis in (
            ("tradeoff.basis", self.tradeoff.basis),
            ("decompose.basis", self.decompose.basis),
            ("sample.basis", self.sample.basis),
            ("budget.basis", self.budget.basis),
        ):
            if basis not in BASES:
                raise BadParameter(message=f"Unknown decomposition set '{basis}'.", param_hint=f"'{hint}'")
        if self.decompose.method not in ("exact", "approximate"):
            raise BadParameter(message=f"Unknown method '{self.decompose.method}'.", param_hint="'decompose.method'")
        if self.decompose.method == "approximate" and self.decompose.budget is None:
            raise MissingParameter(param_hint="'decompose.budget'", param_type="option")
        if self.sample.shots < 1:
            raise BadParameter(message=f"Shots must be positive: '{self.sample.shots}'.", param_hint="'sample.shots'")
        if self.sample.mode not in ("expectation", "outcome"):
            raise BadParameter(message=f"Unknown output mode '{self.sample.mode}'.", param_hint="'sample.mode'")
        if self.diamond.formulation not in ("dual", "primal", "symmetric"):
            raise BadParameter(message=f"Unknown formulation '{self.diamond.formulation}'.", param_hint="'diamond.formulation'")
        for index, gate in enumerate(self.budget.gates):
            _section(GateConfig, gate, f"budget.gates[{index}]").validate(f"budget.gates[{index}]")
        if self.diamond.second is not None:
            _section(GateConfig, self.diamond.second, "diamond.second").validate("diamond.second")
        if not 1 <= self.variational.n_qubits <= 4:
            raise BadParameter(
                message=f"Variational sweeps use 1 to 4 qubits: '{self.variational.n_qubits}'.",
                param_hint="'variational.n_qubits'",
            )
        if not self.variational.depths or min(self.variational.depths) < 1:
            raise BadParameter(message="Depths must be positive integers.", param_hint="'variational.depths'")
        if self.variational.restarts < 1:
            raise BadParameter(message="At least one restart is required.", param_hint="'variational.restarts'")
        if any(total < 1 for total in self.budget.totals):
            raise BadParameter(message="Every total γ budget must be at least 1.", param_hint="'budget.totals'")
        self.stinespring.build(self.seed)
        if self.jobs < 1:
            raise BadParameter(
                message=f"There must be at least one worker: '{self.jobs}'.",
                param_hint="'--jobs' / '-j'",
            )
        if self.out.exists() and not self.out.is_dir():
            raise UsageError(message=f"The output path '{self.out}' exists and is not a directory.")

    def to_dict(self) -> Dict[str, Any]:
        return _plain(asdict(self))

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every setting that can change results."""
        payload = {key: value for key, value in self.to_dict().items() if key not in ("jobs", "out")}
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
