from typing import Any, Dict, List, Optional, TypedDict


class ChoiPayload(TypedDict):
    n_in: int
    n_out: int
    convention: str
    re: List[List[float]]
    im: List[List[float]]


class QpdItemPayload(TypedDict):
    label: str
    a: float
    choi_ref: str


class QpdPayload(TypedDict, total=False):
    gamma: float
    residual: float
    method: str
    budget: Optional[float]
    items: List[QpdItemPayload]
    target: ChoiPayload
    chois: Dict[str, ChoiPayload]


class FinalQpdPayload(TypedDict):
    gamma: float
    delta_error: Optional[float]
    coefficients: Dict[str, float]


class ManifestPayload(TypedDict):
    status: str
    message: str
    config: Dict[str, Any]
    noise: Dict[str, Any]
    iterations: List[Dict[str, Any]]
    labels: List[str]
    final: FinalQpdPayload


class EstimatePayload(TypedDict):
    shots: int
    mean: float
    stderr: float
    abort_frac: float
    gamma_total: float
    seed: int
    mode: str
