"""Request/response models for the benchmark service.

Factor lists travel as comma-separated strings ("camera,light") with
"none" meaning no randomization, matching the CLI flags one-to-one.
"""

from typing import Dict, List, Optional

from pydantic import BaseModel


class GenerateRequest(BaseModel):
    task: str
    out: str
    factors: str = "none"
    episodes: int = 200
    seed: int = 0
    config: Optional[str] = None  # path to a YAML randomization config
    workers: Optional[int] = None


class GenerateResponse(BaseModel):
    path: str
    task: str
    factors: List[str]
    episodes: int
    attempts: int
    success_rate: float
    failures: Dict[str, int]
    content_hash: str


class TrainRequest(BaseModel):
    dataset: str
    out: str
    seed: int = 0
    epochs: Optional[int] = None


class TrainResponse(BaseModel):
    checkpoint: str
    task: str
    train_factors: List[str]
    episodes: int
    pairs: int
    epochs: int
    initial_loss: float
    final_loss: float
    holdout_loss: Optional[float] = None


class EvalRequest(BaseModel):
    checkpoint: str
    factors: str = "none"
    rollouts: int = 50
    seed: int = 0
    task: Optional[str] = None
    out: Optional[str] = None
    config: Optional[str] = None
    max_steps: int = 200


class Cell(BaseModel):
    task: str
    train_factors: str
    eval_factor: str
    rollouts: int
    successes: int
    rate: Optional[float] = None
    diagonal: bool = False
    note: str = ""


class EvalResponse(BaseModel):
    cells: List[Cell]
    csv_path: Optional[str] = None
    skipped: int = 0
    markdown: str = ""


class AblationRequest(BaseModel):
    checkpoints: Dict[str, str]  # regime label -> checkpoint path
    eval_factors: List[str]
    rollouts: int = 50
    seed: int = 0
    out: Optional[str] = None
    task: Optional[str] = None
    config: Optional[str] = None
    max_steps: int = 200


class StatsResponse(BaseModel):
    task: str
    factors: List[str]
    master_seed: int
    attempts: int
    generation_success_rate: float
    content_hash: str
    stats: dict


class HealthResponse(BaseModel):
    status: str
    version: str
