from pydantic import BaseModel


class TraceRow(BaseModel):
    round: int
    step: int
    beta: float
    lagrangian: float
    expected_g: float
    entropy: float
    best_g: float
    best_x: list[int]
    modal_x: list[int]


class RunSummary(BaseModel):
    algorithm: str
    best_x: list[int]
    best_g: float
    final_q: list[list[float]]
    rounds: int
    evaluations: int
    seconds: float
