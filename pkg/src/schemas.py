from enum import Enum
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.conf.config import settings


class Family(str, Enum):
    linear_phi_split = 'linear-phi-split'
    linear_reduced = 'linear-reduced'
    linear_rm = 'linear-rm'
    high_phi_split = 'high-phi-split'
    high_phi_nn = 'high-phi-nn'
    high_reduced = 'high-reduced'
    high_psi = 'high-psi'
    rt_plus = 'rt-plus'

    @property
    def linear(self) -> bool:
        return self in (Family.linear_phi_split, Family.linear_reduced, Family.linear_rm)

    @property
    def min_k(self) -> int:
        if self in (Family.high_phi_nn, Family.high_reduced, Family.high_psi):
            return 2
        return 1

    def admissible(self, k: int) -> bool:
        return k == 1 if self.linear else k >= self.min_k


class Method(str, Enum):
    stabilized = 'stabilized'
    hybrid = 'hybrid'
    linear_pair = 'linear-pair'


class Command(str, Enum):
    validate = 'validate'
    infsup = 'infsup'
    solve = 'solve'
    convergence = 'convergence'


class Pair(str, Enum):
    psi = 'psi'
    reduced = 'reduced'
    nn = 'nn'
    split = 'split'
    split_p0 = 'split-p0'
    linear_reduced = 'linear-reduced'
    rm = 'rm'
    plain = 'plain'

    @property
    def linear(self) -> bool:
        return self in (Pair.split, Pair.split_p0, Pair.linear_reduced, Pair.rm)

    @property
    def min_k(self) -> int:
        return 2 if self in (Pair.psi, Pair.reduced, Pair.nn) else 1


class DivVariant(str, Enum):
    exact = 'exact'
    projected = 'projected'


class MeshSpec(BaseModel):
    box: Optional[int] = Field(default=None, ge=1)
    file: Optional[Path] = None

    @model_validator(mode='after')
    def one_source(self) -> 'MeshSpec':
        if self.box is not None and self.file is not None:
            raise ValueError('give either a box size or a mesh file, not both')
        return self


class Tolerances(BaseModel):
    rank_tol: Optional[float] = Field(default=None, gt=0)
    jump_tol: Optional[float] = Field(default=None, gt=0)
    trace_tol: Optional[float] = Field(default=None, gt=0)
    rm_tol: Optional[float] = Field(default=None, gt=0)
    constraint_tol: Optional[float] = Field(default=None, gt=0)
    cond_max: Optional[float] = Field(default=None, gt=1)


class RunConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True, use_enum_values=False)

    command: Command
    d: int = Field(default=2, ge=2, le=3)
    k: int = Field(default=2, ge=1, le=4)
    family: Optional[Family] = None
    method: Method = Method.hybrid
    pair: Optional[Pair] = None
    mu: float = Field(default=1.0, gt=0)
    lam: float = Field(default=1.0, ge=0, alias='lambda')
    mesh: MeshSpec = Field(default_factory=MeshSpec)
    levels: int = Field(default=3, ge=1, le=8)
    out: Path = Field(default_factory=lambda: Path(settings.output_dir))
    tolerances: Tolerances = Field(default_factory=Tolerances)

    @model_validator(mode='after')
    def admissible(self) -> 'RunConfig':
        solving = self.command in (Command.solve, Command.convergence)
        family = self.family or default_family(self.method if solving else None, self.k)
        if not family.admissible(self.k):
            raise ValueError(f'family {family.value} is not defined for k={self.k}')
        if solving:
            if self.method in (Method.stabilized, Method.hybrid) and self.k < 2:
                raise ValueError(f'method {self.method.value} needs k >= 2')
            if self.method == Method.linear_pair and not family.linear:
                raise ValueError('linear-pair needs a linear family')
            if self.method == Method.stabilized and family != Family.high_reduced:
                raise ValueError('the stabilized method uses the high-reduced family')
            if self.method == Method.hybrid and family != Family.high_psi:
                raise ValueError('the hybrid method uses the high-psi family')
            if self.method == Method.linear_pair and self.pair is not None and not self.pair.linear:
                raise ValueError(f'linear-pair needs a linear pair, got {self.pair.value}')
        if self.pair is not None and self.k < self.pair.min_k:
            raise ValueError(f'pair {self.pair.value} needs k >= {self.pair.min_k}, got k={self.k}')
        self.family = family
        return self


def default_family(method: Optional[Method], k: int) -> Family:
    if method == Method.stabilized:
        return Family.high_reduced
    if method == Method.linear_pair or k == 1:
        return Family.linear_phi_split
    return Family.high_psi


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ''
    value: Optional[float] = None


class DimensionReport(BaseModel):
    family: Family
    d: int
    k: int
    expected: int
    constructed: int
    generators: int
    rank: int

    @property
    def passed(self) -> bool:
        return self.expected == self.constructed == self.rank


class RankReport(BaseModel):
    label: str
    d: int
    k: int
    rank: int
    expected: int
    rm_residual: float = 0.0

    @property
    def passed(self) -> bool:
        return self.rank == self.expected


class CertificateReport(BaseModel):
    family: Family
    d: int
    k: int
    size: int
    condition: float
    min_singular: float


class InfSupReport(BaseModel):
    pair: Pair
    variant: DivVariant = DivVariant.exact
    norms: str = 'H(div) x L2'
    sizes: List[int] = []
    h: List[float] = []
    beta: List[float] = []
    ratio: float = 1.0
    bounded: bool = True
    kernel: Optional[List[float]] = None


class RateRow(BaseModel):
    level: int
    h: float
    dofs: int
    err_sigma_L2: float
    err_sigma_Hdiv: float
    err_u_L2: float
    err_super_1h: Optional[float] = None
    err_post_eps: Optional[float] = None
    rates: dict = {}


class RateTable(BaseModel):
    method: Method
    family: Family
    d: int
    k: int
    rows: List[RateRow] = []


class SolveReport(BaseModel):
    method: Method
    family: Family
    dofs: int
    residual: float
    min_pivot: Optional[float] = None
    errors: dict = {}


class ValidationReport(BaseModel):
    d: int
    k: int
    family: Family
    seed: int
    checks: List[CheckResult] = []

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)
