"""Linear genetic programming on a small register machine.

Programs are flat lists of instructions ``(opcode, dst, src1, src2)``. The
register file holds one slot per input feature (loaded from the pattern)
followed by the calculation registers (zeroed); register 0 is the output.
Operand codes at or above the register count address the constant pool.

Evolution is steady state: each tournament samples a few individuals from
one deme, breeds the two best and overwrites the two worst. Demes exchange
their best individual around a ring at a fixed tournament interval.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .kdd import ALL_CLASSES, Dataset, FeatureVector, largest_remainder

ADD, SUB, MUL, DIV, IFGT = range(5)
N_OPCODES = 5
OPCODE_SYMBOLS = {ADD: "+", SUB: "-", MUL: "*", DIV: "/"}

CLAMP = 1e12
DIV_EPS = 1e-12


@dataclass(frozen=True)
class Machine:
    n_inputs: int
    n_calc: int = 8
    constants: tuple[float, ...] = ()

    @property
    def n_registers(self) -> int:
        return self.n_inputs + self.n_calc

    @property
    def n_operands(self) -> int:
        return self.n_registers + len(self.constants)

    def field_sizes(self) -> tuple[int, int, int, int]:
        return (N_OPCODES, self.n_registers, self.n_operands, self.n_operands)


@dataclass(frozen=True)
class Program:
    code: np.ndarray  # (length, 4) int
    machine: Machine

    def __len__(self) -> int:
        return len(self.code)

    def validate(self, max_size: int = 256) -> None:
        if not 1 <= len(self.code) <= max_size:
            raise ValueError(f"program length {len(self.code)} outside [1, {max_size}]")
        sizes = np.asarray(self.machine.field_sizes())
        if np.any(self.code < 0) or np.any(self.code >= sizes):
            raise ValueError("instruction field out of range")

    def text(self) -> str:
        R = self.machine.n_registers

        def operand(o: int) -> str:
            return f"r{o}" if o < R else f"c{o - R}"

        lines = []
        for op, dst, a, b in self.code.tolist():
            if op == IFGT:
                lines.append(f"if {operand(a)} > {operand(b)}:")
            else:
                lines.append(f"r{dst} = {operand(a)} {OPCODE_SYMBOLS[op]} {operand(b)}")
        return "\n".join(lines) + "\n"


def effective_mask(code: np.ndarray, n_registers: int) -> np.ndarray:
    """Instructions that can influence register 0 (structural intron removal)."""
    L = len(code)
    eff = np.zeros(L, dtype=bool)
    needed = {0}
    for i in range(L - 1, -1, -1):
        op, dst, a, b = (int(v) for v in code[i])
        if op == IFGT:
            if i + 1 < L and eff[i + 1]:
                eff[i] = True
                needed.update(o for o in (a, b) if o < n_registers)
            continue
        if dst in needed:
            eff[i] = True
            guarded = i > 0 and int(code[i - 1][0]) == IFGT
            if not guarded:
                needed.discard(dst)
            needed.update(o for o in (a, b) if o < n_registers)
    return eff


def execute_batch(p: Program, X) -> np.ndarray:
    """Run ``p`` on every row of ``X``; returns register 0 per row."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return _run(p, np.ascontiguousarray(X.T))


def _run(p: Program, XT: np.ndarray) -> np.ndarray:
    m = XT.shape[1]
    mach = p.machine
    R = mach.n_registers
    n_in = min(XT.shape[0], mach.n_inputs)
    regs = np.zeros((R, m))
    regs[:n_in] = XT[:n_in]
    consts = mach.constants
    code = p.code[effective_mask(p.code, R)]
    mask = None
    for op, dst, a, b in code.tolist():
        va = regs[a] if a < R else consts[a - R]
        vb = regs[b] if b < R else consts[b - R]
        if op == IFGT:
            pred = np.broadcast_to(np.greater(va, vb), (m,))
            mask = pred if mask is None else (~mask | pred)
            continue
        if op == ADD:
            res = np.add(va, vb)
        elif op == SUB:
            res = np.subtract(va, vb)
        elif op == MUL:
            res = np.multiply(va, vb)
        else:
            vb_arr = np.broadcast_to(vb, (m,))
            small = np.abs(vb_arr) < DIV_EPS
            res = np.where(small, 1.0, np.divide(va, np.where(small, 1.0, vb_arr)))
        res = np.clip(res, -CLAMP, CLAMP)
        if mask is None:
            regs[dst] = res
        else:
            regs[dst] = np.where(mask, res, regs[dst])
            mask = None
    return regs[0].copy()


def execute(p: Program, x) -> float:
    vec = x.x if isinstance(x, FeatureVector) else x
    return float(execute_batch(p, np.asarray(vec, dtype=np.float64)[None, :])[0])


def _error(out: np.ndarray, positive: np.ndarray) -> float:
    return float(np.count_nonzero((out > 0) != positive)) / len(positive)


def fitness(p: Program, data: Dataset, target: int) -> float:
    """One-vs-rest training error: output > 0 claims ``target``."""
    if len(data) == 0:
        return 0.0
    return _error(execute_batch(p, data.X), data.y == int(target))


# --- variation ----------------------------------------------------------------

def random_program(rng: np.random.Generator, machine: Machine, length: int) -> Program:
    sizes = machine.field_sizes()
    code = np.stack([rng.integers(0, s, size=length) for s in sizes], axis=1).astype(np.int64)
    return Program(code, machine)


def crossover(a: Program, b: Program, rng: np.random.Generator, max_size: int = 256,
              cuts: tuple[int, int, int, int] | None = None) -> tuple[Program, Program]:
    """Two-point exchange of instruction segments ``a[i1:j1]`` and ``b[i2:j2]``.

    Cuts fall on instruction boundaries; each segment holds at least one
    instruction. Offspring longer than ``max_size`` lose their tail.
    """
    la, lb = len(a), len(b)
    if la == 0 or lb == 0:
        raise ValueError("crossover needs nonempty parents")
    if cuts is None:
        i1 = int(rng.integers(0, la))
        j1 = int(rng.integers(i1 + 1, la + 1))
        i2 = int(rng.integers(0, lb))
        j2 = int(rng.integers(i2 + 1, lb + 1))
    else:
        i1, j1, i2, j2 = cuts
        if not (0 <= i1 < j1 <= la and 0 <= i2 < j2 <= lb):
            raise ValueError(f"invalid cut points {cuts}")
    ca = np.concatenate([a.code[:i1], b.code[i2:j2], a.code[j1:]])[:max_size]
    cb = np.concatenate([b.code[:i2], a.code[i1:j1], b.code[j2:]])[:max_size]
    return Program(ca, a.machine), Program(cb, b.machine)


def mutate(p: Program, rng: np.random.Generator) -> Program:
    """Re-draw one field of one instruction to a different legal value."""
    sizes = p.machine.field_sizes()
    code = p.code.copy()
    i = int(rng.integers(0, len(code)))
    choices = [f for f, s in enumerate(sizes) if s > 1]
    f = choices[int(rng.integers(0, len(choices)))]
    code[i, f] = (code[i, f] + int(rng.integers(1, sizes[f]))) % sizes[f]
    return Program(code, p.machine)


# --- evolution ----------------------------------------------------------------

@dataclass(frozen=True)
class EvolutionParams:
    population_size: int = 2048
    tournament_size: int = 8
    mutation_frequency: float = 85.0  # percent
    crossover_frequency: float = 75.0  # percent
    n_demes: int = 10
    max_program_size: int = 256
    tournaments: int = 120_000
    migration_interval: int = 1000
    log_interval: int = 1000
    init_max_length: int = 20
    n_calc_registers: int = 8
    n_constants: int = 16
    stop_at_zero: bool = True

    def __post_init__(self):
        if self.n_demes < 1 or self.population_size < self.n_demes:
            raise ValueError("need at least one individual per deme")
        if self.tournament_size < 4:
            raise ValueError("tournament size must be at least 4 (two parents, two losers)")
        smallest = self.population_size // self.n_demes
        if smallest < self.tournament_size:
            raise ValueError(f"deme size {smallest} is below the tournament size")
        for name in ("mutation_frequency", "crossover_frequency"):
            v = getattr(self, name)
            if not 0 <= v <= 100:
                raise ValueError(f"{name} must be a percentage")
        if self.max_program_size < 1 or not 1 <= self.init_max_length <= self.max_program_size:
            raise ValueError("invalid program size limits")
        if self.tournaments < 0 or self.migration_interval < 1 or self.log_interval < 1:
            raise ValueError("invalid tournament schedule")


# per-class settings used for the original experiments
PAPER_PARAMS = {
    1: EvolutionParams(mutation_frequency=85, crossover_frequency=75),
    2: EvolutionParams(mutation_frequency=82, crossover_frequency=70),
    3: EvolutionParams(mutation_frequency=75, crossover_frequency=65),
    4: EvolutionParams(mutation_frequency=86, crossover_frequency=75),
    5: EvolutionParams(mutation_frequency=85, crossover_frequency=70),
}


@dataclass
class Deme:
    programs: list[Program]
    errors: np.ndarray
    rng: np.random.Generator = field(repr=False)

    def __len__(self) -> int:
        return len(self.programs)

    def lengths(self) -> np.ndarray:
        return np.fromiter((len(p) for p in self.programs), dtype=np.int64, count=len(self.programs))

    def best(self) -> int:
        return int(np.argmin(self.errors))

    def worst(self) -> int:
        return int(len(self.errors) - 1 - np.argmax(self.errors[::-1]))


class _Evaluator:
    def __init__(self, data: Dataset, target: int):
        self.XT = np.ascontiguousarray(data.X.T)
        self.positive = data.y == int(target)

    def __call__(self, p: Program) -> float:
        return _error(_run(p, self.XT), self.positive)


def tournament_step(deme: Deme, params: EvolutionParams, evaluate) -> tuple[list[int], list[Program]]:
    """One steady-state tournament; returns the replaced slots and the offspring."""
    rng = deme.rng
    T = params.tournament_size
    if len(deme) < T:
        raise ValueError("deme smaller than the tournament")
    picks = rng.choice(len(deme), size=T, replace=False)
    ranked = picks[np.argsort(deme.errors[picks], kind="stable")]
    pa, pb = deme.programs[ranked[0]], deme.programs[ranked[1]]
    if rng.random() * 100 < params.crossover_frequency:
        ca, cb = crossover(pa, pb, rng, params.max_program_size)
    else:
        ca, cb = pa, pb
    if rng.random() * 100 < params.mutation_frequency:
        ca = mutate(ca, rng)
    if rng.random() * 100 < params.mutation_frequency:
        cb = mutate(cb, rng)
    slots = [int(ranked[-1]), int(ranked[-2])]
    children = [ca, cb]
    for s, child in zip(slots, children):
        deme.programs[s] = child
        deme.errors[s] = evaluate(child)
    return slots, children


@dataclass
class EvolutionResult:
    best: Program
    best_error: float
    history: list[dict]
    tournaments_run: int

    def history_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tournament", "best_error", "mean_error", "mean_length"])
        for row in self.history:
            w.writerow([row["tournament"], repr(row["best_error"]), repr(row["mean_error"]),
                        repr(row["mean_length"])])
        return buf.getvalue()


def _deme_sizes(params: EvolutionParams) -> list[int]:
    return largest_remainder([1.0] * params.n_demes, params.population_size)


def init_demes(data: Dataset, params: EvolutionParams, seed: int, evaluate) -> tuple[list[Deme], Machine]:
    ss = np.random.SeedSequence(seed)
    const_ss, *deme_ss = ss.spawn(params.n_demes + 1)
    const_rng = np.random.default_rng(const_ss)
    machine = Machine(data.n_attributes, params.n_calc_registers,
                      tuple(float(c) for c in const_rng.uniform(-1.0, 1.0, params.n_constants)))
    demes = []
    for size, dss in zip(_deme_sizes(params), deme_ss):
        rng = np.random.default_rng(dss)
        progs = [random_program(rng, machine, int(rng.integers(1, params.init_max_length + 1)))
                 for _ in range(size)]
        demes.append(Deme(progs, np.array([evaluate(p) for p in progs]), rng))
    return demes, machine


def migrate(demes: Sequence[Deme]) -> None:
    """Ring migration: each deme's best replaces the worst of the next deme."""
    if len(demes) < 2:
        return
    migrants = [(d.programs[d.best()], float(d.errors[d.best()])) for d in demes]
    for i, (prog, err) in enumerate(migrants):
        dest = demes[(i + 1) % len(demes)]
        w = dest.worst()
        dest.programs[w] = prog
        dest.errors[w] = err


def evolve(data: Dataset, target: int, params: EvolutionParams = EvolutionParams(),
           seed: int = 0) -> EvolutionResult:
    """Evolve a one-vs-rest detector for ``target``.

    Tournament ``t`` runs in deme ``t mod n_demes``; after every
    ``migration_interval`` tournaments the demes migrate. History rows record
    the best-ever error, mean population error and mean program length.
    """
    evaluate = _Evaluator(data, target)
    demes, _ = init_demes(data, params, seed, evaluate)

    best_err = np.inf
    best_prog = None
    for d in demes:
        i = d.best()
        if d.errors[i] < best_err:
            best_err, best_prog = float(d.errors[i]), d.programs[i]

    history = []

    def record(t: int):
        errs = np.concatenate([d.errors for d in demes])
        lens = np.concatenate([d.lengths() for d in demes])
        history.append({"tournament": t, "best_error": best_err,
                        "mean_error": float(errs.mean()), "mean_length": float(lens.mean())})

    record(0)
    t = 0
    while t < params.tournaments and not (params.stop_at_zero and best_err == 0.0):
        deme = demes[t % len(demes)]
        slots, children = tournament_step(deme, params, evaluate)
        for slot, child in zip(slots, children):
            if deme.errors[slot] < best_err:
                best_err, best_prog = float(deme.errors[slot]), child
        t += 1
        if t % params.migration_interval == 0:
            migrate(demes)
        if t % params.log_interval == 0:
            record(t)
    if history[-1]["tournament"] != t:
        record(t)
    return EvolutionResult(best_prog, best_err, history, t)



# --- five-detector classifier -------------------------------------------------

def program_to_dict(p: Program) -> dict:
    return {"format": "softids/lgp-program", "version": 1,
            "machine": {"n_inputs": p.machine.n_inputs, "n_calc": p.machine.n_calc,
                        "constants": list(p.machine.constants)},
            "code": p.code.tolist()}


def program_from_dict(doc: dict) -> Program:
    if doc.get("format") != "softids/lgp-program" or doc.get("version") != 1:
        raise ValueError("not a version-1 lgp program document")
    m = doc["machine"]
    machine = Machine(int(m["n_inputs"]), int(m["n_calc"]), tuple(float(c) for c in m["constants"]))
    code = np.asarray(doc["code"], dtype=np.int64).reshape(-1, 4)
    p = Program(code, machine)
    p.validate(max(len(code), 1))
    return p


@dataclass(frozen=True)
class LGPClassifier:
    """One evolved detector per class; the class with the largest output wins."""

    programs: dict[int, Program]
    labels: tuple[str, ...]

    @property
    def classes(self) -> tuple[int, ...]:
        return tuple(sorted(self.programs))

    def outputs(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.labels):
            raise ValueError(f"expected {len(self.labels)} attributes, got {X.shape[1]}")
        XT = np.ascontiguousarray(X.T)
        return np.stack([_run(self.programs[k], XT) for k in self.classes], axis=1)

    def predict(self, X) -> np.ndarray:
        return np.asarray(self.classes)[np.argmax(self.outputs(X), axis=1)]

    def confidences(self, X) -> np.ndarray:
        out = np.clip(self.outputs(X), -500.0, 500.0)
        return 1.0 / (1.0 + np.exp(-out))

    def to_dict(self) -> dict:
        return {"format": "softids/lgp", "version": 1, "labels": list(self.labels),
                "programs": {str(k): program_to_dict(p) for k, p in sorted(self.programs.items())}}

    @classmethod
    def from_dict(cls, doc: dict) -> "LGPClassifier":
        if doc.get("format") != "softids/lgp" or doc.get("version") != 1:
            raise ValueError("not a version-1 lgp classifier document")
        return cls({int(k): program_from_dict(v) for k, v in doc["programs"].items()},
                   tuple(doc["labels"]))


def class_seed(seed: int, target: int) -> int:
    return int(np.random.SeedSequence([seed, int(target)]).generate_state(1)[0])


def _evolve_job(args):
    data, target, params, seed = args
    return target, evolve(data, target, params, seed)


def train_lgp(data: Dataset, params: dict[int, EvolutionParams] | EvolutionParams | None = None,
              seed: int = 0, classes: Sequence[int] = ALL_CLASSES,
              jobs: int = 1) -> tuple[LGPClassifier, dict[int, EvolutionResult]]:
    """Evolve a detector for every class. Results do not depend on ``jobs``."""
    classes = [int(c) for c in classes]
    if params is None:
        params = PAPER_PARAMS
    per_class = params if isinstance(params, dict) else {k: params for k in classes}
    tasks = [(data, k, per_class[k], class_seed(seed, k)) for k in classes]
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(_evolve_job, tasks))
    else:
        results = dict(map(_evolve_job, tasks))
    return LGPClassifier({k: results[k].best for k in classes}, data.labels), results


def scaled_params(base: EvolutionParams, **changes) -> EvolutionParams:
    return replace(base, **changes)


def params_to_dict(p: EvolutionParams) -> dict:
    return asdict(p)
