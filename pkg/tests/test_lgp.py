import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from softids import lgp
from softids.lgp import ADD, DIV, IFGT, MUL, SUB, EvolutionParams, Machine, Program

import oracles
from conftest import make_dataset

MACHINE = Machine(2, 8, (0.0, 1.0, -0.5))
R = MACHINE.n_registers  # 10; constants are operands 10, 11, 12
C0, C1, CNEG = R, R + 1, R + 2


def prog(*rows, machine=MACHINE):
    return Program(np.asarray(rows, dtype=np.int64).reshape(-1, 4), machine)


def test_identity_program():
    p = prog([ADD, 0, 0, C0])
    assert lgp.execute(p, np.array([0.3, 0.9])) == 0.3


def test_sum_of_inputs():
    assert lgp.execute(prog([ADD, 0, 0, 1]), np.array([0.25, 0.5])) == 0.75


def test_protected_division():
    assert lgp.execute(prog([DIV, 0, 0, C0]), np.array([0.7, 0.1])) == 1.0
    assert lgp.execute(prog([DIV, 0, 0, 1]), np.array([0.5, 0.25])) == 2.0


def test_conditional_skip():
    p = prog([IFGT, 0, 0, 1], [ADD, 0, C1, C1])
    assert lgp.execute(p, np.array([0.9, 0.1])) == 2.0  # predicate holds: runs
    assert lgp.execute(p, np.array([0.1, 0.9])) == 0.1  # predicate fails: skipped


def test_clamp_on_overflow():
    # 2 squared 12 times overflows long before the end
    big = prog([ADD, 2, C1, C1], *[[MUL, 2, 2, 2]] * 12, [ADD, 0, 2, C0])
    assert lgp.execute(big, np.zeros(2)) == lgp.CLAMP
    neg = prog([SUB, 2, C0, C1], [MUL, 2, 2, C1], [ADD, 2, 2, 2], *[[MUL, 3, 2, 2]] * 1,
               [SUB, 0, C0, 3], *[[MUL, 0, 0, 0]] * 8, [SUB, 0, C0, 0])
    assert lgp.execute(neg, np.zeros(2)) == -lgp.CLAMP


def test_missing_inputs_start_at_zero():
    # a program for 2 inputs run on 1 input: the second input register stays 0
    assert lgp.execute(prog([ADD, 0, 1, C1]), np.array([0.4])) == 1.0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 40))
def test_vectorized_execution_matches_interpreter(seed, length):
    rng = np.random.default_rng(seed)
    p = lgp.random_program(rng, MACHINE, length)
    X = rng.uniform(-1, 1, (8, 2))
    got = lgp.execute_batch(p, X)
    want = [oracles.run_program(p.code.tolist(), x, R, MACHINE.constants) for x in X]
    assert np.allclose(got, want, rtol=1e-12, atol=0)


def test_effective_mask_removes_dead_code():
    code = np.array([[ADD, 5, 0, 1], [ADD, 0, 0, 1], [MUL, 6, 0, 0]])
    assert lgp.effective_mask(code, R).tolist() == [False, True, False]
    guarded = np.array([[ADD, 0, 0, 1], [IFGT, 0, 0, 1], [ADD, 0, 0, C1]])
    assert lgp.effective_mask(guarded, R).tolist() == [True, True, True]


# --- fitness -----------------------------------------------------------------------

def test_fitness_constant_program():
    always = prog([ADD, 0, C1, C0])
    data = make_dataset(np.random.default_rng(0).random((10, 2)), [2] * 10)
    assert lgp.fitness(always, data, 2) == 0.0
    assert lgp.fitness(always, data, 1) == 1.0


def test_fitness_threshold_program_hand_count():
    # output x1 - 0.5 > 0 claims the target
    p = prog([ADD, 0, 0, CNEG])
    X = np.array([[0.9, 0], [0.2, 0], [0.7, 0], [0.6, 0]])
    data = make_dataset(X, [1, 1, 2, 1])
    # predictions: target, not, target, target; truths: target, target, not, target
    assert lgp.fitness(p, data, 1) == 0.5


# --- variation ------------------------------------------------------------------------

def test_crossover_with_self_is_neutral():
    rng = np.random.default_rng(1)
    p = lgp.random_program(rng, MACHINE, 12)
    X = rng.random((20, 2))
    a, b = lgp.crossover(p, p, rng, cuts=(0, 12, 0, 12))
    assert np.array_equal(lgp.execute_batch(a, X), lgp.execute_batch(p, X))
    assert np.array_equal(lgp.execute_batch(b, X), lgp.execute_batch(p, X))


def test_crossover_full_swap():
    rng = np.random.default_rng(2)
    a = lgp.random_program(rng, MACHINE, 5)
    b = lgp.random_program(rng, MACHINE, 9)
    ca, cb = lgp.crossover(a, b, rng, cuts=(0, 5, 0, 9))
    assert np.array_equal(ca.code, b.code) and np.array_equal(cb.code, a.code)


def test_crossover_invalid_cuts():
    a = prog([ADD, 0, 0, 1])
    with pytest.raises(ValueError):
        lgp.crossover(a, a, np.random.default_rng(0), cuts=(0, 2, 0, 1))


def test_crossover_sweep_respects_size_and_boundaries():
    rng = np.random.default_rng(3)
    pool = [lgp.random_program(rng, MACHINE, int(n)) for n in rng.integers(1, 257, 40)]
    for _ in range(10_000):
        i, j = rng.integers(0, len(pool), 2)
        a, b = pool[i], pool[j]
        ca, cb = lgp.crossover(a, b, rng, max_size=256)
        for child in (ca, cb):
            assert 1 <= len(child) <= 256
            child.validate(256)
        # every child row is a whole instruction from one of the parents
        rows = {tuple(r) for r in a.code.tolist()} | {tuple(r) for r in b.code.tolist()}
        assert {tuple(r) for r in ca.code.tolist()} <= rows


def test_crossover_truncates_from_tail():
    rng = np.random.default_rng(4)
    a = lgp.random_program(rng, MACHINE, 250)
    b = lgp.random_program(rng, MACHINE, 250)
    ca, _ = lgp.crossover(a, b, rng, max_size=256, cuts=(100, 101, 0, 200))
    assert len(ca) == 256
    assert np.array_equal(ca.code[:100], a.code[:100])
    assert np.array_equal(ca.code[100:256], b.code[:156])


def test_mutation_changes_exactly_one_field():
    rng = np.random.default_rng(5)
    for _ in range(10_000):
        p = lgp.random_program(rng, MACHINE, int(rng.integers(1, 20)))
        q = lgp.mutate(p, rng)
        assert len(q) == len(p)
        q.validate()
        assert np.count_nonzero(q.code != p.code) == 1


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_random_programs_are_valid(seed):
    rng = np.random.default_rng(seed)
    m = Machine(int(rng.integers(1, 42)), 8, tuple(rng.uniform(-1, 1, 16)))
    p = lgp.random_program(rng, m, int(rng.integers(1, 257)))
    p.validate(256)
    assert p.code[:, 1].max() < m.n_registers
    assert p.code[:, 2:].max() < m.n_operands


def test_validate_rejects_bad_programs():
    with pytest.raises(ValueError):
        prog([ADD, 0, 0, R + 3]).validate()
    with pytest.raises(ValueError):
        Program(np.zeros((0, 4), dtype=np.int64), MACHINE).validate()


# --- parameters -------------------------------------------------------------------------

def test_paper_parameters():
    p = lgp.PAPER_PARAMS[1]
    assert (p.population_size, p.tournament_size, p.mutation_frequency, p.crossover_frequency,
            p.n_demes, p.max_program_size) == (2048, 8, 85, 75, 10, 256)
    assert [lgp.PAPER_PARAMS[k].mutation_frequency for k in range(1, 6)] == [85, 82, 75, 86, 85]
    assert [lgp.PAPER_PARAMS[k].crossover_frequency for k in range(1, 6)] == [75, 70, 65, 75, 70]


@pytest.mark.parametrize("changes", [
    {"tournament_size": 2}, {"mutation_frequency": 120}, {"population_size": 50, "n_demes": 10},
    {"n_demes": 0}, {"init_max_length": 300},
])
def test_invalid_parameters(changes):
    with pytest.raises(ValueError):
        EvolutionParams(**changes)


def test_deme_sizes_differ_by_at_most_one():
    sizes = lgp._deme_sizes(EvolutionParams())
    assert sum(sizes) == 2048 and max(sizes) - min(sizes) <= 1


# --- evolution ---------------------------------------------------------------------------

def _separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 2))
    y = np.where(X[:, 0] > X[:, 1], 1, 2)
    return make_dataset(X, y)


SMALL = EvolutionParams(population_size=64, n_demes=2, tournaments=400, log_interval=100,
                        migration_interval=100, stop_at_zero=False)


def test_tournament_keeps_size_and_best():
    data = _separable()
    ev = lgp._Evaluator(data, 1)
    demes, _ = lgp.init_demes(data, SMALL, 0, ev)
    d = demes[0]
    for _ in range(200):
        best_err = d.errors[d.best()]
        size = len(d)
        slots, _ = lgp.tournament_step(d, SMALL, ev)
        assert len(d) == size
        assert min(d.errors) <= best_err


def test_tournament_never_replaces_best_of_tournament():
    data = _separable()
    ev = lgp._Evaluator(data, 1)
    demes, _ = lgp.init_demes(data, SMALL, 1, ev)
    d = demes[0]
    for _ in range(200):
        errors_before = d.errors.copy()
        slots, _ = lgp.tournament_step(d, SMALL, ev)
        # replaced slots are the two worst of the sampled tournament, never the deme's best
        assert errors_before[slots].min() >= errors_before.min()
        assert len(set(slots)) == 2


def test_mean_fitness_improves():
    data = _separable()
    res = lgp.evolve(data, 1, SMALL, seed=3)
    assert res.history[-1]["mean_error"] < res.history[0]["mean_error"]


def test_budget_zero_returns_best_initial():
    data = _separable()
    params = EvolutionParams(population_size=64, n_demes=2, tournaments=0)
    res = lgp.evolve(data, 1, params, seed=4)
    ev = lgp._Evaluator(data, 1)
    demes, _ = lgp.init_demes(data, params, 4, ev)
    assert res.tournaments_run == 0
    assert res.best_error == min(d.errors.min() for d in demes)
    assert lgp.fitness(res.best, data, 1) == res.best_error


def test_history_is_monotone_and_reproducible():
    data = _separable()
    a = lgp.evolve(data, 1, SMALL, seed=9)
    b = lgp.evolve(data, 1, SMALL, seed=9)
    assert a.history_csv() == b.history_csv()
    best = [row["best_error"] for row in a.history]
    assert all(x >= y for x, y in zip(best, best[1:]))
    assert [row["tournament"] for row in a.history] == [0, 100, 200, 300, 400]
    assert lgp.fitness(a.best, data, 1) == a.best_error


def test_migration_moves_best_to_next_deme():
    data = _separable()
    ev = lgp._Evaluator(data, 1)
    demes, _ = lgp.init_demes(data, SMALL, 5, ev)
    best0 = demes[0].programs[demes[0].best()]
    lgp.migrate(demes)
    assert any(p is best0 for p in demes[1].programs)
    assert all(len(d) == 32 for d in demes)


def test_train_lgp_and_round_trip():
    data = make_dataset(np.random.default_rng(0).random((60, 2)), np.repeat([1, 2, 3, 4, 5], 12))
    params = EvolutionParams(population_size=32, n_demes=2, tournaments=50)
    model, results = lgp.train_lgp(data, params, seed=1)
    assert set(results) == {1, 2, 3, 4, 5}
    back = lgp.LGPClassifier.from_dict(model.to_dict())
    assert np.array_equal(back.outputs(data.X), model.outputs(data.X))
    conf = model.confidences(data.X)
    assert conf.shape == (60, 5) and np.all((conf >= 0) & (conf <= 1))
    assert set(model.predict(data.X)) <= {1, 2, 3, 4, 5}
    text = model.programs[1].text()
    assert text.count("\n") == len(model.programs[1])
