"""Trainer tests: context construction, D assembly, the solver against its
closed-form and grid-search oracles, and the end-to-end training loop."""

import numpy as np
import pytest

import handtrace
from ierl.errors import DataError, DivergedError, NoDissimilarContextError
from ierl.trainer import (
    TARGET_VECTOR,
    Instance,
    ModelStore,
    SentenceModel,
    TrainConfig,
    build_context_sets,
    build_d_vector,
    init_alpha,
    solve_alpha,
    soft_threshold_optimum,
    train,
)

MEAN_CFG = TrainConfig(agg_mode="mean")


def grid_search_optimum(d, target, l1, lo=-5.0, hi=5.0, step=1e-4):
    """Independent oracle: per-coordinate dense scan of the separable objective."""
    grid = np.arange(lo, hi + step, step)
    out = np.empty(len(d))
    for k in range(len(d)):
        obj = (target[k] - grid * d[k]) ** 2 + l1 * np.abs(grid)
        out[k] = grid[np.argmin(obj)]
    return out


def as_reps(vectors):
    return [(np.array(a, dtype=float), np.array(b, dtype=float)) for a, b in vectors]


class TestBuildContextSets:
    # hand-traced on the 2-instance fixture before implementation
    def test_positive_label_slot1(self):
        reps = as_reps([(handtrace.LLM_VECTORS["alpha one"], handtrace.LLM_VECTORS["alpha two"]),
                        (handtrace.LLM_VECTORS["beta one"], handtrace.LLM_VECTORS["beta two"])])
        sim, dis = build_context_sets(reps, [1, -1], 0, 1)
        exp_sim, exp_dis = handtrace.CONTEXTS_LLM[(0, 1)]
        assert [v.tolist() for v in sim] == exp_sim
        assert [v.tolist() for v in dis] == exp_dis

    def test_negative_label_slot2_symmetrized(self):
        reps = as_reps([(handtrace.LLM_VECTORS["alpha one"], handtrace.LLM_VECTORS["alpha two"]),
                        (handtrace.LLM_VECTORS["beta one"], handtrace.LLM_VECTORS["beta two"])])
        sim, dis = build_context_sets(reps, [1, -1], 1, 2)
        exp_sim, exp_dis = handtrace.CONTEXTS_LLM[(1, 2)]
        assert [v.tolist() for v in sim] == exp_sim
        assert [v.tolist() for v in dis] == exp_dis

    def test_negative_label_literal_flag(self):
        reps = as_reps([(handtrace.LLM_VECTORS["alpha one"], handtrace.LLM_VECTORS["alpha two"]),
                        (handtrace.LLM_VECTORS["beta one"], handtrace.LLM_VECTORS["beta two"])])
        sim, dis = build_context_sets(reps, [1, -1], 1, 2, literal_negative_slots=True)
        exp_sim, exp_dis = handtrace.CONTEXTS_LLM_LITERAL_12
        assert [v.tolist() for v in sim] == exp_sim
        assert [v.tolist() for v in dis] == exp_dis

    def test_single_positive_instance_has_no_dissimilar_context(self):
        reps = as_reps([([1.0, 0.0], [0.0, 1.0])])
        with pytest.raises(NoDissimilarContextError):
            build_context_sets(reps, [1], 0, 1)


class TestBuildDVector:
    def test_identical_singleton_aggregate_mean(self):
        t = np.array([0.3, 0.4])
        c = np.array([1.0, 0.0])
        d = build_d_vector(t, c, t, t, c, c, MEAN_CFG)
        assert d[0] == pytest.approx(1.0, abs=1e-12)
        assert d[2] == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_dissimilar_mean(self):
        t = np.array([1.0, 0.0])
        d = build_d_vector(t, t, t, np.array([0.0, 2.0]), t, t, MEAN_CFG)
        assert d[1] == pytest.approx(0.0, abs=1e-12)

    def test_lifted_query_matches_lifted_aggregate(self):
        # query [2] lifts to [1,2,4,8]; identical aggregate gives a cosine of 1
        from ierl.aggregate import agg_moments

        cfg = TrainConfig(agg_mode="moments", max_power=3)
        agg = agg_moments([[2.0]], 3)
        t = np.array([2.0])
        d = build_d_vector(t, t, agg, agg, agg, agg, cfg)
        assert np.allclose(d, np.ones(4), atol=1e-12)

    def test_dimension_mismatch(self):
        cfg = TrainConfig(agg_mode="moments", max_power=2)
        t = np.array([1.0, 0.0])
        with pytest.raises(DataError, match="dimension mismatch"):
            build_d_vector(t, t, np.ones(4), np.ones(4), np.ones(4), np.ones(4), cfg)

    def test_hand_traced_mean_d_vectors(self):
        store, table = handtrace.sources()
        from ierl.embed_store import pair_representations

        insts = handtrace.instances()
        t_reps, c_reps, labels = [], [], []
        for inst in insts:
            t1, t2, c1, c2 = pair_representations(store, table, inst)
            t_reps.append((t1, t2))
            c_reps.append((c1, c2))
            labels.append(inst.label)
        for (i, j), expected in handtrace.D_MEAN.items():
            t_sim, t_dis = build_context_sets(t_reps, labels, i, j)
            c_sim, c_dis = build_context_sets(c_reps, labels, i, j)
            d = build_d_vector(
                t_reps[i][j - 1], c_reps[i][j - 1],
                np.mean(t_sim, axis=0), np.mean(t_dis, axis=0),
                np.mean(c_sim, axis=0), np.mean(c_dis, axis=0), MEAN_CFG)
            assert np.allclose(d, expected, atol=1e-12), (i, j)


class TestInitAlpha:
    def test_deterministic(self):
        assert np.array_equal(init_alpha(7, 3, 1), init_alpha(7, 3, 1))

    def test_distinct_across_slots_and_instances(self):
        draws = {tuple(init_alpha(7, i, j)) for i in range(5) for j in (1, 2)}
        assert len(draws) == 10

    def test_negative_seed_accepted(self):
        assert init_alpha(-3, 0, 1).shape == (4,)

    def test_standard_normal_moments(self):
        # law-of-large-numbers oracle on the shipped generator
        samples = np.stack([init_alpha(0, i, 1) for i in range(10000)])
        assert np.all(np.abs(samples.mean(axis=0)) < 0.05)
        assert np.all(np.abs(samples.var(axis=0) - 1.0) < 0.1)


class TestSolveAlpha:
    def test_unit_d_closed_form_and_grid(self):
        cfg = TrainConfig(learning_rate=0.45, tol=1e-300, max_iters=50000)
        d = np.ones(4)
        model = solve_alpha(d, TARGET_VECTOR, np.zeros(4), cfg)
        assert np.allclose(model.alpha, [0.5, -0.5, 0.5, -0.5], atol=1e-6)
        assert model.g == pytest.approx(3.0, abs=1e-6)
        assert np.allclose(model.alpha, grid_search_optimum(d, TARGET_VECTOR, 1.0),
                           atol=1e-3)

    def test_zero_coordinate_forces_zero_alpha(self):
        cfg = TrainConfig()
        model = solve_alpha(np.array([0.0, 1.0, 1.0, 1.0]), TARGET_VECTOR,
                            np.array([2.0, 0.0, 0.0, 0.0]), cfg)
        assert model.alpha[0] == 0.0

    def test_wide_d_soft_threshold(self):
        # d=2 on the first coordinate: optimum soft(2, 0.5)/4 = 0.375
        cfg = TrainConfig(learning_rate=0.1, tol=1e-300, max_iters=50000)
        d = np.array([2.0, 1.0, 1.0, 1.0])
        model = solve_alpha(d, TARGET_VECTOR, np.zeros(4), cfg)
        assert model.alpha[0] == pytest.approx(0.375, abs=1e-6)
        assert model.alpha[0] == pytest.approx(
            grid_search_optimum(d, TARGET_VECTOR, 1.0)[0], abs=1e-3)

    def test_matches_closed_form_on_random_cases(self):
        rng = np.random.default_rng(99)
        cfg = TrainConfig(learning_rate=0.45, tol=1e-300, max_iters=50000)
        for _ in range(200):
            d = rng.uniform(-1, 1, 4)
            l1 = float(rng.uniform(0.1, 2.0))
            case = TrainConfig(learning_rate=0.45, l1_weight=l1,
                               tol=cfg.tol, max_iters=cfg.max_iters)
            model = solve_alpha(d, TARGET_VECTOR, rng.standard_normal(4), case)
            assert np.allclose(model.alpha,
                               soft_threshold_optimum(d, TARGET_VECTOR, l1),
                               atol=1e-6)

    def test_objective_monotone_under_safe_learning_rate(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            d = rng.uniform(-1, 1, 4)
            a0 = rng.standard_normal(4)
            lr = 0.9 / (2.0 * float(np.max(d * d)) + 1e-12)
            lr = min(lr, 0.499 / max(float(np.max(d * d)), 1e-9))
            seq = []
            for iters in range(1, 120):
                cfg = TrainConfig(learning_rate=lr, tol=1e-300, max_iters=iters)
                seq.append(solve_alpha(d, TARGET_VECTOR, a0, cfg).g)
            assert all(b <= a + 1e-12 for a, b in zip(seq, seq[1:]))

    def test_sparsity_when_product_below_half_l1(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            d = rng.uniform(-0.4, 0.4, 4)  # |I_k d_k| <= 0.4 < l1/2
            model = solve_alpha(d, TARGET_VECTOR, rng.standard_normal(4), TrainConfig())
            assert np.all(np.abs(model.alpha) <= 1e-8)

    def test_divergence_names_the_step(self):
        cfg = TrainConfig(learning_rate=10.0)
        with pytest.raises(DivergedError) as exc:
            solve_alpha(np.ones(4), TARGET_VECTOR, np.ones(4), cfg)
        assert exc.value.step > 0
        assert "step" in str(exc.value)


class TestTrain:
    def test_hand_traced_d_vectors_mean_mode(self):
        store, table = handtrace.sources()
        result = train(handtrace.instances(), store, table, MEAN_CFG)
        assert len(result.store) == 4
        for record in result.store:
            expected = handtrace.D_MEAN[(record.instance_index, record.slot)]
            assert np.allclose(record.model.d, expected, atol=1e-12)

    def test_hand_traced_d_vector_moments_p1(self):
        store, table = handtrace.sources()
        cfg = TrainConfig(agg_mode="moments", max_power=1)
        result = train(handtrace.instances(), store, table, cfg)
        assert np.allclose(result.store.records[0].model.d,
                           handtrace.D_MOMENTS_P1_01, atol=1e-12)

    def test_deterministic_serialization(self):
        store, table = handtrace.sources()
        cfg = TrainConfig(agg_mode="moments", max_power=2, seed=13)
        a = train(handtrace.instances(), store, table, cfg).store.to_jsonl()
        b = train(handtrace.instances(), store, table, cfg).store.to_jsonl()
        assert a == b

    def test_scheduling_independence(self):
        store, table = handtrace.sources()
        cfg = TrainConfig(agg_mode="moments", seed=3)
        seq = train(handtrace.instances(), store, table, cfg, threads=1)
        par = train(handtrace.instances(), store, table, cfg, threads=4)
        assert seq.store.to_jsonl() == par.store.to_jsonl()
        assert seq.steps_per_model == par.steps_per_model

    def test_single_positive_instance_fails(self):
        store, table = handtrace.sources()
        with pytest.raises(NoDissimilarContextError):
            train([Instance("alpha one", "alpha two", 1)], store, table, MEAN_CFG)

    def test_empty_dataset(self):
        store, table = handtrace.sources()
        with pytest.raises(DataError, match="empty dataset"):
            train([], store, table, MEAN_CFG)

    def test_steps_recorded_per_model(self):
        store, table = handtrace.sources()
        result = train(handtrace.instances(), store, table, MEAN_CFG)
        assert len(result.steps_per_model) == 4
        assert result.run_steps == max(result.steps_per_model)
        assert all(s >= 1 for s in result.steps_per_model)


class TestModelStore:
    def _model(self):
        return SentenceModel(g=1.0, alpha=np.array([1.0, 2.0, 3.0, 4.0]),
                             steps=5, d=np.array([0.1, 0.2, 0.3, 0.4]))

    def test_collision_suffixing(self):
        store = ModelStore()
        assert store.add(0, 1, "x", self._model()) == "x"
        assert store.add(1, 1, "x", self._model()) == "x##1"
        assert store.add(1, 2, "x", self._model()) == "x##1.2"
        assert len(store) == 3
        assert len(set(store.keys())) == 3

    def test_completeness_with_repeated_sentences(self):
        store, table = handtrace.sources()
        insts = [Instance("alpha one", "alpha two", 1),
                 Instance("alpha one", "beta two", -1),
                 Instance("alpha one", "alpha one", 1)]
        result = train(insts, store, table, MEAN_CFG)
        assert len(result.store) == 2 * len(insts)
        assert len(set(result.store.keys())) == 2 * len(insts)

    def test_jsonl_round_trip(self, tmp_path):
        store, table = handtrace.sources()
        result = train(handtrace.instances(), store, table, MEAN_CFG)
        path = tmp_path / "models.jsonl"
        result.store.save(path)
        loaded = ModelStore.load(path)
        assert loaded.keys() == result.store.keys()
        for a, b in zip(loaded.records, result.store.records):
            assert a.slot == b.slot and a.sentence == b.sentence
            assert np.array_equal(a.model.alpha, b.model.alpha)
            assert np.array_equal(a.model.d, b.model.d)
            assert a.model.steps == b.model.steps and a.model.g == b.model.g
        assert loaded.to_jsonl() == result.store.to_jsonl()

    def test_records_ordered_by_instance_then_slot(self):
        store, table = handtrace.sources()
        result = train(handtrace.instances(), store, table, MEAN_CFG)
        order = [(r.instance_index, r.slot) for r in result.store]
        assert order == [(0, 1), (0, 2), (1, 1), (1, 2)]

    def test_get_unknown_key(self):
        with pytest.raises(DataError, match="no model stored"):
            ModelStore().get("missing")
