import itertools
import math
import random

import pytest

from pgfdb import (
    AggregateSpec,
    Column,
    CountUda,
    MinMaxUda,
    OracleSizeError,
    Pgf,
    ProbTable,
    SumUda,
    aggregate_distribution,
    enumerate_eval,
    execute,
)
from tests.conftest import READINGS_PROBS, READINGS_VALUES, dist_dict

COUNT_PLAN = {
    "nodes": [
        {"id": "s", "op": "scan", "table": "readings"},
        {
            "id": "g",
            "op": "group_agg",
            "input": "s",
            "group_by": [],
            "aggregates": [{"name": "n", "kind": "count"}],
        },
    ],
    "output": "g",
}


def brute_force_weights(probs):
    out = []
    for included in itertools.product([False, True], repeat=len(probs)):
        w = 1.0
        for p, here in zip(probs, included):
            w *= p if here else 1 - p
        out.append(w)
    return out


class TestWorldEnumeration:
    def test_world_weights_cover_all_masks(self, readings):
        res = enumerate_eval(COUNT_PLAN, {"readings": readings})
        expected = sorted(brute_force_weights(READINGS_PROBS))
        assert sorted(res.world_weights) == pytest.approx(expected)
        assert res.total_weight == pytest.approx(1.0, abs=1e-12)

    def test_count_distribution_conditional(self, readings):
        res = enumerate_eval(COUNT_PLAN, {"readings": readings})
        assert res.key_columns == ()
        assert res.agg_columns == ("n",)
        row = res.rows[()]
        assert row.probability == pytest.approx(0.97)
        assert row.distributions["n"] == pytest.approx(
            {1: 0.22 / 0.97, 2: 0.47 / 0.97, 3: 0.28 / 0.97}
        )

    def test_matches_engine_output(self, readings):
        res = enumerate_eval(COUNT_PLAN, {"readings": readings})
        eng = execute(COUNT_PLAN, {"readings": readings})
        row = res.rows[()]
        assert eng.probs[0] == pytest.approx(row.probability, abs=1e-12)
        for k, v in dist_dict(eng.rows[0][0]).items():
            assert row.distributions["n"][k] == pytest.approx(v, abs=1e-12)

    def test_certain_and_impossible_rows_cost_no_bits(self):
        values = list(range(30))
        probs = [1.0] * 15 + [0.0] * 10 + [0.5] * 5
        t = ProbTable(
            [Column("v", dtype="int")], [[v] for v in values], probs
        )
        res = enumerate_eval(COUNT_PLAN, {"readings": t})
        assert len(res.world_weights) == 2**5
        row = res.rows[()]
        assert row.probability == pytest.approx(1.0)
        # 15 certain rows floor the count
        assert min(row.distributions["n"]) == 15

    def test_size_cap_enforced(self):
        t = ProbTable(
            [Column("v", dtype="int")], [[i] for i in range(25)], [0.5] * 25
        )
        with pytest.raises(OracleSizeError, match="oracle limited to 24 tuples"):
            enumerate_eval(COUNT_PLAN, {"readings": t})

    def test_no_uncertain_rows_single_world(self):
        t = ProbTable([Column("v", dtype="int")], [[2], [9]], [1.0, 1.0])
        res = enumerate_eval(COUNT_PLAN, {"readings": t})
        assert res.world_weights == [1.0]
        assert res.rows[()].distributions["n"] == {2: 1.0}

    def test_grouped_keys_match_engine(self):
        t = ProbTable(
            [Column("g", dtype="str"), Column("v", dtype="int")],
            [["a", 1], ["a", 4], ["b", 2]],
            [0.5, 0.25, 0.75],
        )
        plan = {
            "nodes": [
                {"id": "s", "op": "scan", "table": "t"},
                {
                    "id": "agg",
                    "op": "group_agg",
                    "input": "s",
                    "group_by": ["g"],
                    "aggregates": [{"name": "total", "kind": "sum", "column": "v"}],
                },
            ],
            "output": "agg",
        }
        res = enumerate_eval(plan, {"t": t})
        eng = execute(plan, {"t": t})
        assert set(res.rows) == {("a",), ("b",)}
        for row, p in zip(eng.rows, eng.probs):
            orow = res.rows[(row[0],)]
            assert p == pytest.approx(orow.probability, abs=1e-12)
            for k, v in dist_dict(row[1]).items():
                assert orow.distributions["total"][k] == pytest.approx(v, abs=1e-12)


class TestAggregateDistribution:
    def test_count_golden(self):
        d = aggregate_distribution([3, 8, 5], READINGS_PROBS, "count")
        assert dist_dict(d) == pytest.approx(
            {0: 0.03, 1: 0.22, 2: 0.47, 3: 0.28}, abs=1e-15
        )

    def test_min_identity_when_all_absent(self):
        d = aggregate_distribution([4], [0.25], "min")
        assert dist_dict(d) == pytest.approx({4: 0.25, math.inf: 0.75})

    def test_scale_digits_respected(self):
        d = aggregate_distribution([0.5, 0.3], [1.0, 0.5], "sum", scale_digits=1)
        assert dist_dict(d) == pytest.approx({0.5: 0.5, 0.8: 0.5})

    @pytest.mark.parametrize("kind", ["count", "sum", "min", "max"])
    def test_matches_uda_finalize(self, kind):
        rng = random.Random(77)
        for trial in range(10):
            n = rng.randrange(1, 9)
            values = [rng.randrange(-6, 12) for _ in range(n)]
            probs = [rng.choice([0.0, 1.0, rng.random()]) for _ in range(n)]
            oracle = aggregate_distribution(values, probs, kind)
            if kind == "count":
                uda = CountUda()
                for p in probs:
                    uda.accumulate(p)
            elif kind == "sum":
                uda = SumUda()
                for v, p in zip(values, probs):
                    uda.accumulate(p, v)
            else:
                uda = MinMaxUda(mode=kind)
                for v, p in zip(values, probs):
                    uda.accumulate(p, v)
            fin = uda.finalize()
            if hasattr(fin, "to_pgf"):
                fin = fin.to_pgf()
            got = dist_dict(fin)
            want = dist_dict(oracle)
            assert set(got) == set(want), (kind, trial)
            for k in want:
                assert got[k] == pytest.approx(want[k], abs=1e-9), (kind, trial)

    def test_chunking_boundary(self):
        # 17 uncertain tuples spill past the 2^16 chunk size
        values = list(range(17))
        probs = [0.5] * 17
        d = aggregate_distribution(values, probs, "count")
        assert d.mass_at(0) == pytest.approx(0.5**17)
        assert d.mean() == pytest.approx(8.5)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            aggregate_distribution([1], [0.5], "median")
