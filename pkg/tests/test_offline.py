import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import path_net, random_connected
from vnmigrate.harness import run_policy
from vnmigrate.offline import (
    InstanceTooLarge,
    brute_force_opt,
    opt_schedule,
    opt_table,
    schedule_csv,
)
from vnmigrate.substrate import (
    CostModel,
    access_cost_matrix,
    derive_cost_parameters,
    generate_erdos_renyi,
    migration_cost_table,
)
from vnmigrate.workload import RequestRound, RequestTrace, gen_time_zones


def trace_of(*rounds):
    return RequestTrace(tuple(RequestRound(i, tuple(o)) for i, o in enumerate(rounds)))


def parts(net, size=1.0, beta=1.0, pi=0.0, **kw):
    cm = CostModel(server_size=size, beta=beta, pi=pi, **kw)
    return access_cost_matrix(net, cm.access_metric), cm, migration_cost_table(net, cm)


def forward_cost(table, sched):
    # same association order as the recurrence, so equality is exact
    cost, prev = 0.0, table.v0
    for i, u in enumerate(sched.locations):
        cost = (cost + float(table.mig_cost[prev, u])) + float(table.masses[i][u])
        prev = u
    return cost


def random_instance(rng, n_max=5, rounds_max=5, pis=(0.0, 1.0, 3.0)):
    net = random_connected(rng, int(rng.integers(1, n_max + 1)), pips=2, bws=(1.0, 2.0))
    beta = 2.0
    cm = CostModel(server_size=2.0, beta=beta, pi=float(rng.choice(pis)) * beta)
    rounds = [tuple(int(x) for x in rng.integers(0, net.n, int(rng.integers(0, 4))))
              for _ in range(int(rng.integers(0, rounds_max + 1)))]
    return net, trace_of(*rounds), int(rng.integers(net.n)), cm


class TestExamples:
    def test_empty_trace(self):
        net = path_net(3)
        acc, cm, mig = parts(net)
        table = opt_table(net, trace_of(), 1, acc, cm, mig)
        assert table.opt.shape == (0, 3) and table.total == 0
        assert opt_schedule(table).locations == ()
        assert brute_force_opt(net, trace_of(), 1, acc, cm, mig).total_cost == 0

    def test_requests_at_v0(self):
        net = path_net(4)
        acc, cm, mig = parts(net)
        table = opt_table(net, trace_of((2,), (2, 2), (2,)), 2, acc, cm, mig)
        assert table.total == 0
        assert opt_schedule(table).locations == (2, 2, 2)

    def test_path_fixture(self):
        net = path_net(3)
        acc, cm, mig = parts(net)
        tr = trace_of((2,), (2,), (2,))
        table = opt_table(net, tr, 0, acc, cm, mig)
        sched = opt_schedule(table)
        assert table.total == 1.0
        assert sched.locations == (2, 2, 2)
        assert sched.migration_costs == (1.0, 0.0, 0.0)
        assert brute_force_opt(net, tr, 0, acc, cm, mig).total_cost == 1.0

    def test_bad_v0(self):
        net = path_net(2)
        acc, cm, mig = parts(net)
        with pytest.raises(ValueError):
            opt_table(net, trace_of((0,)), 5, acc, cm, mig)

    def test_brute_force_guard(self):
        net = path_net(5)
        acc, cm, mig = parts(net)
        with pytest.raises(InstanceTooLarge):
            brute_force_opt(net, trace_of(*[(0,)] * 11), 0, acc, cm, mig)

    def test_csv(self):
        net = path_net(3)
        acc, cm, mig = parts(net)
        sched = opt_schedule(opt_table(net, trace_of((2,), (), (2,)), 0, acc, cm, mig))
        assert schedule_csv(sched).splitlines() == [
            "round,location,access_cost,migration_cost", "0,2,0.0,1.0", "2,2,0.0,0.0"]


class TestAgainstBruteForce:
    @pytest.mark.parametrize("seed", range(30))
    def test_dp_equals_enumeration(self, seed):
        net, tr, v0, cm = random_instance(np.random.default_rng(seed))
        acc, mig = access_cost_matrix(net), migration_cost_table(net, cm)
        table = opt_table(net, tr, v0, acc, cm, mig)
        brute = brute_force_opt(net, tr, v0, acc, cm, mig)
        assert table.total == brute.total_cost
        sched = opt_schedule(table)
        assert forward_cost(table, sched) == table.total
        assert sched.access_total + sched.migration_total == pytest.approx(table.total, abs=1e-9)

    def test_huge_server_stays_static(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            net = random_connected(rng, 5)
            acc, cm, mig = parts(net, size=1e9, beta=1e9)
            tr = trace_of(*[tuple(rng.integers(0, 5, 3).tolist()) for _ in range(5)])
            v0 = int(rng.integers(5))
            static = min(mig.cost[v0, u] + sum(acc.dist[o, u] for r in tr for o in r.origins)
                         for u in range(5))
            assert brute_force_opt(net, tr, v0, acc, cm, mig).total_cost == static
            assert opt_table(net, tr, v0, acc, cm, mig).total == static


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_stay_option_and_monotone_rows(self, seed):
        net, tr, v0, cm = random_instance(np.random.default_rng(seed), n_max=7, rounds_max=8)
        acc, mig = access_cost_matrix(net), migration_cost_table(net, cm)
        t = opt_table(net, tr, v0, acc, cm, mig)
        for i in range(1, len(t.rounds)):
            assert np.all(t.opt[i] <= t.opt[i - 1] + t.masses[i] + 1e-12)
            assert np.all(t.opt[i] >= t.opt[i - 1].min() - 1e-12)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_skipping_empty_rounds_is_harmless(self, seed):
        net, tr, v0, cm = random_instance(np.random.default_rng(seed), n_max=6, rounds_max=8)
        acc, mig = access_cost_matrix(net), migration_cost_table(net, cm)
        skip = opt_table(net, tr, v0, acc, cm, mig, skip_empty=True).total
        full = opt_table(net, tr, v0, acc, cm, mig, skip_empty=False).total
        assert skip == pytest.approx(full, abs=1e-9)

    @pytest.mark.parametrize("kind", ["stat", "rand", "det", "prand", "pdet"])
    def test_online_never_beats_opt(self, kind):
        for seed in range(4):
            net = generate_erdos_renyi(12, 0.3, bw_choices=[1.544, 6.312], seed=seed)
            cm = derive_cost_parameters(net, 6.0)
            acc, mig = access_cost_matrix(net), migration_cost_table(net, cm)
            tr = gen_time_zones(net, 150, 60, 5, 3, seed=seed)
            opt = opt_table(net, tr, 0, acc, cm, mig).total
            assert run_policy(net, tr, kind, 0, cm, seed, acc, mig).total >= opt - 1e-9
