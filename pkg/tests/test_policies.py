import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invariants import audit_intra
from oracles import brute_minimax, path_net, random_connected
from vnmigrate.harness import run_policy
from vnmigrate.policies import (
    det_step,
    gravity_center,
    new_intra_state,
    rand_step,
    stat_center,
    stat_step,
)
from vnmigrate.substrate import (
    CostModel,
    Node,
    SubstrateNetwork,
    access_cost_matrix,
    derive_cost_parameters,
    generate_erdos_renyi,
    migration_cost_table,
)
from vnmigrate.workload import RequestRound, RequestTrace, gen_time_zones


def setup(net, beta=2.0, size=None, **kw):
    cm = CostModel(server_size=beta if size is None else size, beta=beta, **kw)
    return cm, access_cost_matrix(net, cm.access_metric), migration_cost_table(net, cm)


def trace_of(*rounds):
    return RequestTrace(tuple(RequestRound(i, tuple(o)) for i, o in enumerate(rounds)))


class TestStatCenter:
    def test_single_node(self):
        net = SubstrateNetwork((Node(0),), ())
        assert stat_center(net, access_cost_matrix(net)) == 0

    def test_path3(self):
        net = path_net(3)
        assert stat_center(net, access_cost_matrix(net)) == 1

    def test_path4_tie_lowest_id(self):
        net = path_net(4)
        assert stat_center(net, access_cost_matrix(net)) == 1

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        net = random_connected(rng, int(rng.integers(2, 15)), latencies=True)
        acc = access_cost_matrix(net, "latency")
        assert stat_center(net, acc) == brute_minimax(acc.dist.tolist())


class TestGravityCenter:
    def test_one_candidate(self):
        acc = access_cost_matrix(path_net(3))
        assert gravity_center(acc, [2], [5, 0, 0]) == 2

    def test_path_weights(self):
        acc = access_cost_matrix(path_net(3))
        # end weights only: every node scores 2, so the tie goes to node 0
        assert gravity_center(acc, [0, 1, 2], [1, 0, 1]) == 0
        assert gravity_center(acc, [0, 1, 2], [1, 1, 1]) == 1

    def test_tie_lowest_id(self):
        acc = access_cost_matrix(path_net(4))
        # weights at both ends: every node scores 3
        assert gravity_center(acc, [3, 2, 1], [1, 0, 0, 1]) == 1

    def test_mask_candidates(self):
        acc = access_cost_matrix(path_net(3))
        assert gravity_center(acc, np.array([True, False, True]), [0, 1, 0]) == 0

    def test_empty(self):
        with pytest.raises(ValueError):
            gravity_center(access_cost_matrix(path_net(2)), [], [1, 1])


class TestStat:
    def test_never_migrates(self):
        net = generate_erdos_renyi(15, 0.3, seed=3)
        cm, acc, mig = setup(net, beta=1.0)
        tr = gen_time_zones(net, 200, 60, 5, 3, seed=1)
        ledger = run_policy(net, tr, "stat", 4, cm, 0, acc, mig)
        assert ledger.migration_total == 0 and ledger.migrations == 0

    def test_step_is_noop(self):
        st_ = new_intra_state("stat", 3, 1)
        cm, acc, mig = setup(path_net(3))
        assert stat_step(st_, (0, 2), acc, cm, mig).new_location == 1


class TestRand:
    def test_empty_round(self):
        net = path_net(2)
        cm, acc, mig = setup(net)
        s = new_intra_state("rand", 2, 0, seed=1)
        d = rand_step(s, (), acc, cm, mig)
        assert not d.migrated and s.counters.tolist() == [0, 0]

    def test_two_node_example(self):
        # beta = 2 (size 2 over bandwidth 1), requests at node 1, server at 0
        net = path_net(2)
        cm, acc, mig = setup(net)
        s = new_intra_state("rand", 2, 0, seed=1)
        d1 = rand_step(s, (1,), acc, cm, mig)
        assert not d1.migrated and s.counters.tolist() == [1, 0]
        d2 = rand_step(s, (1,), acc, cm, mig)
        assert d2.migrated and d2.new_location == 1
        assert d2.migration_cost_paid == mig.cost[0, 1] == 2.0

    def test_all_saturated_ends_epoch(self):
        net = path_net(2)
        cm, acc, mig = setup(net, beta=1.0)
        s = new_intra_state("rand", 2, 0, seed=1)
        # one request at each node: both counters reach 1
        d = rand_step(s, (0, 1), acc, cm, mig)
        assert d.epoch_ended and not d.migrated
        # reset happens when the next round is stepped
        assert s.counters.tolist() == [1, 1]
        rand_step(s, (), acc, cm, mig)
        assert s.counters.tolist() == [0, 0] and s.epoch_index == 1

    def test_seeded_reproducible(self):
        net = generate_erdos_renyi(20, 0.3, seed=1)
        cm, acc, mig = setup(net, beta=4.0)
        tr = gen_time_zones(net, 300, 60, 5, 4, seed=2)
        a = run_policy(net, tr, "rand", 0, cm, 9, acc, mig)
        b = run_policy(net, tr, "rand", 0, cm, 9, acc, mig)
        assert a.records == b.records
        assert a.migrations > 0

    def test_general_bandwidth_threshold(self):
        net = generate_erdos_renyi(12, 0.4, bw_choices=[1.544, 6.312], seed=3)
        cm = derive_cost_parameters(net, 8.0)
        assert cm.threshold == 8.0 / 1.544 > cm.beta


class TestDet:
    def test_path_example(self):
        net = path_net(3)
        cm, acc, mig = setup(net)
        s = new_intra_state("det", 3, 0)
        d = det_step(s, (2,), acc, cm, mig)
        assert s.counters.tolist() == [2, 1, 0]
        assert d.migrated and d.new_location == 2

    def test_counter_equal_to_tau_beta_is_inactive(self):
        net = path_net(2)
        cm, acc, mig = setup(net, beta=3.0, det_tau=1 / 3)
        s = new_intra_state("det", 2, 0)
        # counters (1, 0): node 0 sits exactly on tau*beta = 1
        det_step(s, (1,), acc, cm, mig)
        assert s.last_active.tolist() == [False, True]

    def test_no_requests(self):
        net = path_net(4)
        cm, acc, mig = setup(net)
        ledger = run_policy(net, trace_of(*[()] * 50), "det", 0, cm, 0, acc, mig)
        assert ledger.total == 0 and ledger.migrations == 0
        assert not any(r.epoch_ended for r in ledger.records)

    def test_deterministic_across_seeds(self):
        net = generate_erdos_renyi(20, 0.3, seed=5)
        cm, acc, mig = setup(net, beta=3.0)
        tr = gen_time_zones(net, 300, 60, 5, 4, seed=6)
        assert run_policy(net, tr, "det", 0, cm, 1, acc, mig).records == \
            run_policy(net, tr, "det", 0, cm, 2, acc, mig).records


class TestInvariants:
    @pytest.mark.parametrize("kind", ["rand", "det"])
    @pytest.mark.parametrize("seed", range(3))
    def test_audit_clean(self, kind, seed):
        net = generate_erdos_renyi(15, 0.3, bw_choices=[1.0, 2.0, 4.0], seed=seed)
        cm = derive_cost_parameters(net, 6.0)
        acc, mig = access_cost_matrix(net), migration_cost_table(net, cm)
        tr = gen_time_zones(net, 400, 60, 5, 3, seed=seed)
        problems, ledger = audit_intra(net, tr, kind, cm, acc, mig, 0, seed)
        assert problems == []
        assert ledger.migrations > 0

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10**6), kind=st.sampled_from(["rand", "det"]),
           beta=st.sampled_from([1.0, 2.5, 6.0]),
           rounds=st.lists(st.lists(st.integers(0, 7), max_size=4), max_size=40))
    def test_audit_property(self, seed, kind, beta, rounds):
        net = random_connected(np.random.default_rng(seed), 8)
        cm, acc, mig = setup(net, beta=beta)
        problems, _ = audit_intra(net, trace_of(*rounds), kind, cm, acc, mig, 0, seed)
        assert problems == []

    def test_audit_catches_broken_policy(self, monkeypatch):
        import vnmigrate.harness as harness
        from vnmigrate.policies import PolicyDecision

        def eager(state, origins, acc, cm, mig):
            # migrates every round, ignoring the counters
            state.counters += acc.request_mass(origins)
            target = (state.location + 1) % len(state.counters)
            cost = float(mig.cost[state.location, target])
            state.location = target
            return PolicyDecision(target, True, cost)

        monkeypatch.setitem(harness.STEP, "rand", eager)
        net = path_net(4)
        cm, acc, mig = setup(net, beta=100.0)
        problems, _ = audit_intra(net, trace_of((0,), (3,), (1,)), "rand", cm, acc, mig, 0, 0)
        assert problems == []  # targets below threshold: legal moves
        cm, acc, mig = setup(net, beta=1.0)
        problems, _ = audit_intra(net, trace_of(*[(0, 1, 2, 3)] * 3), "rand", cm, acc, mig, 0, 0)
        assert any("RAND target" in p for p in problems)
