import numpy as np
import pytest

from tarnpricer import (
    KnockoutType,
    TarnContract,
    batch_present_value,
    fixing_outcome,
    path_present_value,
    raw_cash_flow,
)


def make_contract(knockout=KnockoutType.FULL_GAIN, target=0.3, strike=1.0,
                  beta=1, times=(0.25, 0.5, 0.75), extras=None):
    return TarnContract(strike=strike, target=target, beta=beta,
                        fixing_times=times, knockout=knockout,
                        extra_payments=extras)


class TestRawCashFlow:
    def test_in_the_money_buy(self):
        assert raw_cash_flow(1.05, make_contract()) == pytest.approx(0.05)

    def test_out_of_the_money_buy(self):
        assert raw_cash_flow(0.90, make_contract()) == 0.0

    def test_sell_direction(self):
        assert raw_cash_flow(0.90, make_contract(beta=-1)) == pytest.approx(0.10)

    def test_nonnegative_everywhere(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            spot = float(rng.uniform(0.01, 5.0))
            for beta in (1, -1):
                assert raw_cash_flow(spot, make_contract(beta=beta)) >= 0.0


class TestFixingOutcome:
    # c = 0.08 against A = 0.25, U = 0.3 breaches in all three cases
    def test_full_gain_breach_pays_gross(self):
        out = fixing_outcome(1.08, 0.25, 1, make_contract(KnockoutType.FULL_GAIN))
        assert out.payment == pytest.approx(0.08)
        assert out.terminated

    def test_part_gain_breach_pays_shortfall(self):
        out = fixing_outcome(1.08, 0.25, 1, make_contract(KnockoutType.PART_GAIN))
        assert out.payment == pytest.approx(0.05)
        assert out.terminated

    def test_no_gain_breach_pays_nothing_and_terminates(self):
        # The breach is detected on the gross amount and knocks the note out
        # for every knockout type; no-gain just cancels the final payment.
        out = fixing_outcome(1.08, 0.25, 1, make_contract(KnockoutType.NO_GAIN))
        assert out.payment == 0.0
        assert out.terminated

    def test_no_breach_passes_gross_through(self):
        out = fixing_outcome(1.02, 0.1, 2, make_contract(KnockoutType.NO_GAIN))
        assert out.payment == pytest.approx(0.02)
        assert not out.terminated
        assert out.accumulation_increment == out.payment

    def test_exact_target_hit_is_a_breach(self):
        # 0.5 + 0.25 == 0.75 exactly in binary; equality counts as a breach
        contract = make_contract(KnockoutType.PART_GAIN, target=0.75)
        out = fixing_outcome(1.25, 0.5, 1, contract)
        assert out.terminated
        assert out.payment == pytest.approx(0.25)

    def test_dead_state_rejected(self):
        with pytest.raises(ValueError):
            fixing_outcome(1.05, 0.3, 1, make_contract(target=0.3))
        with pytest.raises(ValueError):
            fixing_outcome(1.05, 0.31, 1, make_contract(target=0.3))

    def test_negative_accumulation_rejected(self):
        with pytest.raises(ValueError):
            fixing_outcome(1.05, -1e-9, 1, make_contract())

    def test_at_target_limit_state(self):
        contract = make_contract(KnockoutType.FULL_GAIN, target=0.3)
        with pytest.raises(ValueError):
            fixing_outcome(1.05, 0.3, 1, contract)
        out = fixing_outcome(1.05, 0.3, 1, contract, allow_at_target=True)
        assert out.payment == pytest.approx(0.05)
        assert out.terminated
        # zero gross at the limit state: nothing fires, the state stays live
        out = fixing_outcome(0.9, 0.3, 1, contract, allow_at_target=True)
        assert out.payment == 0.0
        assert not out.terminated

    def test_bad_fixing_index(self):
        with pytest.raises(ValueError):
            fixing_outcome(1.0, 0.0, 4, make_contract())

    def test_extra_payment_weights(self):
        extras = (0.01, 0.01, 0.01)
        full = make_contract(KnockoutType.FULL_GAIN, extras=extras)
        part = make_contract(KnockoutType.PART_GAIN, extras=extras)
        none_ = make_contract(KnockoutType.NO_GAIN, extras=extras)
        # no breach: extra paid in full, does not accrue
        out = fixing_outcome(1.01, 0.0, 1, full)
        assert out.extra_payment == pytest.approx(0.01)
        assert out.accumulation_increment == pytest.approx(0.01)
        # breach with c = 0.08 against A = 0.25, U = 0.3
        assert fixing_outcome(1.08, 0.25, 1, full).extra_payment == pytest.approx(0.01)
        assert fixing_outcome(1.08, 0.25, 1, part).extra_payment == pytest.approx(
            0.01 * 0.05 / 0.08)
        assert fixing_outcome(1.08, 0.25, 1, none_).extra_payment == 0.0


class TestPathPresentValue:
    def test_single_fixing_no_breach(self):
        contract = make_contract(target=10.0, times=(1.0,))
        assert path_present_value([1.05], contract, [1.0]) == pytest.approx(0.05)

    def test_all_out_of_the_money(self):
        contract = make_contract(times=(0.5, 1.0))
        assert path_present_value([0.9, 0.95], contract, [1.0, 1.0]) == 0.0

    def test_three_fixings_by_knockout_type(self):
        # gross sequence 0.2, 0.2, 0.2 against U = 0.5 breaches at the third
        # fixing: full gain pays it, part gain trims to 0.1, no gain drops it
        path = [1.2, 1.2, 1.2]
        ones = [1.0, 1.0, 1.0]
        expect = {KnockoutType.FULL_GAIN: 0.6, KnockoutType.PART_GAIN: 0.5,
                  KnockoutType.NO_GAIN: 0.4}
        for kind, value in expect.items():
            contract = make_contract(kind, target=0.5)
            assert path_present_value(path, contract, ones) == pytest.approx(value)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            path_present_value([1.0], make_contract(), [1.0, 1.0, 1.0])


def random_paths(rng, n, k):
    return 1.0 + 0.35 * rng.standard_normal((n, k)).cumsum(axis=1) * 0.3 + \
        0.1 * rng.standard_normal((n, k))


class TestPathProperties:
    rng = np.random.default_rng(2024)
    n, k = 400, 8
    times = tuple(0.1 * (i + 1) for i in range(8))
    paths = np.abs(random_paths(rng, n, k)) + 1e-6
    discounts = np.exp(-0.03 * np.asarray(times))

    def total_payments(self, kind, target, path):
        contract = make_contract(kind, target=target, times=self.times)
        return path_present_value(path, contract, np.ones(self.k))

    def test_part_gain_total_is_capped_minimum(self):
        for path in self.paths[:200]:
            full = self.total_payments(KnockoutType.FULL_GAIN, 0.4, path)
            part = self.total_payments(KnockoutType.PART_GAIN, 0.4, path)
            assert part <= 0.4 + 1e-12
            assert part == pytest.approx(min(full, 0.4))

    def test_no_gain_total_strictly_below_target(self):
        for path in self.paths[:200]:
            none_ = self.total_payments(KnockoutType.NO_GAIN, 0.4, path)
            assert none_ < 0.4

    def test_full_gain_exceeds_only_via_final_payment(self):
        for path in self.paths[:200]:
            contract = make_contract(KnockoutType.FULL_GAIN, target=0.4,
                                     times=self.times)
            acc = 0.0
            last = 0.0
            for i in range(self.k):
                out = fixing_outcome(path[i], acc, i + 1, contract)
                acc += out.accumulation_increment
                last = out.payment
                if out.terminated:
                    break
            assert acc - last < 0.4

    def test_dominance_across_knockout_types(self):
        for path in self.paths:
            values = [
                path_present_value(path, make_contract(kind, target=0.4,
                                                       times=self.times),
                                   self.discounts)
                for kind in (KnockoutType.NO_GAIN, KnockoutType.PART_GAIN,
                             KnockoutType.FULL_GAIN)
            ]
            assert values[0] <= values[1] + 1e-14
            assert values[1] <= values[2] + 1e-14

    def test_huge_target_equals_vanilla_strip(self):
        contract = make_contract(KnockoutType.FULL_GAIN, target=1e9,
                                 times=self.times)
        for path in self.paths[:100]:
            strip = sum(
                d * max(path[i] - 1.0, 0.0)
                for i, d in enumerate(self.discounts)
            )
            got = path_present_value(path, contract, self.discounts)
            assert got == pytest.approx(strip, rel=1e-13, abs=1e-15)

    def test_batch_matches_scalar_bitwise(self):
        for kind in KnockoutType:
            for extras in (None, tuple(0.002 * (i + 1) for i in range(self.k))):
                contract = make_contract(kind, target=0.4, times=self.times,
                                         extras=extras)
                batch = batch_present_value(self.paths, contract, self.discounts)
                scalar = np.array([
                    path_present_value(p, contract, self.discounts)
                    for p in self.paths
                ])
                assert np.array_equal(batch, scalar)


class TestContractValidation:
    def test_requires_positive_target(self):
        with pytest.raises(ValueError, match="target must be positive"):
            make_contract(target=-1.0)

    def test_requires_positive_strike(self):
        with pytest.raises(ValueError, match="strike"):
            make_contract(strike=0.0)

    def test_requires_valid_beta(self):
        with pytest.raises(ValueError, match="beta"):
            make_contract(beta=2)

    def test_requires_increasing_times(self):
        with pytest.raises(ValueError, match="increasing"):
            make_contract(times=(0.5, 0.5, 0.75))
        with pytest.raises(ValueError, match="positive"):
            make_contract(times=(0.0, 0.5))

    def test_extra_payments_length(self):
        with pytest.raises(ValueError, match="entries"):
            make_contract(extras=(0.01, 0.01))

    def test_contract_is_immutable(self):
        contract = make_contract()
        with pytest.raises(AttributeError):
            contract.strike = 2.0
