import math

import numpy as np
import pytest

from phasecode.code import (LogicalFrame, LogicalStateFidelities, Syndrome,
                            STABILIZER_GENERATORS, code_space_fidelity,
                            conjugate_by_frame, decode_syndrome, encode,
                            frame_sign, logical_observables, majority_vote_xl,
                            process_fidelity)
from phasecode.qstate import (DensityOperator, PauliString, apply_unitary,
                              expectation, measure_projective)

from conftest import LOGICAL_ZERO, LOGICAL_ONE, SQRT_HALF, triple

Z = np.diag([1.0, -1.0]).astype(complex)

SIX_STATES = [
    (1.0, 0.0), (0.0, 1.0),
    (SQRT_HALF, SQRT_HALF), (SQRT_HALF, -SQRT_HALF),
    (SQRT_HALF, SQRT_HALF * 1j), (SQRT_HALF, -SQRT_HALF * 1j),
]


def xbasis_product(signs):
    vec = np.array([1.0])
    for s in signs:
        vec = np.kron(vec, np.array([1.0, float(s)]) * SQRT_HALF)
    return DensityOperator.from_state_vector(vec)


class TestEncode:
    def test_matches_independent_construction(self):
        np.testing.assert_allclose(
            encode(1, 0).matrix, np.outer(LOGICAL_ZERO, LOGICAL_ZERO), atol=1e-14)
        np.testing.assert_allclose(
            encode(0, 1).matrix, np.outer(LOGICAL_ONE, LOGICAL_ONE), atol=1e-14)

    def test_logical_zero_expectations(self):
        rho = encode(1, 0)
        for letters in ("XXI", "IXX", "ZZZ"):
            assert abs(expectation(rho, PauliString(letters)) - 1.0) < 1e-12

    def test_plus_x_is_product_state(self):
        # |+X>_L = |+X,+X,+X|>, so X on any single qubit gives +1.
        rho = encode(SQRT_HALF, SQRT_HALF)
        assert abs(expectation(rho, PauliString("XII")) - 1.0) < 1e-12
        np.testing.assert_allclose(rho.matrix, xbasis_product([1, 1, 1]).matrix,
                                   atol=1e-12)

    def test_plus_y_logical_expectation(self):
        rho = encode(SQRT_HALF, SQRT_HALF * 1j)
        assert abs(expectation(rho, PauliString("YZZ")) - 1.0) < 1e-12

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            encode(1.0, 0.5)

    @pytest.mark.parametrize("alpha,beta", SIX_STATES)
    def test_purity_and_stabilizer_eigenstate(self, alpha, beta):
        rho = encode(alpha, beta)
        assert abs(rho.purity() - 1.0) < 1e-10
        for stab in STABILIZER_GENERATORS:
            assert abs(expectation(rho, stab) - 1.0) < 1e-12


class TestDecodeSyndrome:
    def test_table(self):
        assert decode_syndrome(Syndrome(1, 1)) is None
        assert decode_syndrome(Syndrome(-1, 1)) == 1
        assert decode_syndrome(Syndrome(-1, -1)) == 2
        assert decode_syndrome(Syndrome(1, -1)) == 3

    @pytest.mark.parametrize("alpha,beta", SIX_STATES)
    @pytest.mark.parametrize("qubit", [1, 2, 3])
    def test_every_single_z_error_is_named(self, alpha, beta, qubit):
        # Enumeration oracle: apply Z, measure both generators (outcomes are
        # deterministic), check the decoder names exactly the erred qubit.
        rho = apply_unitary(encode(alpha, beta), Z, [qubit - 1])
        outcomes = []
        for stab in STABILIZER_GENERATORS:
            outcome, rho, prob = measure_projective(rho, stab, 0.5)
            assert abs(prob - 1.0) < 1e-12
            outcomes.append(outcome)
        assert decode_syndrome(Syndrome(*outcomes)) == qubit

    def test_rejects_invalid_components(self):
        with pytest.raises(ValueError):
            Syndrome(0, 1)


class TestFrames:
    def test_logical_observables_on_plus_x(self):
        obs = logical_observables(encode(SQRT_HALF, SQRT_HALF),
                                  LogicalFrame.identity())
        np.testing.assert_allclose(obs, (1.0, 0.0, 0.0), atol=1e-12)

    def test_logical_observables_on_zero(self):
        obs = logical_observables(encode(1, 0), LogicalFrame.identity())
        np.testing.assert_allclose(obs, (0.0, 0.0, 1.0), atol=1e-12)

    @pytest.mark.parametrize("alpha,beta", SIX_STATES)
    @pytest.mark.parametrize("qubit", [1, 2, 3])
    def test_frame_conjugation_cancels_physical_z(self, alpha, beta, qubit):
        clean = encode(alpha, beta)
        reference = logical_observables(clean, LogicalFrame.identity())
        erred = apply_unitary(clean, Z, [qubit - 1])
        z = [False, False, False]
        z[qubit - 1] = True
        frame = LogicalFrame(z=tuple(z))
        np.testing.assert_allclose(logical_observables(erred, frame),
                                   reference, atol=1e-12)

    def test_single_permutation_selection(self):
        rho = apply_unitary(encode(SQRT_HALF, SQRT_HALF), Z, [1])
        frame = LogicalFrame.identity()
        # Z on qubit 2 flips X2 but not X1 or X3.
        assert abs(logical_observables(rho, frame, permutation=0)[0] - 1) < 1e-12
        assert abs(logical_observables(rho, frame, permutation=1)[0] + 1) < 1e-12
        assert abs(logical_observables(rho, frame, permutation=2)[0] - 1) < 1e-12

    def test_logical_flip_negates_z_and_y_readout(self):
        # The flip bit relabels |0>_L <-> |1>_L: Z_L and Y_L readouts change
        # sign, X_L readout is untouched.
        flipped = LogicalFrame(logical_flip=True)
        x0, y0, z0 = logical_observables(encode(1, 0), LogicalFrame.identity())
        x1, y1, z1 = logical_observables(encode(1, 0), flipped)
        assert abs(z1 + z0) < 1e-12
        plus_y = encode(SQRT_HALF, SQRT_HALF * 1j)
        assert abs(logical_observables(plus_y, flipped)[1] + 1.0) < 1e-12
        plus_x = encode(SQRT_HALF, SQRT_HALF)
        assert abs(logical_observables(plus_x, flipped)[0] - 1.0) < 1e-12

    def test_frame_sign_rules(self):
        frame = LogicalFrame(z=(True, False, False))
        assert frame_sign(PauliString("XII"), frame) == -1
        assert frame_sign(PauliString("ZZZ"), frame) == 1
        assert frame_sign(PauliString("YZZ"), frame) == -1
        flip = LogicalFrame(logical_flip=True)
        assert frame_sign(PauliString("ZZZ"), flip) == -1
        assert frame_sign(PauliString("XII"), flip) == 1
        assert conjugate_by_frame(PauliString("ZZZ"), flip).sign == -1


class TestMajorityVote:
    def test_all_plus(self):
        assert abs(majority_vote_xl(xbasis_product([1, 1, 1]),
                                    LogicalFrame.identity()) - 1.0) < 1e-12

    def test_single_flip_corrected(self):
        # (-1 + 1 + 1 + 1)/2 = 1: one flipped qubit is outvoted.
        assert abs(majority_vote_xl(xbasis_product([-1, 1, 1]),
                                    LogicalFrame.identity()) - 1.0) < 1e-12

    def test_double_flip_loses(self):
        # (-1 - 1 + 1 - 1)/2 = -1.
        assert abs(majority_vote_xl(xbasis_product([-1, -1, 1]),
                                    LogicalFrame.identity()) + 1.0) < 1e-12

    def test_majority_matches_plain_xl_up_to_one_flip(self):
        # Exhaustive over all 8 sign patterns: the majority-vote operator
        # always returns the majority sign; the plain X1 readout agrees
        # whenever at most one qubit is flipped and qubit 1 carries the
        # majority value, and loses to the majority vote on the two-flip
        # patterns that spare qubit 1.
        frame = LogicalFrame.identity()
        for pattern in [(s1, s2, s3) for s1 in (1, -1) for s2 in (1, -1)
                        for s3 in (1, -1)]:
            rho = xbasis_product(pattern)
            majority = 1 if sum(pattern) > 0 else -1
            value = majority_vote_xl(rho, frame)
            assert abs(value - majority) < 1e-12
            flips = pattern.count(-1)
            plain = expectation(rho, PauliString("XII"))
            if flips <= 1 and pattern[0] == majority:
                assert abs(plain - value) < 1e-12
            if flips == 2 and pattern[0] == 1:
                assert abs(plain - 1.0) < 1e-12
                assert abs(value + 1.0) < 1e-12


class TestFidelityCombinators:
    def test_process_fidelity_identity(self):
        assert process_fidelity(LogicalStateFidelities(1, 1, 1, 1, 1, 1)) == 1.0

    def test_process_fidelity_depolarized(self):
        fids = LogicalStateFidelities(*([0.5] * 6))
        assert abs(process_fidelity(fids) - 0.25) < 1e-15

    def test_process_fidelity_dephased(self):
        # Complete dephasing keeps the Z_L states only.
        fids = LogicalStateFidelities(1, 1, 0.5, 0.5, 0.5, 0.5)
        assert abs(process_fidelity(fids) - 0.5) < 1e-15

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            LogicalStateFidelities(1.2, 1, 1, 1, 1, 1)

    @pytest.mark.parametrize("alpha,beta", SIX_STATES)
    def test_code_space_fidelity_of_encoded_states(self, alpha, beta):
        assert abs(code_space_fidelity(encode(alpha, beta)) - 1.0) < 1e-12

    def test_code_space_fidelity_of_mixed_state(self):
        assert abs(code_space_fidelity(DensityOperator.maximally_mixed(3)) - 0.25) < 1e-14

    def test_code_space_fidelity_equals_no_error_probability(self):
        # With the configured input errors the code-space overlap equals the
        # no-error syndrome probability of the ideal detection model.
        from phasecode.analytics import syndrome_probabilities
        from phasecode.noise import DeviceParams, prepare_encoded
        params = DeviceParams.reference()
        rho = prepare_encoded(SQRT_HALF, SQRT_HALF, params)
        expected = syndrome_probabilities(params.p_in, 0.0)[0]
        assert abs(code_space_fidelity(rho) - expected) < 1e-12
        assert abs(expected - 0.7858) < 2e-3
