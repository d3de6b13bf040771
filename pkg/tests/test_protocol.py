from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from services.btf_protocol.ledger import SETUP_PHASES, Phase
from services.btf_protocol.messages import Artifact, Channel, Model, flow_multiset
from services.btf_protocol.parties import FORBIDDEN_KINDS, PkPolicy, Role, double_encrypt
from services.btf_protocol.session import (
    BtfSession,
    MultiClientSession,
    OrigTcSession,
    SessionConfig,
    StFheSession,
    open_session,
)
from tools.btf_harness.reports import ordinal_checks
from utils.errors import ExhaustedPublicKey, LengthMismatch, MissingKey, NoTemplate, PrivacyViolation
from utils.features import genuine_query, synthetic_template
from utils.hom_trivium import HomDecryptionKey
from utils.torus_lwe import decrypt

CONFIG = SessionConfig(params="desk", l_w=64, seed=7)
THRESHOLD = 16


@pytest.fixture(scope="module")
def features():
    rng = np.random.default_rng(3)
    w = synthetic_template(rng, 64)
    return w, genuine_query(w, THRESHOLD, rng), genuine_query(w, THRESHOLD + 1, rng)


@pytest.fixture(scope="module")
def btf_run(features):
    """One BTF session taken through setup, registration and two verifications."""
    w, genuine, impostor = features
    session = BtfSession(CONFIG)
    cid = session.client_ids[0]
    client = session.clients[cid]
    session.setup()
    positions = {"after_inp": (client.steps, session.server.keystream_position(cid))}
    session.register(w)
    positions["after_rs"] = (client.steps, session.server.keystream_position(cid))
    results = [session.verify(genuine), session.verify(impostor)]
    positions["after_vs"] = (client.steps, session.server.keystream_position(cid))
    yield session, results, positions
    session.close()


@pytest.fixture(scope="module")
def baseline_results(features):
    w, genuine, impostor = features
    results = {}
    for cls in (StFheSession, OrigTcSession):
        with cls(CONFIG) as session:
            session.setup()
            session.register(w)
            results[cls.model] = ([session.verify(genuine), session.verify(impostor)], session)
    return results


def test_config_defaults():
    assert CONFIG.threshold == THRESHOLD
    assert CONFIG.pk_policy is PkPolicy.REISSUE_ON_EXHAUSTION
    assert SessionConfig(params="desk", l_w=2048).threshold == 512
    with pytest.raises(ValueError):
        SessionConfig(params="desk", l_w=60)


def test_btf_accepts_genuine_and_rejects_beyond_threshold(btf_run):
    session, results, _ = btf_run
    assert results == [1, 0]
    cid = session.client_ids[0]
    assert session.clients[cid].last_result == 0
    assert session.server.last_result == 0


def test_btf_flow_multiset(btf_run):
    session, _, _ = btf_run
    assert flow_multiset(session.ledger.entries) == Counter({
        (Channel.TP_TO_S, Artifact.PK_C): 3,
        (Channel.TP_TO_S, Artifact.EVK): 1,
        (Channel.TP_TO_C, Artifact.PK_K): 1,
        (Channel.C_TO_S, Artifact.E_DK): 1,
        (Channel.C_TO_S, Artifact.IV): 1,
        (Channel.C_TO_S, Artifact.K_PRIME): 1,
        (Channel.C_TO_S, Artifact.C): 1,
        (Channel.C_TO_S, Artifact.C_PRIME): 2,
        (Channel.S_TO_TP, Artifact.ENC_R): 2,
        (Channel.TP_TO_C, Artifact.R): 2,
        (Channel.TP_TO_S, Artifact.R): 2,
    })
    assert session.completed == [Phase.KDP, Phase.INP, Phase.RS, Phase.VS, Phase.VS]


def test_btf_setup_sizes_at_desk(btf_run):
    session, _, _ = btf_run
    ct = session.params.ciphertext_bytes
    assert session.ledger.by_channel(SETUP_PHASES)[Channel.C_TO_S] == 2 * 80 * ct + 10
    assert session.ledger.unit_size(Artifact.PK_K) == 80 * ct
    assert session.ledger.unit_size(Artifact.C) == 8
    assert session.ledger.unit_size(Artifact.ENC_R) == ct
    assert session.ledger.unit_size(Artifact.R) == 1


def test_initialization_sends_nothing_and_aligns_streams(btf_run):
    session, _, positions = btf_run
    assert session.ledger.total(phases=[Phase.INP]) == 0
    assert positions["after_inp"] == (4 * 288, 4 * 288)
    assert positions["after_rs"] == (4 * 288 + 64, 4 * 288 + 64)
    assert positions["after_vs"] == (4 * 288 + 192, 4 * 288 + 192)


def test_transport_counts_match_ledger(btf_run):
    session, _, _ = btf_run
    assert session.transport.payload_bytes == session.ledger.total()


def test_parties_hold_only_what_their_role_allows(btf_run):
    session, _, _ = btf_run
    session.check_privacy()
    cid = session.client_ids[0]
    assert not session.server.state.kinds & {"k", "sk", "k_prime"}
    assert not session.trusted_party.state.kinds & FORBIDDEN_KINDS[Role.TRUSTED_PARTY]
    assert session.clients[cid].state.kinds == {"k", "cipher"}
    with pytest.raises(PrivacyViolation):
        session.server.state.store("k", object(), cid)
    with pytest.raises(PrivacyViolation):
        session.trusted_party.state.store("w", object())


def test_server_dk_decrypts_to_client_key(btf_run):
    session, _, _ = btf_run
    cid = session.client_ids[0]
    sk = session.trusted_party.state.get("sk")
    dk = session.server.state.get("dk", cid)
    assert np.array_equal(decrypt(dk.bits, sk), session.clients[cid].state.get("k").k)


def test_stored_template_decrypts_to_features(btf_run, features):
    session, _, _ = btf_run
    cid = session.client_ids[0]
    sk = session.trusted_party.state.get("sk")
    template = session.server.load_template(cid)
    assert template.shape == (64,)
    assert np.array_equal(decrypt(template, sk), features[0])
    assert session.server.store.count() == 1


def test_timing_labels_and_ordinal_checks(btf_run):
    session, _, _ = btf_run
    labels = {t.label for t in session.ledger.timings}
    assert {
        "Enc.KeyGen", "Enc(k, pk_k)", "E(dk, k′)", "E⁻¹(E(dk,k′), k′)", "E.Init", "Enc(IV)",
        "E^FHE.Init", "E^FHE.KeyStream", "E.KeyStream", "E(w, k̄)", "Enc(c, pk_c)",
        "Eval(E⁻¹)", "Eval(ETM)", "Dec(Enc(r), sk)",
    } <= labels
    assert ordinal_checks(session.ledger) == {"setup": True, "registration": True}


def test_double_encryption_layer(rng):
    data = rng.bytes(2080)
    k_prime = rng.bytes(2080)
    wrapped = double_encrypt(data, k_prime)
    changed = np.unpackbits(np.frombuffer(wrapped, np.uint8) ^ np.frombuffer(data, np.uint8)).mean()
    assert 0.45 < changed < 0.55
    assert double_encrypt(wrapped, k_prime) == data
    with pytest.raises(LengthMismatch):
        double_encrypt(data, k_prime[:-1])


def test_wrapped_dk_reveals_nothing_to_the_secret_key_holder(btf_run):
    session, _, _ = btf_run
    cid = session.client_ids[0]
    sk = session.trusted_party.state.get("sk")
    k = session.clients[cid].state.get("k").k
    dk_bytes = session.server.state.get("dk", cid).to_bytes()
    recovered = []
    for seed in range(5):
        k_prime = np.random.default_rng(100 + seed).bytes(len(dk_bytes))
        wrapped = HomDecryptionKey.from_bytes(double_encrypt(dk_bytes, k_prime), session.params)
        assert wrapped.bits.shape == (80,)
        recovered.append(decrypt(wrapped.bits, sk) == k)
    assert 0.35 < np.mean(recovered) < 0.65
    assert np.array_equal(decrypt(HomDecryptionKey.from_bytes(dk_bytes, session.params).bits, sk), k)


def test_baselines_agree_with_btf(btf_run, baseline_results):
    _, btf_results, _ = btf_run
    for model, (results, _) in baseline_results.items():
        assert results == btf_results, model


def test_baseline_flows(baseline_results):
    st_fhe = baseline_results[Model.ST_FHE][1].ledger
    assert flow_multiset(st_fhe.entries) == Counter({
        (Channel.C_TO_S, Artifact.EVK): 1,
        (Channel.C_TO_S, Artifact.ENC_W): 1,
        (Channel.C_TO_S, Artifact.ENC_W_PRIME): 2,
        (Channel.S_TO_C, Artifact.ENC_R): 2,
    })
    assert st_fhe.total(phases=[Phase.INP]) == 0

    orig_tc = baseline_results[Model.ORIG_TC][1].ledger
    assert flow_multiset(orig_tc.select([Phase.KDP])) == Counter({
        (Channel.C_TO_S, Artifact.PK_C): 1,
        (Channel.C_TO_S, Artifact.EVK): 1,
        (Channel.C_TO_S, Artifact.DK): 1,
        (Channel.C_TO_S, Artifact.IV): 1,
    })
    assert flow_multiset(orig_tc.select([Phase.VS]))[(Channel.S_TO_C, Artifact.ENC_R)] == 2


def test_setup_c_to_s_ordering(btf_run, baseline_results):
    session, _, _ = btf_run
    btf = session.ledger.total(Channel.C_TO_S, SETUP_PHASES)
    st_fhe = baseline_results[Model.ST_FHE][1].ledger.total(Channel.C_TO_S, SETUP_PHASES)
    orig_tc = baseline_results[Model.ORIG_TC][1].ledger.total(Channel.C_TO_S, SETUP_PHASES)
    assert btf < st_fhe < orig_tc


def test_phase_order_is_enforced(features):
    w = features[0]
    with BtfSession(CONFIG) as session:
        with pytest.raises(MissingKey):
            session.inp()
        with pytest.raises(MissingKey):
            session.register(w)
        with pytest.raises(NoTemplate):
            session.verify(w)
        with pytest.raises(ValueError):
            session.register(w, client_id="client-9")


def test_session_rejects_bad_clients():
    with pytest.raises(ValueError):
        BtfSession(CONFIG, client_ids=("a", "a"))
    with pytest.raises(ValueError):
        BtfSession(CONFIG, client_ids=("bad/id",))
    with pytest.raises(ValueError):
        open_session("carrier-pigeon", CONFIG)


def test_strict_policy_refuses_to_reuse_pk_c(features):
    w, genuine, _ = features
    with BtfSession(replace(CONFIG, pk_policy="strict")) as session:
        session.setup()
        with pytest.raises(NoTemplate):
            session.verify(genuine)
        session.register(w)
        with pytest.raises(ExhaustedPublicKey):
            session.verify(genuine)
        assert session.ledger.select([Phase.VS], Channel.TP_TO_S) == []


def test_per_verification_policy_reissues_every_time(features):
    w, genuine, _ = features
    with BtfSession(replace(CONFIG, pk_policy="reissue-per-verification", seed=8)) as session:
        session.setup()
        session.register(w)
        assert session.verify(genuine) == 1
        reissued = [e for e in session.ledger.select([Phase.VS]) if e.artifact == Artifact.PK_C]
        assert len(reissued) == 1
        assert reissued[0].nbytes == 64 * session.params.ciphertext_bytes


def test_multi_client_shares_one_key_set(features):
    w, genuine, _ = features
    other = synthetic_template(np.random.default_rng(4), 64)
    with MultiClientSession(replace(CONFIG, seed=9), 2) as session:
        session.setup()
        session.register(w, "client-1")
        session.register(other, "client-2")
        kdp = flow_multiset(session.ledger.select([Phase.KDP]))
        assert kdp[(Channel.TP_TO_S, Artifact.PK_C)] == 1
        assert kdp[(Channel.TP_TO_S, Artifact.EVK)] == 1
        assert kdp[(Channel.TP_TO_C, Artifact.PK_K)] == 2
        assert kdp[(Channel.C_TO_S, Artifact.E_DK)] == 2
        assert session.server.store.count() == 2
        assert session.verify(genuine, "client-1") == 1
        assert session.verify(genuine, "client-2") == 0


def test_socket_transport_matches_inproc_sizes(btf_run, features):
    session, _, _ = btf_run
    w, genuine, _ = features
    with BtfSession(replace(CONFIG, transport="socket")) as over_sockets:
        assert over_sockets.run(w, genuine) == 1
        assert over_sockets.ledger.by_channel(SETUP_PHASES) == session.ledger.by_channel(SETUP_PHASES)
        assert over_sockets.transport.payload_bytes == over_sockets.ledger.total()
