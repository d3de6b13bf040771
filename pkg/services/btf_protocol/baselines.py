"""
Two-party baselines the BTF setup cost is compared against.

* ST-FHE: the client owns every FHE key, ships evk once and sends its
  features directly as FHE ciphertexts.
* Orig-TC: classic transciphering; the client owns every FHE key and
  ships pk_c, evk, dk and IV, then sends Trivium ciphertexts like BTF.

Each client keeps its own key set, so the server holds one evk (and in
Orig-TC one pk_c) per client.
"""

import logging

import numpy as np

from services.btf_protocol.db import TemplateStore
from services.btf_protocol.messages import Artifact, Channel
from services.btf_protocol.parties import Client, Party, Role, Server
from utils.errors import LengthMismatch, NoTemplate
from utils.etm_circuits import EtmConfig, etm
from utils.gate_boot import EvaluationKey, make_evaluation_key
from utils.hom_trivium import HomDecryptionKey
from utils.params import default_bootstrap, lookup_params
from utils.torus_lwe import LweCiphertext, decrypt, encrypt, keygen, make_public_key
from utils.trivium import e_keygen

logger = logging.getLogger(__name__)


def _fhe_keys(party: Party, params):
    with party.timed("Enc.KeyGen"):
        sk = keygen(params, party.rng)
        evk = make_evaluation_key(sk, default_bootstrap(params), party.rng)
    party.state.store("sk", sk)
    party.state.store("evk", evk)
    return sk, evk


def _decide(party: Party, params) -> int:
    message = party.expect(Channel.S_TO_C, Artifact.ENC_R)
    enc_r = LweCiphertext.from_bytes(message.payload, params, shape=())
    with party.timed("Dec(Enc(r), sk)"):
        return decrypt(enc_r, party.state.get("sk"))


class StFheClient(Party):
    """Client that encrypts its features bit by bit under its own FHE key."""

    def __init__(self, client_id: str, params, transport, rng: np.random.Generator, l_w: int):
        super().__init__(client_id, Role.CLIENT, transport, rng, forbidden=())
        self.client_id = client_id
        self.params = lookup_params(params)
        self.l_w = l_w
        self.last_result = None

    def key_setup(self) -> None:
        _, evk = _fhe_keys(self, self.params)
        self.send(Channel.C_TO_S, Artifact.EVK, evk.to_bytes())

    def _send_features(self, w, artifact: Artifact) -> None:
        w = np.asarray(w, dtype=np.uint8)
        if w.shape != (self.l_w,):
            raise LengthMismatch(f"Feature vector must have {self.l_w} bits, got {w.size}.")
        with self.timed("Enc(w, sk)"):
            enc_w = encrypt(w, self.state.get("sk"), self.rng)
        self.send(Channel.C_TO_S, artifact, enc_w.to_bytes())

    def register(self, w) -> None:
        self._send_features(w, Artifact.ENC_W)

    def verify(self, w_prime) -> None:
        self._send_features(w_prime, Artifact.ENC_W_PRIME)

    def accept_result(self) -> int:
        self.last_result = _decide(self, self.params)
        return self.last_result


class StFheServer(Party):
    """Server evaluating the match directly on FHE-encrypted features."""

    def __init__(self, params, transport, rng: np.random.Generator, l_w: int, threshold: int = None,
                 database_url: str = "sqlite://", name: str = "S"):
        super().__init__(name, Role.SERVER, transport, rng)
        self.params = lookup_params(params)
        self.l_w = l_w
        self.etm_config = EtmConfig(l_w, threshold)
        self.store = TemplateStore(database_url)

    def accept_keys(self, client_id: str) -> None:
        message = self.expect(Channel.C_TO_S, Artifact.EVK)
        evk = EvaluationKey.from_bytes(message.payload, default_bootstrap(self.params))
        self.state.store("evk", evk, client_id)
        self.store.enroll(client_id, self.params.name.value.lower())

    def _receive_features(self, artifact: Artifact) -> LweCiphertext:
        message = self.expect(Channel.C_TO_S, artifact)
        enc = LweCiphertext.from_bytes(message.payload, self.params)
        if enc.shape != (self.l_w,):
            raise LengthMismatch(f"Expected {self.l_w} ciphertexts, got {enc.shape}.")
        return enc

    def register(self, client_id: str) -> None:
        enc_w = self._receive_features(Artifact.ENC_W)
        self.store.save_template(client_id, enc_w.to_bytes(), enc_w.size)

    def has_template(self, client_id: str) -> bool:
        return self.store.has_template(client_id)

    def verify(self, client_id: str) -> None:
        if not self.has_template(client_id):
            raise NoTemplate(f"No template registered for client '{client_id}'.")
        blob, bits = self.store.load_template(client_id)
        template = LweCiphertext.from_bytes(blob, self.params, shape=(bits,))
        query = self._receive_features(Artifact.ENC_W_PRIME)
        with self.timed("Eval(ETM)"):
            enc_r = etm(template, query, self.etm_config, self.state.get("evk", client_id))
        self.send(Channel.S_TO_C, Artifact.ENC_R, enc_r.to_bytes())


class OrigTcClient(Client):
    """Transciphering client that also plays the key owner's role."""

    def __init__(self, client_id: str, params, transport, rng: np.random.Generator, l_w: int):
        super().__init__(client_id, params, transport, rng, l_w, forbidden=())

    def key_setup(self) -> None:
        """Generate the FHE keys and the Trivium key, then send pk_c, evk, dk and IV."""
        sk, evk = _fhe_keys(self, self.params)
        with self.timed("Enc.KeyGen"):
            pk_c = make_public_key(sk, self.l_w, rng=self.rng)
        key = e_keygen(80, self.rng)
        with self.timed("Enc(k, sk)"):
            dk = HomDecryptionKey(encrypt(key.k, sk, self.rng))
        self.state.store("k", key)
        self.send(Channel.C_TO_S, Artifact.PK_C, pk_c.to_bytes())
        self.send(Channel.C_TO_S, Artifact.EVK, evk.to_bytes())
        self.send(Channel.C_TO_S, Artifact.DK, dk.to_bytes())
        self.send(Channel.C_TO_S, Artifact.IV, key.iv_bytes)

    def reissue_pk_c(self) -> None:
        with self.timed("Enc.KeyGen"):
            pk_c = make_public_key(self.state.get("sk"), self.l_w, rng=self.rng)
        self.send(Channel.C_TO_S, Artifact.PK_C, pk_c.to_bytes())

    def accept_result(self) -> int:
        self.last_result = _decide(self, self.params)
        return self.last_result


class OrigTcServer(Server):
    """Transciphering server with one key set per client and results sent back to the client."""

    key_channel = Channel.C_TO_S
    result_channel = Channel.S_TO_C

    def _key_owner(self, client_id: str):
        return client_id

    def _receive_wrapped_dk(self, client_id: str):
        dk_bytes = self.expect(Channel.C_TO_S, Artifact.DK).payload
        iv = self.expect(Channel.C_TO_S, Artifact.IV).payload
        return dk_bytes, iv
