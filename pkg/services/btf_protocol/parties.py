"""
Party state machines of the BTF protocol: trusted party, client and server.

Parties never call each other. Every artifact crosses the shared transport
as a framed message, so the ledger sees exactly what each party sends, and
each party keeps its secrets in a PartyState that refuses the kinds its
role must never hold.
"""

import logging
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from services.btf_protocol.db import TemplateStore
from services.btf_protocol.ledger import Phase
from services.btf_protocol.messages import Artifact, Channel, ProtocolMessage
from utils.errors import ExhaustedPublicKey, FramingError, LengthMismatch, MissingKey, NoTemplate, PrivacyViolation
from utils.etm_circuits import EtmConfig, etm
from utils.gate_boot import EvaluationKey, make_evaluation_key
from utils.hom_trivium import BootstrapMode, HomDecryptionKey, efhe_init, efhe_keystream, hom_stream_decrypt
from utils.params import default_bootstrap, lookup_params
from utils.torus_lwe import LweCiphertext, PublicKeySet, decrypt, keygen, make_public_key, pk_encrypt, trivial
from utils.trivium import IV_BITS, KEY_BITS, e_encrypt, e_init, e_keygen, e_keystream, pack_bits, register_bits, unpack_bits

logger = logging.getLogger(__name__)


class Role(str, Enum):
    CLIENT = "client"
    SERVER = "server"
    TRUSTED_PARTY = "trusted-party"


class PkPolicy(str, Enum):
    """When the server obtains a fresh pk_c."""
    REISSUE_ON_EXHAUSTION = "reissue-on-exhaustion"
    REISSUE_PER_VERIFICATION = "reissue-per-verification"
    STRICT = "strict"


# Secrets each role must never hold in BTF.
FORBIDDEN_KINDS = {
    Role.CLIENT: frozenset({"sk"}),
    Role.SERVER: frozenset({"k", "sk"}),
    Role.TRUSTED_PARTY: frozenset({"k", "k_prime", "w", "c"}),
}


@dataclass
class PartyState:
    """
    Locally stored key material of one party.

    Values are keyed by kind ("sk", "k", "evk", ...) and by owner, the client
    id for per-client items and None for global ones.
    """
    role: Role
    forbidden: frozenset = frozenset()
    items: dict = field(default_factory=dict)

    def store(self, kind: str, value, owner: str = None) -> None:
        """
        Raises:
            PrivacyViolation: If the role must never hold ``kind``.
        """
        if kind in self.forbidden:
            raise PrivacyViolation(f"A {self.role.value} may not store '{kind}'.")
        self.items.setdefault(kind, {})[owner] = value

    def get(self, kind: str, owner: str = None):
        """
        Raises:
            MissingKey: If nothing of that kind is stored for the owner.
        """
        try:
            return self.items[kind][owner]
        except KeyError:
            who = f" for '{owner}'" if owner is not None else ""
            raise MissingKey(f"{self.role.value} holds no '{kind}'{who}.") from None

    def holds(self, kind: str, owner: str = None) -> bool:
        return owner in self.items.get(kind, {})

    def discard(self, kind: str, owner: str = None) -> None:
        values = self.items.get(kind, {})
        values.pop(owner, None)
        if not values:
            self.items.pop(kind, None)

    @property
    def kinds(self) -> set:
        return set(self.items)

    def check(self) -> None:
        """Re-assert the separation over everything currently held."""
        leaked = self.kinds & self.forbidden
        if leaked:
            raise PrivacyViolation(f"A {self.role.value} holds {sorted(leaked)}.")


def double_encrypt(data: bytes, k_prime: bytes) -> bytes:
    """
    XOR serialized bytes with the k′ keystream; the same call strips the layer.

    Raises:
        LengthMismatch: If the keystream and the data differ in length.
    """
    if len(data) != len(k_prime):
        raise LengthMismatch(f"k′ keystream has {len(k_prime)} bytes, data has {len(data)}.")
    return np.bitwise_xor(
        np.frombuffer(data, dtype=np.uint8), np.frombuffer(k_prime, dtype=np.uint8)
    ).tobytes()


class Party:
    """Common plumbing: state, transport access and operation timing."""

    def __init__(self, name: str, role: Role, transport, rng: np.random.Generator, forbidden=None):
        self.name = name
        self.role = role
        self.transport = transport
        self.rng = rng
        self.state = PartyState(role, FORBIDDEN_KINDS[role] if forbidden is None else frozenset(forbidden))

    def timed(self, label: str):
        return self.transport.ledger.timed(self.transport.phase, self.name, label)

    def send(self, channel: Channel, artifact: Artifact, payload: bytes, secure: bool = False) -> None:
        self.transport.send(ProtocolMessage(channel, artifact, payload, secure))

    def expect(self, channel: Channel, artifact: Artifact) -> ProtocolMessage:
        """
        Receive the next message on a channel and check its artifact.

        Raises:
            FramingError: If a different artifact arrives.
        """
        message = self.transport.receive(channel)
        if message.artifact != artifact:
            raise FramingError(
                f"{self.name} expected {artifact.label} on {channel.label}, got {message.artifact.label}."
            )
        return message


class TrustedParty(Party):
    """
    Holds the FHE secret key and nothing else secret.

    Issues pk_k to clients and pk_c plus evk to the server, decrypts the
    encrypted matching result and notifies both client and server.
    """

    def __init__(self, params, transport, rng: np.random.Generator, name: str = "TP"):
        super().__init__(name, Role.TRUSTED_PARTY, transport, rng)
        self.params = lookup_params(params)

    def generate_keys(self) -> None:
        with self.timed("Enc.KeyGen"):
            sk = keygen(self.params, self.rng)
            evk = make_evaluation_key(sk, default_bootstrap(self.params), self.rng)
        self.state.store("sk", sk)
        self.state.store("evk", evk)
        logger.info("%s generated %s keys (evk %d B)", self.name, self.params.name.value, evk.serialized_size)

    def _public_key(self, count: int) -> PublicKeySet:
        with self.timed("Enc.KeyGen"):
            return make_public_key(self.state.get("sk"), count, rng=self.rng)

    def issue_client_key(self) -> None:
        """Send a fresh pk_k with one sample per Trivium key bit."""
        pk_k = self._public_key(KEY_BITS)
        self.send(Channel.TP_TO_C, Artifact.PK_K, pk_k.to_bytes())

    def issue_server_keys(self, l_w: int) -> None:
        """Send pk_c (one sample per feature bit) and evk to the server."""
        pk_c = self._public_key(l_w)
        self.state.store("pk_c", pk_c)
        self.send(Channel.TP_TO_S, Artifact.PK_C, pk_c.to_bytes())
        self.send(Channel.TP_TO_S, Artifact.EVK, self.state.get("evk").to_bytes())

    def reissue_pk_c(self, l_w: int) -> None:
        pk_c = self._public_key(l_w)
        self.state.store("pk_c", pk_c)
        self.send(Channel.TP_TO_S, Artifact.PK_C, pk_c.to_bytes())
        logger.info("%s reissued pk_c with %d samples", self.name, l_w)

    def decide(self) -> int:
        """
        Decrypt Enc(r) from the server and notify client and server.

        Returns:
            int: The authentication result r.
        """
        message = self.expect(Channel.S_TO_TP, Artifact.ENC_R)
        enc_r = LweCiphertext.from_bytes(message.payload, self.params, shape=())
        with self.timed("Dec(Enc(r), sk)"):
            r = decrypt(enc_r, self.state.get("sk"))
        payload = bytes([r])
        self.send(Channel.TP_TO_C, Artifact.R, payload, secure=True)
        self.send(Channel.TP_TO_S, Artifact.R, payload, secure=True)
        logger.info("%s decided r=%d", self.name, r)
        return r


class Client(Party):
    """
    Biometric client: holds only its Trivium key and stream state.

    Features leave the client as Trivium ciphertexts, l_w/8 bytes each time.
    """

    def __init__(self, client_id: str, params, transport, rng: np.random.Generator, l_w: int, forbidden=None):
        super().__init__(client_id, Role.CLIENT, transport, rng, forbidden)
        self.client_id = client_id
        self.params = lookup_params(params)
        self.l_w = l_w
        self.last_result = None

    def key_setup(self) -> None:
        """
        Key distribution on the client side.

        Generates (k, IV), encrypts k under the received pk_k into dk, wraps
        dk with a fresh k′ and sends E(dk, k′), IV and k′ to the server.
        """
        message = self.expect(Channel.TP_TO_C, Artifact.PK_K)
        pk_k = PublicKeySet.from_bytes(message.payload, self.params)
        key = e_keygen(80, self.rng)
        with self.timed("Enc(k, pk_k)"):
            dk = HomDecryptionKey(pk_encrypt(key.k, pk_k))
        dk_bytes = dk.to_bytes()
        k_prime = self.rng.bytes(len(dk_bytes))
        with self.timed("E(dk, k′)"):
            wrapped = double_encrypt(dk_bytes, k_prime)
        self.state.store("k", key)
        self.send(Channel.C_TO_S, Artifact.E_DK, wrapped)
        self.send(Channel.C_TO_S, Artifact.IV, key.iv_bytes, secure=True)
        self.send(Channel.C_TO_S, Artifact.K_PRIME, k_prime, secure=True)

    def initialize(self) -> None:
        with self.timed("E.Init"):
            cipher = e_init(self.state.get("k"))
        self.state.store("cipher", cipher)

    @property
    def steps(self) -> int:
        return self.state.get("cipher").steps

    def _send_features(self, w, artifact: Artifact) -> None:
        w = np.asarray(w, dtype=np.uint8)
        if w.shape != (self.l_w,):
            raise LengthMismatch(f"Feature vector must have {self.l_w} bits, got {w.size}.")
        cipher = self.state.get("cipher")
        with self.timed("E.KeyStream"):
            keystream = e_keystream(cipher, self.l_w)
        with self.timed("E(w, k̄)"):
            c = e_encrypt(w, keystream)
        self.send(Channel.C_TO_S, artifact, pack_bits(c))

    def register(self, w) -> None:
        self._send_features(w, Artifact.C)

    def verify(self, w_prime) -> None:
        self._send_features(w_prime, Artifact.C_PRIME)

    def accept_result(self) -> int:
        """The only way the client learns r: the trusted party's notification."""
        message = self.expect(Channel.TP_TO_C, Artifact.R)
        self.last_result = message.payload[0]
        return self.last_result


class Server(Party):
    """
    Matching server.

    Holds pk_c and evk, the per-client dk and IV, the homomorphic cipher
    states and the encrypted templates; never a Trivium key or the FHE
    secret key.

    Args:
        params: Parameter set of every ciphertext it handles.
        transport: Shared transport.
        rng (np.random.Generator): Entropy source.
        l_w (int): Feature length.
        threshold (int): Hamming threshold t.
        pk_policy (PkPolicy): When to obtain a fresh pk_c.
        bootstrap_mode (BootstrapMode): XOR policy of the homomorphic cipher.
        database_url (str): Template store location.
        reissue (callable): Called with a client id to have a fresh pk_c sent.
    """

    key_channel = Channel.TP_TO_S
    result_channel = Channel.S_TO_TP

    def __init__(self, params, transport, rng: np.random.Generator, l_w: int, threshold: int = None,
                 pk_policy: PkPolicy = PkPolicy.REISSUE_ON_EXHAUSTION,
                 bootstrap_mode: BootstrapMode = BootstrapMode.LAZY,
                 database_url: str = "sqlite://", reissue=None, name: str = "S"):
        super().__init__(name, Role.SERVER, transport, rng)
        self.params = lookup_params(params)
        self.l_w = l_w
        self.etm_config = EtmConfig(l_w, threshold)
        self.pk_policy = PkPolicy(pk_policy)
        self.bootstrap_mode = BootstrapMode(bootstrap_mode)
        self.store = TemplateStore(database_url)
        self.reissue = reissue
        self.last_result = None
        self._locks = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()

    def _lock(self, client_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks[client_id]

    def _key_owner(self, client_id: str):
        """Owner under which pk_c and evk are kept: one global set in BTF."""
        return None

    def _receive_pk_c(self, owner=None) -> None:
        message = self.expect(self.key_channel, Artifact.PK_C)
        self.state.store("pk_c", PublicKeySet.from_bytes(message.payload, self.params), owner)

    def accept_server_keys(self, owner: str = None) -> None:
        self._receive_pk_c(owner)
        message = self.expect(self.key_channel, Artifact.EVK)
        evk = EvaluationKey.from_bytes(message.payload, default_bootstrap(self.params))
        self.state.store("evk", evk, owner)

    def _receive_wrapped_dk(self, client_id: str):
        wrapped = self.expect(Channel.C_TO_S, Artifact.E_DK).payload
        iv = self.expect(Channel.C_TO_S, Artifact.IV).payload
        k_prime = self.expect(Channel.C_TO_S, Artifact.K_PRIME).payload
        self.state.store("k_prime", k_prime, client_id)
        with self.timed("E⁻¹(E(dk,k′), k′)"):
            dk_bytes = double_encrypt(wrapped, self.state.get("k_prime", client_id))
        # k′ is only needed to strip the wrapping layer.
        self.state.discard("k_prime", client_id)
        return dk_bytes, iv

    def enroll_client(self, client_id: str) -> None:
        """Recover dk from E(dk, k′) and keep dk and IV for the client."""
        with self._lock(client_id):
            dk_bytes, iv = self._receive_wrapped_dk(client_id)
            if len(iv) * 8 != IV_BITS:
                raise LengthMismatch(f"IV must be {IV_BITS // 8} bytes, got {len(iv)}.")
            dk = HomDecryptionKey.from_bytes(dk_bytes, self.params)
            self.state.store("dk", dk, client_id)
            self.state.store("iv", iv, client_id)
            self.store.enroll(client_id, self.params.name.value.lower(), dk_bytes, iv)
            logger.info("%s enrolled %s", self.name, client_id)

    def evaluation_key(self, client_id: str = None) -> EvaluationKey:
        return self.state.get("evk", self._key_owner(client_id))

    def initialize(self, client_id: str) -> None:
        """
        Start the homomorphic cipher for a client and precompute l_w keystream bits.

        Raises:
            MissingKey: If key distribution has not delivered dk, IV or evk.
        """
        with self._lock(client_id):
            evk = self.evaluation_key(client_id)
            dk = self.state.get("dk", client_id)
            iv = self.state.get("iv", client_id)
            with self.timed("Enc(IV)"):
                ct_iv = trivial(register_bits(iv), self.params)
            with self.timed("E^FHE.Init"):
                cipher = efhe_init(ct_iv, dk, evk, self.bootstrap_mode)
            with self.timed("E^FHE.KeyStream"):
                buffered = efhe_keystream(cipher, self.l_w)
            self.state.store("cipher", cipher, client_id)
            self.state.store("keystream", buffered, client_id)

    def keystream_position(self, client_id: str) -> int:
        """Rounds of the client's stream consumed so far, precomputed bits excluded."""
        cipher = self.state.get("cipher", client_id)
        buffered = self.state.items.get("keystream", {}).get(client_id)
        return cipher.steps - (0 if buffered is None else buffered.size)

    def _keystream(self, client_id: str) -> LweCiphertext:
        if self.state.holds("keystream", client_id):
            keystream = self.state.get("keystream", client_id)
            self.state.discard("keystream", client_id)
            return keystream
        cipher = self.state.get("cipher", client_id)
        with self.timed("E^FHE.KeyStream"):
            return efhe_keystream(cipher, self.l_w)

    def _receive_bits(self, artifact: Artifact) -> np.ndarray:
        payload = self.expect(Channel.C_TO_S, artifact).payload
        if len(payload) * 8 != self.l_w:
            raise LengthMismatch(f"Expected {self.l_w // 8} bytes of stream ciphertext, got {len(payload)}.")
        return unpack_bits(payload, self.l_w)

    def _request_pk_c(self, client_id: str) -> None:
        if self.reissue is None:
            raise ExhaustedPublicKey("pk_c is exhausted and no issuer is connected.")
        self.reissue(client_id)
        self._receive_pk_c(self._key_owner(client_id))

    def _encrypt_stream_ciphertext(self, client_id: str, c: np.ndarray) -> LweCiphertext:
        owner = self._key_owner(client_id)
        verifying = self.transport.phase == Phase.VS
        if verifying and self.pk_policy == PkPolicy.REISSUE_PER_VERIFICATION:
            self._request_pk_c(client_id)
        elif self.state.get("pk_c", owner).remaining < c.size and self.pk_policy != PkPolicy.STRICT:
            self._request_pk_c(client_id)
        with self.timed("Enc(c, pk_c)"):
            return pk_encrypt(c, self.state.get("pk_c", owner))

    def _decrypt_stream(self, client_id: str, artifact: Artifact) -> LweCiphertext:
        c = self._receive_bits(artifact)
        keystream = self._keystream(client_id)
        enc_c = self._encrypt_stream_ciphertext(client_id, c)
        with self.timed("Eval(E⁻¹)"):
            return hom_stream_decrypt(enc_c, keystream, self.evaluation_key(client_id))

    def register(self, client_id: str) -> None:
        """Turn the received c into the encrypted template and store it."""
        with self._lock(client_id):
            template = self._decrypt_stream(client_id, Artifact.C)
            self.store.save_template(client_id, template.to_bytes(), template.size)
            logger.info("%s stored a %d-bit template for %s", self.name, template.size, client_id)

    def has_template(self, client_id: str) -> bool:
        return self.store.has_template(client_id)

    def load_template(self, client_id: str) -> LweCiphertext:
        """
        Raises:
            NoTemplate: If the client never registered.
        """
        blob, bits = self.store.load_template(client_id)
        return LweCiphertext.from_bytes(blob, self.params, shape=(bits,))

    def verify(self, client_id: str) -> None:
        """
        Match the received c′ against the stored template and send Enc(r).

        Raises:
            NoTemplate: If the client never registered.
        """
        with self._lock(client_id):
            if not self.has_template(client_id):
                raise NoTemplate(f"No template registered for client '{client_id}'.")
            template = self.load_template(client_id)
            query = self._decrypt_stream(client_id, Artifact.C_PRIME)
            with self.timed("Eval(ETM)"):
                enc_r = etm(template, query, self.etm_config, self.evaluation_key(client_id))
            self.send(self.result_channel, Artifact.ENC_R, enc_r.to_bytes())

    def accept_result(self) -> int:
        message = self.expect(Channel.TP_TO_S, Artifact.R)
        self.last_result = message.payload[0]
        return self.last_result
