"""
Orchestration of complete protocol runs.

A session wires the parties of one model to a shared transport and ledger
and drives them through key distribution (KDP), initialization (INP),
registration (RS) and verification (VS). Parties only exchange framed
messages; the session merely decides who acts next.
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass, replace

import numpy as np

from services.btf_protocol.baselines import OrigTcClient, OrigTcServer, StFheClient, StFheServer
from services.btf_protocol.ledger import Phase, TransmissionLedger
from services.btf_protocol.messages import Model
from services.btf_protocol.parties import Client, PkPolicy, Server, TrustedParty
from services.btf_protocol.transport import make_transport
from utils.errors import LengthMismatch, MissingKey, NoTemplate
from utils.hom_trivium import BootstrapMode
from utils.params import lookup_params
from utils.validation import validate_client_count, validate_client_id, validate_feature_length, validate_threshold

logger = logging.getLogger(__name__)

DEFAULT_CLIENT = "client-1"


@dataclass(frozen=True)
class SessionConfig:
    """
    Settings of one protocol run.

    Attributes:
        params (str): Parameter set name.
        l_w (int): Feature length in bits (a multiple of 8).
        threshold (int): Hamming threshold; defaults to floor(0.25 * l_w).
        seed (int): Master seed; every party draws from its own child stream.
        transport (str): "inproc" or "socket".
        pk_policy (PkPolicy): When the server gets a fresh pk_c.
        bootstrap_mode (BootstrapMode): XOR policy of the homomorphic cipher.
        database_url (str): Server template store.
    """
    params: str = "tfhe128"
    l_w: int = 64
    threshold: int = None
    seed: int = None
    transport: str = "inproc"
    pk_policy: PkPolicy = PkPolicy.REISSUE_ON_EXHAUSTION
    bootstrap_mode: BootstrapMode = BootstrapMode.LAZY
    database_url: str = "sqlite://"

    def __post_init__(self):
        lookup_params(self.params)
        object.__setattr__(self, "l_w", validate_feature_length(self.l_w))
        threshold = validate_threshold(self.threshold, self.l_w)
        object.__setattr__(self, "threshold", int(0.25 * self.l_w) if threshold is None else threshold)
        object.__setattr__(self, "pk_policy", PkPolicy(self.pk_policy))
        object.__setattr__(self, "bootstrap_mode", BootstrapMode(self.bootstrap_mode))

    @classmethod
    def from_settings(cls, settings, **overrides) -> "SessionConfig":
        """Build a config from BtfSettings, letting non-None overrides win."""
        config = cls(
            params=settings.params,
            l_w=settings.l_w,
            threshold=settings.threshold,
            seed=settings.seed,
            transport=settings.transport,
            pk_policy=settings.pk_policy,
            bootstrap_mode=settings.bootstrap_mode,
            database_url=settings.database_url,
        )
        overrides = {key: value for key, value in overrides.items() if value is not None}
        if "l_w" in overrides and "threshold" not in overrides:
            overrides["threshold"] = int(0.25 * overrides["l_w"])
        return replace(config, **overrides) if overrides else config


class BaseSession:
    """
    Shared session plumbing.

    Subclasses build their parties in ``_build`` and implement the phases.
    """

    model: Model = None

    def __init__(self, config: SessionConfig, client_ids=(DEFAULT_CLIENT,)):
        self.config = config
        self.params = lookup_params(config.params)
        self.client_ids = [validate_client_id(c) for c in client_ids]
        validate_client_count(len(self.client_ids))
        if len(set(self.client_ids)) != len(self.client_ids):
            raise ValueError("Client ids must be unique.")
        self.ledger = TransmissionLedger(self.model, self.params.name.value.lower(), config.l_w)
        self.transport = make_transport(config.transport, self.model, self.ledger)
        seeds = np.random.SeedSequence(config.seed).spawn(2 + len(self.client_ids))
        self._rngs = [np.random.default_rng(s) for s in seeds]
        self.completed = []
        self._build()

    def _build(self) -> None:
        raise NotImplementedError

    def _client_rng(self, index: int) -> np.random.Generator:
        return self._rngs[2 + index]

    @property
    def parties(self) -> list:
        raise NotImplementedError

    @contextmanager
    def phase(self, phase: Phase):
        self.transport.phase = Phase(phase)
        logger.info("%s: %s started", self.model.value, phase.value)
        yield
        self.completed.append(Phase(phase))
        self.check_privacy()
        logger.info("%s: %s done, %d B sent so far", self.model.value, phase.value, self.ledger.total())

    def check_privacy(self) -> None:
        """
        Raises:
            PrivacyViolation: If any party holds a secret its role excludes.
        """
        for party in self.parties:
            party.state.check()

    def _require(self, phase: Phase) -> None:
        if phase not in self.completed:
            raise MissingKey(f"{phase.value} has not run yet.")

    def _client_id(self, client_id: str) -> str:
        client_id = self.client_ids[0] if client_id is None else client_id
        if client_id not in self.client_ids:
            raise ValueError(f"Unknown client '{client_id}'.")
        return client_id

    def _check_features(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.uint8)
        if w.shape != (self.config.l_w,):
            raise LengthMismatch(f"Feature vector must have {self.config.l_w} bits, got {w.size}.")
        return w

    def setup(self) -> None:
        """Key distribution followed by initialization."""
        self.kdp()
        self.inp()

    def kdp(self) -> None:
        raise NotImplementedError

    def inp(self) -> None:
        raise NotImplementedError

    def register(self, w, client_id: str = None) -> None:
        raise NotImplementedError

    def verify(self, w_prime, client_id: str = None) -> int:
        raise NotImplementedError

    def run(self, w, w_prime, client_id: str = None) -> int:
        """Complete flow for one client: setup, registration and one verification."""
        self.setup()
        self.register(w, client_id)
        return self.verify(w_prime, client_id)

    def close(self) -> None:
        self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()


class BtfSession(BaseSession):
    """Three-party BTF run with one global FHE key set shared by every client."""

    model = Model.BTF

    def _build(self):
        cfg = self.config
        self.trusted_party = TrustedParty(self.params, self.transport, self._rngs[0])
        self.server = Server(
            self.params, self.transport, self._rngs[1], cfg.l_w, cfg.threshold,
            pk_policy=cfg.pk_policy,
            bootstrap_mode=cfg.bootstrap_mode,
            database_url=cfg.database_url,
            reissue=lambda client_id: self.trusted_party.reissue_pk_c(cfg.l_w),
        )
        self.clients = {
            cid: Client(cid, self.params, self.transport, self._client_rng(i), cfg.l_w)
            for i, cid in enumerate(self.client_ids)
        }

    @property
    def parties(self):
        return [self.trusted_party, self.server, *self.clients.values()]

    def kdp(self):
        with self.phase(Phase.KDP):
            self.trusted_party.generate_keys()
            self.trusted_party.issue_server_keys(self.config.l_w)
            self.server.accept_server_keys()
            for cid, client in self.clients.items():
                self.trusted_party.issue_client_key()
                client.key_setup()
                self.server.enroll_client(cid)

    def inp(self):
        self._require(Phase.KDP)
        with self.phase(Phase.INP):
            for cid, client in self.clients.items():
                client.initialize()
                self.server.initialize(cid)

    def register(self, w, client_id=None):
        self._require(Phase.INP)
        cid = self._client_id(client_id)
        w = self._check_features(w)
        with self.phase(Phase.RS):
            self.clients[cid].register(w)
            self.server.register(cid)

    def verify(self, w_prime, client_id=None):
        cid = self._client_id(client_id)
        w_prime = self._check_features(w_prime)
        if not self.server.has_template(cid):
            raise NoTemplate(f"No template registered for client '{cid}'.")
        with self.phase(Phase.VS):
            self.clients[cid].verify(w_prime)
            self.server.verify(cid)
            r = self.trusted_party.decide()
            client_r = self.clients[cid].accept_result()
            server_r = self.server.accept_result()
        if not r == client_r == server_r:
            raise RuntimeError("Parties disagree on the authentication result.")
        return r


class MultiClientSession(BtfSession):
    """BTF run with ``n_c`` clients named client-1 ... client-n_c."""

    def __init__(self, config: SessionConfig, n_c: int):
        n_c = validate_client_count(n_c)
        super().__init__(config, [f"client-{i + 1}" for i in range(n_c)])


class StFheSession(BaseSession):
    """Two-party standard FHE run; each client owns its key set."""

    model = Model.ST_FHE

    def _build(self):
        cfg = self.config
        self.server = StFheServer(
            self.params, self.transport, self._rngs[1], cfg.l_w, cfg.threshold, database_url=cfg.database_url
        )
        self.clients = {
            cid: StFheClient(cid, self.params, self.transport, self._client_rng(i), cfg.l_w)
            for i, cid in enumerate(self.client_ids)
        }

    @property
    def parties(self):
        return [self.server, *self.clients.values()]

    def kdp(self):
        with self.phase(Phase.KDP):
            for cid, client in self.clients.items():
                client.key_setup()
                self.server.accept_keys(cid)

    def inp(self):
        self._require(Phase.KDP)
        # Nothing to initialize without a stream cipher.
        with self.phase(Phase.INP):
            pass

    def register(self, w, client_id=None):
        self._require(Phase.KDP)
        cid = self._client_id(client_id)
        w = self._check_features(w)
        with self.phase(Phase.RS):
            self.clients[cid].register(w)
            self.server.register(cid)

    def verify(self, w_prime, client_id=None):
        cid = self._client_id(client_id)
        w_prime = self._check_features(w_prime)
        if not self.server.has_template(cid):
            raise NoTemplate(f"No template registered for client '{cid}'.")
        with self.phase(Phase.VS):
            self.clients[cid].verify(w_prime)
            self.server.verify(cid)
            return self.clients[cid].accept_result()


class OrigTcSession(BaseSession):
    """Two-party transciphering run; each client owns its key set."""

    model = Model.ORIG_TC

    def _build(self):
        cfg = self.config
        self.server = OrigTcServer(
            self.params, self.transport, self._rngs[1], cfg.l_w, cfg.threshold,
            pk_policy=cfg.pk_policy,
            bootstrap_mode=cfg.bootstrap_mode,
            database_url=cfg.database_url,
            reissue=lambda client_id: self.clients[client_id].reissue_pk_c(),
        )
        self.clients = {
            cid: OrigTcClient(cid, self.params, self.transport, self._client_rng(i), cfg.l_w)
            for i, cid in enumerate(self.client_ids)
        }

    @property
    def parties(self):
        return [self.server, *self.clients.values()]

    def kdp(self):
        with self.phase(Phase.KDP):
            for cid, client in self.clients.items():
                client.key_setup()
                self.server.accept_server_keys(owner=cid)
                self.server.enroll_client(cid)

    def inp(self):
        self._require(Phase.KDP)
        with self.phase(Phase.INP):
            for cid, client in self.clients.items():
                client.initialize()
                self.server.initialize(cid)

    def register(self, w, client_id=None):
        self._require(Phase.INP)
        cid = self._client_id(client_id)
        w = self._check_features(w)
        with self.phase(Phase.RS):
            self.clients[cid].register(w)
            self.server.register(cid)

    def verify(self, w_prime, client_id=None):
        cid = self._client_id(client_id)
        w_prime = self._check_features(w_prime)
        if not self.server.has_template(cid):
            raise NoTemplate(f"No template registered for client '{cid}'.")
        with self.phase(Phase.VS):
            self.clients[cid].verify(w_prime)
            self.server.verify(cid)
            return self.clients[cid].accept_result()


SESSIONS = {
    Model.BTF: BtfSession,
    Model.ST_FHE: StFheSession,
    Model.ORIG_TC: OrigTcSession,
}


def open_session(model, config: SessionConfig, client_ids=(DEFAULT_CLIENT,)) -> BaseSession:
    """
    Create the session class for a model name or Model member.

    Raises:
        ValueError: If the model is unknown.
    """
    try:
        model = Model(model)
    except ValueError:
        raise ValueError(f"Unknown model '{model}'. Choose one of: {', '.join(m.value for m in Model)}.") from None
    return SESSIONS[model](config, client_ids)
