"""
Database setup for the BTF server's template store.

Each server owns its own engine so several simulated servers can run in
one process against separate in-memory databases.
"""

from datetime import datetime, timezone

from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool

from services.btf_protocol.models import Base, ClientRecord
from utils.errors import MissingKey, NoTemplate


def make_session_factory(database_url: str = "sqlite://"):
    """
    Create an engine for ``database_url``, create the tables and return a session factory.

    In-memory SQLite shares one connection across threads so every session
    sees the same database.
    """
    kwargs = {"future": True}
    if database_url.startswith("sqlite"):
        kwargs["connect_args"] = {"check_same_thread": False}
        if database_url in ("sqlite://", "sqlite:///:memory:"):
            kwargs["poolclass"] = StaticPool
    else:
        kwargs["pool_pre_ping"] = True
    engine = create_engine(database_url, **kwargs)
    Base.metadata.create_all(engine)
    return sessionmaker(bind=engine, expire_on_commit=False, future=True)


class TemplateStore:
    """
    Server-side persistence of per-client records.

    Every method opens its own short session; callers serialize access to
    one client's record with their own per-client lock.
    """

    def __init__(self, database_url: str = "sqlite://"):
        self.SessionLocal = make_session_factory(database_url)

    def enroll(self, client_id: str, params: str, dk: bytes = None, iv: bytes = None) -> None:
        with self.SessionLocal() as db:
            record = db.query(ClientRecord).filter_by(client_id=client_id).one_or_none()
            if record is None:
                record = ClientRecord(client_id=client_id, params=params)
                db.add(record)
            record.params = params
            record.dk = dk
            record.iv = iv
            record.template = None
            record.template_bits = 0
            db.commit()

    def get(self, client_id: str) -> ClientRecord:
        """
        Raises:
            MissingKey: If the client never went through key distribution.
        """
        with self.SessionLocal() as db:
            record = db.query(ClientRecord).filter_by(client_id=client_id).one_or_none()
        if record is None:
            raise MissingKey(f"Client '{client_id}' is not enrolled.")
        return record

    def save_template(self, client_id: str, template: bytes, bits: int) -> None:
        with self.SessionLocal() as db:
            record = db.query(ClientRecord).filter_by(client_id=client_id).one_or_none()
            if record is None:
                raise MissingKey(f"Client '{client_id}' is not enrolled.")
            record.template = template
            record.template_bits = bits
            record.registered_at = datetime.now(timezone.utc)
            db.commit()

    def load_template(self, client_id: str):
        """
        Returns:
            tuple: (template bytes, number of ciphertexts).

        Raises:
            NoTemplate: If no template was registered for the client.
        """
        with self.SessionLocal() as db:
            record = db.query(ClientRecord).filter_by(client_id=client_id).one_or_none()
        if record is None or record.template is None:
            raise NoTemplate(f"No template registered for client '{client_id}'.")
        return record.template, record.template_bits

    def has_template(self, client_id: str) -> bool:
        with self.SessionLocal() as db:
            record = db.query(ClientRecord).filter_by(client_id=client_id).one_or_none()
        return record is not None and record.template is not None

    def count(self) -> int:
        with self.SessionLocal() as db:
            return db.query(ClientRecord).count()
