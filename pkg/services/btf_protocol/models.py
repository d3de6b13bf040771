"""
SQLAlchemy ORM models for the BTF server's per-client records.

Defines the btf_client table: one row per enrolled client holding the
recovered homomorphic decryption key, the public IV and the encrypted
template.
"""

from sqlalchemy.orm import declarative_base
from sqlalchemy import Column, Integer, String, DateTime, LargeBinary, func, text

Base = declarative_base()


class ClientRecord(Base):
    """
    ORM model for the btf_client table.

    Attributes:
        id (int): Primary key, auto-incremented.
        client_id (str): Client identifier, unique per server.
        params (str): Parameter set name the blobs were produced under.
        dk (bytes): Serialized homomorphic decryption key (80 ciphertexts); unset for ST-FHE clients.
        iv (bytes): 10-byte Trivium IV; unset for ST-FHE clients.
        template (bytes): Serialized Enc(w), nullable until registration.
        template_bits (int): Number of ciphertexts in the template.
        enrolled_at (datetime): When the key distribution phase finished.
        registered_at (datetime): When the template was stored.
    """
    __tablename__ = "btf_client"

    id = Column(Integer, primary_key=True, autoincrement=True)
    client_id = Column(String(64), nullable=False, unique=True, index=True)
    params = Column(String(16), nullable=False)
    dk = Column(LargeBinary, nullable=True)
    iv = Column(LargeBinary(10), nullable=True)
    template = Column(LargeBinary, nullable=True)
    template_bits = Column(Integer, default=0, nullable=False)
    enrolled_at = Column(
        DateTime,
        nullable=False,
        default=func.now(),
        server_default=text("CURRENT_TIMESTAMP")
    )
    registered_at = Column(DateTime, nullable=True)
