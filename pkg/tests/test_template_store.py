import pytest

from services.btf_protocol.db import TemplateStore
from utils.errors import MissingKey, NoTemplate


@pytest.fixture
def store():
    return TemplateStore("sqlite://")


def test_enroll_and_template_round_trip(store):
    store.enroll("client-1", "desk", dk=b"\x01" * 20, iv=b"\x02" * 10)
    assert store.count() == 1
    assert not store.has_template("client-1")
    store.save_template("client-1", b"\xff" * 520, 2)
    assert store.has_template("client-1")
    assert store.load_template("client-1") == (b"\xff" * 520, 2)
    record = store.get("client-1")
    assert (record.params, record.iv, record.registered_at is not None) == ("desk", b"\x02" * 10, True)


def test_reenrolling_clears_the_template(store):
    store.enroll("client-1", "desk")
    store.save_template("client-1", b"\x00" * 4, 1)
    store.enroll("client-1", "desk")
    assert store.count() == 1
    assert not store.has_template("client-1")


def test_unknown_clients(store):
    with pytest.raises(MissingKey):
        store.get("nobody")
    with pytest.raises(MissingKey):
        store.save_template("nobody", b"", 0)
    with pytest.raises(NoTemplate):
        store.load_template("nobody")
    assert not store.has_template("nobody")


def test_file_database_persists(tmp_path):
    url = f"sqlite:///{tmp_path / 'templates.db'}"
    TemplateStore(url).enroll("client-1", "tfhe128")
    assert TemplateStore(url).count() == 1


def test_separate_memory_stores_are_isolated():
    first, second = TemplateStore(), TemplateStore()
    first.enroll("client-1", "desk")
    assert second.count() == 0
