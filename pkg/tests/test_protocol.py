import itertools
import random

import numpy as np
import pytest

from picsearch import he
from picsearch.config import SystemConfig, parse_config
from picsearch.encvec import decrypt_vector
from picsearch.errors import ConfigError, MalformedFileError, ProtocolError
from picsearch.parallel import DistRecord
from picsearch.protocol import (ALL_PREDICATES, Kind, Message, PlainPipeline, System, audit_assert,
                                decode_frame, encode_frame)
from picsearch.protocol.audit import (Note, cs_blind, denied_no_phi, ka_distances_only,
                                      owners_silent, phi_count)
from picsearch.synth import clustered_images, noisy_copy

CFG = SystemConfig(lambda_=64, k_nn=3, seed=7)


def make(cfg=CFG, owners=(("alice", '(or "friend" "family")'), ("bob", "colleague")), n=12, per=6, dim=8):
    system, oracle = System(cfg), PlainPipeline(cfg)
    system.tp_init()
    corpora = {}
    for j, (name, policy) in enumerate(owners):
        system.register(name, policy)
        oracle.register(name, policy)
        corpora[name] = clustered_images(n, per, dim, seed=j + 1, prefix=name[0], centre_seed=0)
    system.register("quinn")
    for name, imgs in corpora.items():
        if cfg.scheme == "basic":
            system.upload_basic(name, imgs)
            oracle.upload_basic(name, imgs)
        else:
            system.upload_advanced(name, imgs)
            oracle.upload_advanced(name, imgs)
    return system, oracle, corpora


@pytest.fixture(scope="module")
def basic():
    return make()


@pytest.fixture(scope="module")
def advanced():
    return make(CFG.with_overrides(scheme="advanced", v=10, kmeans_iters=20), n=20, per=12)


def test_init_and_registration_errors():
    s = System(CFG)
    with pytest.raises(ProtocolError):
        s.register("early")
    s.tp_init()
    with pytest.raises(ProtocolError):
        s.tp_init()
    s.register("u")
    with pytest.raises(ProtocolError):
        s.register("u")
    with pytest.raises(ProtocolError):
        s.upload_basic("stranger", clustered_images(1, 2, 4))


def test_key_discipline(basic):
    system = basic[0]
    k = system.tp._k
    rng = random.Random(0)
    assert (system.ka.k_ka @ system.cs.k_cs).mat == k.mat
    for user, client in system.clients.items():
        shares = [client.k_u, system.ka.user_keys[user], system.cs.user_keys[user]]
        assert he.product(shares).mat == k.mat
        c = he.encrypt(777, shares[0], rng)
        c = he.convert_append(he.convert_append(c, shares[1]), shares[2])
        assert he.decrypt(c, k) == 777
    for ent, keys in system.held_keys().items():
        for r in range(1, len(keys) + 1):
            for perm in itertools.permutations(keys, r):
                assert he.product(list(perm)).mat != k.mat, ent
    # the KA share alone is not the master key
    c = he.encrypt(5, k, rng)
    assert he.decrypt(c, system.ka.k_ka) != 5


def test_stored_ciphertexts_decrypt_under_master(basic):
    system, oracle, corpora = basic
    k = system.tp._k
    img = corpora["alice"][2]
    for j in range(img.vectors.shape[0]):
        ref = next(r for r in system.cs.store if r.owner_id == "alice" and r.image_id == img.image_id
                   and r.ordinal == j)
        got = decrypt_vector(system.cs.store[ref], k, CFG.fxp)
        from picsearch.fixedpoint import encode_array
        assert list(got.coords) == encode_array(img.vectors[j], CFG.fxp).tolist()


def test_empty_upload_is_noop(basic):
    system = basic[0]
    before = len(system.log.events)
    system.upload_basic("alice", [])
    assert len(system.log.events) == before


def test_basic_search_matches_oracle(basic):
    system, oracle, corpora = basic
    target = corpora["bob"][5]
    res = system.search_basic("quinn", target.vectors, ["colleague", "friend"], beta=100)
    assert res.ranked[0][:2] == ("bob", target.image_id)
    for seed in range(4):
        q = noisy_copy(corpora["alice"][seed], 2.0, seed)
        for beta in (1, 2):
            res = system.search_basic("quinn", q, ["family", "colleague"], beta=beta)
            assert res.ranked == oracle.search_basic(q, ["family", "colleague"], beta=beta)
            assert res.permitted_owners == 2
            # every query vector casts k_nn votes
            assert sum(s for _, _, s in res.ranked) == len(q) * CFG.k_nn


def test_policy_filters_owners(basic):
    system, oracle, corpora = basic
    q = noisy_copy(corpora["bob"][1], 1.0)
    res = system.search_basic("quinn", q, ["friend"])
    assert res.permitted_owners == 1
    assert all(owner == "alice" for owner, _, _ in res.ranked)
    denied = system.search_basic("quinn", q, ["nobody"])
    assert denied.ranked == [] and denied.permitted_owners == 0 and denied.phi_count == 0
    assert phi_count(system.log, denied.query_id) == 0


def test_advanced_search_matches_oracle(advanced):
    system, oracle, corpora = advanced
    img = corpora["alice"][4]
    res = system.search_advanced("quinn", img.vectors, ["friend", "colleague"])
    assert ("alice", img.image_id, 0) in res.ranked
    for seed in range(4):
        q = noisy_copy(corpora["bob"][seed], 3.0, seed)
        res = system.search_advanced("quinn", q, ["friend", "colleague"])
        assert res.ranked == oracle.search_advanced(q, ["friend", "colleague"])
        assert len(res.ranked) >= CFG.k_nn
    only_bob = system.search_advanced("quinn", img.vectors, ["colleague"])
    assert only_bob.ranked and all(o == "bob" for o, _, _ in only_bob.ranked)


def test_audit_predicates_on_trace(basic, advanced):
    fresh = System(CFG)
    assert all(audit_assert(fresh.log, p) for p in ALL_PREDICATES.values())
    for system, _, _ in (basic, advanced):
        for name, pred in ALL_PREDICATES.items():
            assert audit_assert(system.log, pred), name


def test_audit_catches_misrouting(basic):
    system, _, corpora = basic
    stored_ref, stored = next(iter(system.cs.store.items()))
    log = system.log
    # CS receiving a vector under only its own share is a leak
    leaked = Message("client:alice", "CS", Kind.UPLOAD_CONVERTED,
                     {"items": [(stored_ref, type(stored)(stored.cts, ("k_u'':alice",)))]})
    copy = type(log)(list(log.events) + [leaked])
    assert not cs_blind(copy)
    # KA receiving an uploaded vector at the stage it can strip
    to_ka = Message("client:alice", "KA", Kind.UPLOAD,
                    {"items": [(stored_ref, type(stored)(stored.cts, ("k_u':alice",)))]})
    assert not ka_distances_only(type(log)(list(log.events) + [to_ka]))
    # distances under the full key reaching KA
    rec = DistRecord(stored_ref, enc=stored.cts[0], key_tag=("k_KA", "k_CS"))
    bad = Message("CS", "KA", Kind.DIST_BATCH, {"records": [rec]}, b"q" * 16)
    assert not ka_distances_only(type(log)(list(log.events) + [bad]))
    # an owner contacted during someone else's search
    some_q = next(m.query_id for m in log.messages if m.kind == Kind.QUERY)
    poke = Message("CS", "client:bob", Kind.RESULT, {}, some_q)
    assert not owners_silent(type(log)(list(log.events) + [poke]))
    # a denied query that computed distances anyway
    denied = next(m.query_id for m in log.messages
                  if m.kind == Kind.RESULT and m.payload["permitted_owners"] == 0)
    assert not denied_no_phi(type(log)(list(log.events) + [Note("CS", "phi", denied, 3)]))


def test_frame_codec():
    qid = bytes(range(16))
    frame = encode_frame(Kind.QUERY, b"payload", qid)
    assert frame[:4] == b"PIC1"
    assert decode_frame(frame) == (Kind.QUERY, qid, b"payload")
    kind, q, body = decode_frame(encode_frame(Kind.REGISTER, b""))
    assert kind == Kind.REGISTER and q is None and body == b""
    with pytest.raises(MalformedFileError):
        decode_frame(b"XXXX" + frame[4:])
    with pytest.raises(MalformedFileError):
        decode_frame(frame[:-1])


def test_config_text_round_trip():
    cfg = SystemConfig(lambda_=96, scheme="advanced", beta=3, kernel="dot")
    assert parse_config(cfg.to_text()) == cfg
    assert parse_config("lambda = 64\n# comment\nk_nn=2\n").lambda_ == 64
    with pytest.raises(ConfigError):
        parse_config("scheme = fancy")
    with pytest.raises(ConfigError):
        parse_config("nonsense = 1")
