"""Single-process simulation of the trusted party, key agent, cloud and clients."""
from __future__ import annotations

import random
from typing import Iterable, Sequence

from ..access import AccessTree, hash_attributes, parse_policy
from ..config import SystemConfig
from ..descriptor import ImageDescriptor, Vocabulary
from ..encvec import check_overflow
from ..errors import ProtocolError
from ..he import HEKey, HEParams
from . import prep
from .audit import AuditLog
from .entities import (Client, CloudServer, KeyAgent, Network, SearchResult, TrustedParty,
                       client_name)
from .messages import Kind, Message


class System:
    """All four entities wired to one in-process network.

    Public methods are the operator-facing steps: :meth:`tp_init`,
    :meth:`register`, :meth:`upload_basic`, :meth:`upload_advanced`,
    :meth:`search_basic` and :meth:`search_advanced`. Each one injects the
    initiating message(s) and runs the network until it is quiet.
    """

    def __init__(self, config: SystemConfig | None = None, rng: random.Random | None = None):
        self.config = config or SystemConfig()
        self.rng = rng or random.Random(self.config.seed)
        self.net = Network()
        self.tp = TrustedParty(random.Random(self.rng.getrandbits(64)))
        self.ka = KeyAgent(self.config)
        self.cs = CloudServer(self.config)
        for ent in (self.tp, self.ka, self.cs):
            self.net.attach(ent)
        self.clients: dict[str, Client] = {}
        self.policies: dict[str, AccessTree | None] = {}

    @property
    def log(self) -> AuditLog:
        return self.net.log

    @property
    def params(self) -> HEParams | None:
        return self.tp.params

    def tp_init(self) -> HEParams:
        params = self.tp.init(self.config.lambda_, self.config.m_lvl)
        self.net.run()
        return params

    def register(self, user: str, policy: str | AccessTree | None = None) -> Client:
        if self.params is None:
            raise ProtocolError("system not initialized")
        if user in self.clients:
            raise ProtocolError(f"user {user!r} already registered")
        client = Client(user, self.config, random.Random(self.rng.getrandbits(64)))
        self.net.attach(client)
        self.net.send(Message(client.name, "TP", Kind.REGISTER, {"user": user}))
        self.net.run()
        tree = parse_policy(policy) if isinstance(policy, str) else policy
        self.policies[user] = tree
        self.net.send(Message(client.name, "CS", Kind.POLICY, {"owner": user, "tree": tree}))
        self.net.run()
        self.clients[user] = client
        return client

    tp_register = register

    def _client(self, user: str) -> Client:
        if user not in self.clients:
            raise ProtocolError(f"unregistered user {user!r}")
        return self.clients[user]

    def _check_dim(self, images: Sequence[ImageDescriptor]) -> None:
        if images:
            check_overflow(max(img.dim for img in images), self.config.fxp, self.params)

    def upload_basic(self, user: str, images: Sequence[ImageDescriptor], seed: int | None = None) -> None:
        client = self._client(user)
        if not images:
            return
        self._check_dim(images)
        if seed is None:
            seed = prep.upload_seed(self.config, user, client.uploads)
        client.upload_basic(list(images), seed)
        self.net.run()

    def upload_advanced(self, user: str, images: Sequence[ImageDescriptor], seed: int | None = None,
                        vocab: Vocabulary | None = None) -> None:
        client = self._client(user)
        if not images:
            return
        v = vocab.v if vocab is not None else self.config.v
        check_overflow(v, self.config.fxp, self.params)
        if seed is None:
            seed = prep.upload_seed(self.config, user, client.uploads)
        client.upload_advanced(list(images), seed, self.policies.get(user), vocab)
        self.net.run()

    def _qid(self) -> bytes:
        return self.rng.getrandbits(128).to_bytes(16, "big")

    def _attrs(self, attrs: Iterable) -> frozenset[bytes]:
        attrs = list(attrs)
        if all(isinstance(a, bytes) for a in attrs):
            return frozenset(attrs)
        return hash_attributes(attrs)

    def search_basic(self, user: str, query_vectors, attrs: Iterable, k_nn: int | None = None,
                     beta: int | None = None) -> SearchResult:
        client = self._client(user)
        qid = self._qid()
        opts = {"k_nn": k_nn or self.config.k_nn, "beta": beta or self.config.beta,
                "workers": self.config.workers}
        client.start_basic_search(qid, query_vectors, self._attrs(attrs), opts)
        self.net.run()
        return client.results.pop(qid)

    def search_advanced(self, user: str, query_vectors, attrs: Iterable, theta: float | None = None,
                        theta_prime: float | None = None, k_nn: int | None = None,
                        beta: int | None = None) -> SearchResult:
        client = self._client(user)
        qid = self._qid()
        opts = {"k_nn": k_nn or self.config.k_nn, "beta": beta or self.config.beta,
                "workers": self.config.workers,
                "theta": prep.to_badness_threshold(theta, self.config),
                "theta_prime": prep.to_badness_threshold(theta_prime, self.config)}
        client.start_advanced_search(qid, query_vectors, self._attrs(attrs), opts)
        self.net.run()
        return client.results.pop(qid)

    def search(self, user: str, query_vectors, attrs: Iterable, **kw) -> SearchResult:
        if self.config.scheme == "basic":
            kw.pop("theta", None)
            kw.pop("theta_prime", None)
            return self.search_basic(user, query_vectors, attrs, **kw)
        return self.search_advanced(user, query_vectors, attrs, **kw)

    def set_workers(self, workers: int) -> None:
        self.config = self.config.with_overrides(workers=workers)
        for ent in (self.ka, self.cs, *self.clients.values()):
            ent.config = self.config

    def held_keys(self) -> dict[str, list[HEKey]]:
        """Every key each entity holds, for key-discipline checks."""
        out = {"KA": [self.ka.k_ka, *self.ka.user_keys.values()],
               "CS": [self.cs.k_cs, *self.cs.user_keys.values()]}
        for user, c in self.clients.items():
            out[client_name(user)] = [c.k_u]
        return out
