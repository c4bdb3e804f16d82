"""A complete emulated deployment: nodes, fabric, host, and saved state."""

from __future__ import annotations

import json
import random
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Sequence

from .adversary import Knowledge, adversary_knowledge, behaviour_of, make_node
from .errors import SetupError
from .fabric import AdversarySpec, Fabric
from .group import DomainParams, base_mul, params_from_config
from .host import Host, HostIdentity, QuorumConfig
from .node import ICNode, NodeIdentity
from .threshold import QuorumKey

STATE_VERSION = 1


class Board:
    """Provisioned nodes on one fabric, driven by one host."""

    def __init__(self, params: DomainParams, quorums: Sequence[QuorumConfig], seed: int = 0,
                 adversary: Optional[AdversarySpec] = None, *, seal_responses: bool = True,
                 share_proofs: bool = False, phase_budget: Optional[int] = None,
                 vendors: Optional[Mapping[int, str]] = None):
        if not quorums:
            raise SetupError("a board needs at least one quorum")
        ids = [q.quorum_id for q in quorums]
        if len(set(ids)) != len(ids):
            raise SetupError("quorum ids must be unique")
        self.params = params
        self.seed = seed
        self.quorums: Dict[str, QuorumConfig] = {q.quorum_id: q for q in quorums}
        self.options = {"seal_responses": seal_responses, "share_proofs": share_proofs,
                        "phase_budget": phase_budget}
        adversary = adversary or AdversarySpec()
        vendors = dict(vendors or {})
        for q in quorums:
            vendors.update({n: v for n, v in q.vendors.items() if n not in vendors})
        node_ids = sorted({n for q in quorums for n in q.nodes})
        stray = set(adversary.malicious) - set(node_ids)
        if stray:
            raise SetupError(f"malicious nodes {sorted(stray)} are not on the board")

        rng = random.Random(f"board/{seed}")
        identities = {n: NodeIdentity.issue(n, params, rng, vendor=vendors.get(n, ""))
                      for n in node_ids}
        host_id = HostIdentity.generate(params, rng, confidential=seal_responses)
        nodes = {n: make_node(n, adversary.malicious_nodes.get(n), seed, vendors.get(n, ""))
                 for n in node_ids}
        certs = [identities[n].certificate for n in node_ids]
        for n in node_ids:
            nodes[n].provision(params, [host_id.acl_entry()], identities[n], certs)
        self._assemble(adversary, nodes, host_id)

    def _assemble(self, adversary: AdversarySpec, nodes: Dict[int, ICNode],
                  host_id: HostIdentity) -> None:
        self.adversary = adversary
        self.fabric = Fabric(adversary, self.seed)
        self.nodes = nodes
        for n, node in sorted(nodes.items()):
            self.fabric.attach_node(node)
            if n in adversary.malicious:
                self.fabric.grant_key(n, node.state.identity.secret)
        directory = {n: node.state.identity.certificate for n, node in nodes.items()}
        self.host = Host(host_id, self.params, self.fabric, directory, self.seed,
                         seal_responses=self.options["seal_responses"],
                         share_proofs=self.options["share_proofs"],
                         phase_budget=self.options["phase_budget"])

    @classmethod
    def build(cls, params: DomainParams, sizes: Iterable[int] = (3,), **kwargs) -> "Board":
        """Quorums ``q1, q2, ...`` of the given sizes over consecutive node ids."""
        quorums, nxt = [], 1
        for i, t in enumerate(sizes, 1):
            quorums.append(QuorumConfig(f"q{i}", tuple(range(nxt, nxt + t))))
            nxt += t
        return cls(params, quorums, **kwargs)

    def quorum(self, quorum_id: Optional[str] = None) -> QuorumConfig:
        if quorum_id is None:
            return next(iter(self.quorums.values()))
        try:
            return self.quorums[quorum_id]
        except KeyError:
            raise SetupError(f"no quorum {quorum_id!r}; have {sorted(self.quorums)}") from None

    @property
    def malicious(self) -> Dict[int, ICNode]:
        return {n: self.nodes[n] for n in self.adversary.malicious}

    @property
    def transcript(self):
        return self.fabric.transcript

    def knowledge(self, key_id: bytes, quorum: Optional[QuorumConfig] = None) -> Knowledge:
        quorum = quorum or self.quorum(self.host.keys[key_id].quorum_id)
        return adversary_knowledge(self.params, self.transcript, self.malicious, key_id, quorum.nodes)

    # persistence

    def to_dict(self) -> dict:
        h = self.host
        return {
            "version": STATE_VERSION,
            "params": {"backend": self.params.backend.value, "n": self.params.n,
                       "toy_hash": self.params.toy_hash},
            "seed": self.seed,
            "options": self.options,
            "quorums": [{"id": q.quorum_id, "nodes": list(q.nodes), "threshold": q.threshold}
                        for q in self.quorums.values()],
            "malicious": {str(n): b for n, b in self.adversary.malicious_nodes.items()},
            "collusion": self.adversary.collusion_channel,
            "nodes": {str(n): {"behaviour": behaviour_of(node), "state": node.export_state()}
                      for n, node in self.nodes.items()},
            "host": {
                "addr": h.identity.addr,
                "secret": h.identity.secret.value,
                "seal_secret": h.identity.seal_secret.value if h.identity.seal_secret is not None else None,
                "seq": h._seq,
                "keys": {kid.hex(): {"Y_agg": k.Y_agg.encode().hex(), "quorum": k.quorum_id,
                                     "shares": {str(i): y.encode().hex() for i, y in k.shares.items()}}
                         for kid, k in h.keys.items()},
                "public_shares": [{"quorum": qid, "key": kid.hex(),
                                   "shares": {str(i): y.encode().hex() for i, y in s.items()}}
                                  for (qid, kid), s in h.public_shares.items()],
                "next_j": [{"quorum": qid, "key": kid.hex(), "j": j}
                           for (qid, kid), j in h.next_j.items()],
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Board":
        if data.get("version") != STATE_VERSION:
            raise SetupError("unsupported state file version")
        p = data["params"]
        params = params_from_config(p["backend"], p["n"], p["toy_hash"])
        board = cls.__new__(cls)
        board.params = params
        board.seed = data["seed"]
        board.options = dict(data["options"])
        board.quorums = {q["id"]: QuorumConfig(q["id"], tuple(q["nodes"]), q["threshold"])
                         for q in data["quorums"]}
        adversary = AdversarySpec({int(n): b for n, b in data["malicious"].items()},
                                  collusion_channel=data["collusion"])
        nodes = {}
        for n, entry in data["nodes"].items():
            node = make_node(int(n), entry["behaviour"], board.seed, entry["state"]["vendor"])
            node.import_state(params, entry["state"])
            nodes[int(n)] = node
        hd = data["host"]
        el = lambda s: params.decode_element(bytes.fromhex(s))  # noqa: E731
        secret = params.scalar(hd["secret"])
        seal_secret = params.scalar(hd["seal_secret"]) if hd["seal_secret"] is not None else None
        host_id = HostIdentity(hd["addr"], secret, base_mul(secret, params), seal_secret,
                               base_mul(seal_secret, params) if seal_secret is not None else None)
        board._assemble(adversary, nodes, host_id)
        h = board.host
        h._seq = hd["seq"]
        for kid, k in hd["keys"].items():
            q = board.quorums[k["quorum"]]
            shares = {int(i): el(y) for i, y in k["shares"].items()}
            h.keys[bytes.fromhex(kid)] = QuorumKey(bytes.fromhex(kid), el(k["Y_agg"]), shares,
                                                   q.quorum_id, q.threshold, q.size)
        for e in hd["public_shares"]:
            h.public_shares[(e["quorum"], bytes.fromhex(e["key"]))] = {
                int(i): el(y) for i, y in e["shares"].items()}
        for e in hd["next_j"]:
            h.next_j[(e["quorum"], bytes.fromhex(e["key"]))] = e["j"]
        return board

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))
        return path

    @classmethod
    def load(cls, path) -> "Board":
        return cls.from_dict(json.loads(Path(path).read_text()))
